#include "compresid/simstudy.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "compresid/error.hpp"
#include "compresid/io.hpp"
#include "compresid/parallel.hpp"
#include "compresid/special.hpp"

namespace compresid {

// ---------------------------------------------------------------------------
// Summaries
// ---------------------------------------------------------------------------

SampleSummary summary_statistics(std::span<const double> samples) {
  const std::size_t m = samples.size();
  if (m < 4) throw UsageError("summary_statistics needs at least 4 values");
  const double count = static_cast<double>(m);
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / count;
  double m2 = 0.0;
  double m3 = 0.0;
  double m4 = 0.0;
  for (const double x : samples) {
    const double d = x - mean;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  if (m2 <= 0.0) throw UsageError("summary_statistics: sample has zero variance");
  const double variance = m2 / (count - 1.0);
  m2 /= count;
  m3 /= count;
  m4 /= count;
  return {mean, variance, m3 / std::pow(m2, 1.5), m4 / (m2 * m2)};
}

AndersonDarling anderson_darling(std::span<const double> samples) {
  const std::size_t m = samples.size();
  if (m == 0) throw UsageError("anderson_darling needs at least one value");
  std::vector<double> z(samples.begin(), samples.end());
  for (const double v : z) {
    if (!std::isfinite(v)) throw UsageError("anderson_darling: non-finite value");
  }
  std::sort(z.begin(), z.end());
  std::size_t clamped = 0;
  std::vector<double> cdf(m);
  for (std::size_t i = 0; i < m; ++i) {
    double p = std_normal_cdf(z[i]);
    if (p < kCdfClamp || p > 1.0 - kCdfClamp) {
      p = std::clamp(p, kCdfClamp, 1.0 - kCdfClamp);
      ++clamped;
    }
    cdf[i] = p;
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double weight = 2.0 * static_cast<double>(i + 1) - 1.0;
    sum += weight * (std::log(cdf[i]) + std::log1p(-cdf[m - 1 - i]));
  }
  const double count = static_cast<double>(m);
  return {-count - sum / count, clamped};
}

double ad_statistic(std::span<const double> samples) {
  return anderson_darling(samples).statistic;
}

// ---------------------------------------------------------------------------
// Scenario registry
// ---------------------------------------------------------------------------

namespace {

constexpr std::uint64_t kCovariateTag = 0x636f76ull;
constexpr std::uint64_t kResponseTag = 0x726573ull;
constexpr std::uint64_t kBootstrapTag = 0x626f6f74ull;
constexpr std::uint64_t kCorrectTag = 0x70777231ull;
constexpr std::uint64_t kWrongTag = 0x70777232ull;

// Slopes shared by every scenario; scenarios 2 and 3 only move the
// intercepts. Those intercepts come from calibrate_intercepts() against the
// published average mean vectors, rounded to 4 decimals.
constexpr double kSlopeOwn = 1.0;
constexpr double kSlopeOther = -0.5;

struct Intercepts {
  double b2;
  double b3;
};

constexpr Intercepts kScenario1 = {-0.3, -0.3};
constexpr Intercepts kScenario2 = {-0.9823, 0.4004};  // mean (0.290, 0.151, 0.559)
constexpr Intercepts kScenario3 = {-2.1857, 0.4968};  // mean (0.308, 0.049, 0.643)

}  // namespace

std::vector<std::string> scenario_ids() {
  return {"1a", "2a", "3a", "4a", "5a", "1b", "2b", "3b", "4b", "5b"};
}

ScenarioConfig scenario_config(std::string_view id, std::size_t n) {
  if (id.size() != 2 || id[0] < '1' || id[0] > '5' || (id[1] != 'a' && id[1] != 'b')) {
    throw UsageError("unknown scenario '" + std::string(id) + "' (expected 1a..5a or 1b..5b)");
  }
  if (n < 10) throw UsageError("scenario sample size must be at least 10");
  const int number = id[0] - '0';
  ScenarioConfig cfg;
  cfg.id = std::string(id);
  cfg.n = n;
  cfg.gamma1 = id[1] == 'a' ? 3.0 : 4.6;
  cfg.covariate_law = number == 5 ? CovariateLaw::bernoulli_gamma : CovariateLaw::uniform;
  const Intercepts icpt = number == 2 ? kScenario2 : number == 3 ? kScenario3 : kScenario1;
  cfg.coefficients.beta = {Eigen::Vector3d(icpt.b2, kSlopeOwn, kSlopeOther),
                           Eigen::Vector3d(icpt.b3, kSlopeOther, kSlopeOwn)};
  cfg.coefficients.gamma =
      number == 4 ? Eigen::Vector3d(cfg.gamma1, 0.5, -0.5) : Eigen::Vector3d(cfg.gamma1, 0.0, 0.0);
  return cfg;
}

ModelSpec scenario_model_spec() {
  const Submodel full{true, {"x2", "x3"}};
  return ModelSpec::uniform(3, full, full);
}

Eigen::MatrixXd draw_scenario_covariates(const ScenarioConfig& cfg, RngStream& rng) {
  const auto n = static_cast<Eigen::Index>(cfg.n);
  Eigen::MatrixXd x(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (cfg.covariate_law == CovariateLaw::uniform) {
      x(i, 0) = rng.next_uniform();
      x(i, 1) = rng.next_uniform();
    } else {
      x(i, 0) = rng.next_uniform() < 0.5 ? 1.0 : 0.0;
      // Gamma(shape 3, rate 6): mean 1/2, variance 1/12 like U(0, 1).
      x(i, 1) = sample_gamma(3.0, rng) / 6.0;
    }
  }
  return x;
}

Dataset simulate_scenario_responses(const ScenarioConfig& cfg, const Eigen::MatrixXd& covariates,
                                    RngStream& rng) {
  Dataset data;
  data.component_names = {"y1", "y2", "y3"};
  data.covariate_names = {"x2", "x3"};
  data.covariates = covariates;
  data.responses = Eigen::MatrixXd::Constant(covariates.rows(), 3, 1.0 / 3.0);
  const Design design(scenario_model_spec(), data);
  const FittedValues truth = design.predict(cfg.coefficients.flatten());
  data.responses = sample_rows(truth.mu, truth.phi, rng);
  return data;
}

Dataset generate_scenario_dataset(const ScenarioConfig& cfg, RngStream& rng) {
  const Eigen::MatrixXd x = draw_scenario_covariates(cfg, rng);
  return simulate_scenario_responses(cfg, x, rng);
}

namespace {

// 32-point Gauss-Legendre nodes/weights mapped to [0, 1].
void legendre_01(int order, std::vector<double>& nodes, std::vector<double>& weights) {
  nodes.resize(static_cast<std::size_t>(order));
  weights.resize(static_cast<std::size_t>(order));
  for (int i = 0; i < order; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (order + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0;
      double p1 = x;
      for (int k = 2; k <= order; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = order * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::fabs(dx) < 1e-15) break;
    }
    nodes[static_cast<std::size_t>(i)] = 0.5 * (x + 1.0);
    weights[static_cast<std::size_t>(i)] = 1.0 / ((1.0 - x * x) * dp * dp);
  }
}

}  // namespace

Eigen::Vector3d uniform_design_mean(const CoefficientVector& coef) {
  std::vector<double> nodes;
  std::vector<double> weights;
  legendre_01(32, nodes, weights);
  Eigen::Vector3d average = Eigen::Vector3d::Zero();
  for (std::size_t a = 0; a < nodes.size(); ++a) {
    for (std::size_t b = 0; b < nodes.size(); ++b) {
      const Eigen::Vector3d x(1.0, nodes[a], nodes[b]);
      Eigen::Vector3d eta(0.0, x.dot(coef.beta[0]), x.dot(coef.beta[1]));
      eta = (eta.array() - eta.maxCoeff()).exp();
      average += weights[a] * weights[b] * eta / eta.sum();
    }
  }
  return average;
}

Eigen::Vector2d calibrate_intercepts(const CoefficientVector& coef, const Eigen::Vector3d& target) {
  CoefficientVector c = coef;
  auto residual = [&](const Eigen::Vector2d& b) {
    c.beta[0][0] = b[0];
    c.beta[1][0] = b[1];
    const Eigen::Vector3d m = uniform_design_mean(c);
    return Eigen::Vector2d(std::log(m[1] / m[0]) - std::log(target[1] / target[0]),
                           std::log(m[2] / m[0]) - std::log(target[2] / target[0]));
  };
  Eigen::Vector2d b(coef.beta[0][0], coef.beta[1][0]);
  for (int iter = 0; iter < 100; ++iter) {
    const Eigen::Vector2d r = residual(b);
    if (r.cwiseAbs().maxCoeff() < 1e-13) break;
    Eigen::Matrix2d jac;
    for (int d = 0; d < 2; ++d) {
      Eigen::Vector2d step = b;
      step[d] += 1e-6;
      jac.col(d) = (residual(step) - r) / 1e-6;
    }
    b -= jac.partialPivLu().solve(r);
  }
  return b;
}

// ---------------------------------------------------------------------------
// Scenario study
// ---------------------------------------------------------------------------

SummaryTable run_scenario_study(const ScenarioConfig& cfg, const StudyOptions& options) {
  if (options.replicates < 4) throw UsageError("scenario study needs at least 4 replicates");
  const auto n = static_cast<Eigen::Index>(cfg.n);
  const std::size_t reps = options.replicates;

  RngStream cov_rng(derive_seed(options.seed, kCovariateTag), 0);
  const Eigen::MatrixXd covariates = draw_scenario_covariates(cfg, cov_rng);
  const ModelSpec spec = scenario_model_spec();

  // s[kind] is replicates x n.
  std::array<Eigen::MatrixXd, 4> s;
  for (auto& m : s) m.resize(static_cast<Eigen::Index>(reps), n);
  std::vector<std::size_t> redraws(reps, 0);
  std::vector<std::size_t> failures(reps, 0);
  std::atomic<std::size_t> done{0};
  std::mutex progress_mutex;

  const std::uint64_t response_seed = derive_seed(options.seed, kResponseTag);
  const std::uint64_t bootstrap_seed = derive_seed(options.seed, kBootstrapTag);

  parallel_for(reps, options.threads, [&](std::size_t r) {
    const RngStream primary(response_seed, r + 1);
    for (std::size_t attempt = 0; attempt <= options.max_redraws; ++attempt) {
      RngStream rng = attempt == 0 ? primary : primary.substream(attempt);
      const Dataset data = simulate_scenario_responses(cfg, covariates, rng);
      try {
        const FittedModel fit = fit_mle(spec, data);
        if (!fit.converged) throw FitError("scenario fit did not converge");
        BootstrapConfig boot;
        boot.B = options.B;
        boot.seed = derive_seed(bootstrap_seed, (r + 1) * 64 + attempt);
        const auto results = class_residuals(fit, data, kClassKinds, boot);
        for (std::size_t c = 0; c < 4; ++c) {
          s[c].row(static_cast<Eigen::Index>(r)) = results[c].s.transpose();
        }
        failures[r] = results[0].replicate_failures;
      } catch (const FitError&) {
        ++redraws[r];
        continue;
      } catch (const ReplicateFailureError&) {
        ++redraws[r];
        continue;
      }
      if (options.progress) {
        const std::size_t now = ++done;
        std::lock_guard lock(progress_mutex);
        options.progress(now, reps);
      }
      return;
    }
    throw ReplicateFailureError("scenario replicate kept failing", r + 1);
  });

  SummaryTable table;
  table.scenario = cfg.id;
  table.n = cfg.n;
  table.replicates = reps;
  table.B = options.B;
  table.seed = options.seed;
  table.covariates = covariates;
  table.response_redraws = std::accumulate(redraws.begin(), redraws.end(), std::size_t{0});
  table.replicate_failures = std::accumulate(failures.begin(), failures.end(), std::size_t{0});
  table.values.resize(cfg.n);

  std::vector<double> column(reps);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 4; ++c) {
      for (std::size_t r = 0; r < reps; ++r) column[r] = s[c](static_cast<Eigen::Index>(r), i);
      const SampleSummary m = summary_statistics(column);
      auto& row = table.values[static_cast<std::size_t>(i)];
      row[0][c] = m.mean;
      row[1][c] = m.variance;
      row[2][c] = m.skewness;
      row[3][c] = m.kurtosis;
      row[4][c] = ad_statistic(column);
    }
  }
  const double count = static_cast<double>(cfg.n);
  for (std::size_t stat = 0; stat < kStatCount; ++stat) {
    for (std::size_t c = 0; c < 4; ++c) {
      double sum = 0.0;
      for (const auto& row : table.values) sum += row[stat][c];
      const double mean = sum / count;
      double ss = 0.0;
      for (const auto& row : table.values) ss += (row[stat][c] - mean) * (row[stat][c] - mean);
      table.column_mean[stat][c] = mean;
      table.column_sd[stat][c] = cfg.n > 1 ? std::sqrt(ss / (count - 1.0)) : 0.0;
    }
  }
  return table;
}

std::string summary_table_csv(const SummaryTable& table) {
  std::ostringstream out;
  out << schema_line("summary") << '\n'
      << "# scenario=" << table.scenario << " n=" << table.n << " replicates=" << table.replicates
      << " B=" << table.B << " seed=" << table.seed << " response_redraws=" << table.response_redraws
      << " replicate_failures=" << table.replicate_failures << '\n'
      << 'i';
  for (std::size_t stat = 0; stat < kStatCount; ++stat) {
    for (const auto kind : kClassKinds) out << ',' << kStatNames[stat] << '_' << kind_name(kind);
  }
  out << '\n';
  auto emit = [&](const std::string& label, const std::array<std::array<double, 4>, kStatCount>& v) {
    out << label;
    for (std::size_t stat = 0; stat < kStatCount; ++stat) {
      for (std::size_t c = 0; c < 4; ++c) out << ',' << format_double(v[stat][c]);
    }
    out << '\n';
  };
  for (std::size_t i = 0; i < table.values.size(); ++i) emit(std::to_string(i + 1), table.values[i]);
  emit("Mean", table.column_mean);
  emit("SD", table.column_sd);
  return out.str();
}

// ---------------------------------------------------------------------------
// Power study
// ---------------------------------------------------------------------------

MixtureConfig MixtureConfig::standard_sets() {
  const double phi = std::exp(4.6);
  auto law = [phi](double a, double b, double c) {
    return DirichletParams{Eigen::Vector3d(a, b, c), phi};
  };
  MixtureConfig mix;
  // Cells (x2, x3) = (0,0), (1,0), (0,1), (1,1).
  mix.set1 = {law(0.35, 0.35, 0.30), law(0.80, 0.15, 0.05), law(0.05, 0.80, 0.15),
              law(0.15, 0.05, 0.80)};
  // The (0,0) law of the second set is specified as (0.30, 0.30, 0.35), which
  // sums to 0.95, so it is rescaled onto the simplex.
  mix.set2 = {law(0.30 / 0.95, 0.30 / 0.95, 0.35 / 0.95), law(0.40, 0.35, 0.25), law(0.25, 0.40, 0.35),
              law(0.35, 0.25, 0.40)};
  mix.weight = 0.7;
  return mix;
}

ModelSpec power_model_spec() {
  return ModelSpec::uniform(3, Submodel{true, {"x2", "x3", "x2x3"}}, Submodel{true, {}});
}

Dataset draw_power_covariates(std::size_t n, RngStream& rng) {
  const auto rows = static_cast<Eigen::Index>(n);
  Dataset data;
  data.component_names = {"y1", "y2", "y3"};
  data.covariate_names = {"x2", "x3", "x2x3"};
  data.covariates.resize(rows, 3);
  for (;;) {
    std::array<int, 4> cell_counts{};
    for (Eigen::Index i = 0; i < rows; ++i) {
      const double x2 = rng.next_uniform() < 0.5 ? 1.0 : 0.0;
      const double x3 = rng.next_uniform() < 0.5 ? 1.0 : 0.0;
      data.covariates.row(i) << x2, x3, x2 * x3;
      ++cell_counts[static_cast<std::size_t>(x2 + 2 * x3)];
    }
    if (*std::min_element(cell_counts.begin(), cell_counts.end()) >= 2) break;
  }
  data.responses = Eigen::MatrixXd::Constant(rows, 3, 1.0 / 3.0);
  return data;
}

Dataset simulate_power_responses(const Dataset& design, const MixtureConfig& mix,
                                 double weight_set1, RngStream& rng) {
  Dataset data = design;
  Eigen::VectorXd row(3);
  for (Eigen::Index i = 0; i < data.covariates.rows(); ++i) {
    const auto cell = static_cast<std::size_t>(data.covariates(i, 0) + 2 * data.covariates(i, 1));
    const bool first = weight_set1 >= 1.0 || rng.next_uniform() < weight_set1;
    const DirichletParams& law = first ? mix.set1[cell] : mix.set2[cell];
    sample_into(law.mu, law.phi, rng, row);
    data.responses.row(i) = row.transpose();
  }
  return data;
}

double PowerStudyResult::threshold(ResidualKind kind) const {
  return is_class_kind(kind) ? v_class : v_composite;
}

double PowerStudyResult::flag_rate(ResidualKind kind, bool wrong_model) const {
  const auto& counts = wrong_model ? flagged_wrong.at(kind) : flagged_correct.at(kind);
  if (counts.empty()) return 0.0;
  const auto flagged = std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; });
  return static_cast<double>(flagged) / static_cast<double>(counts.size());
}

namespace {

// Envelopes for every kind on `count` datasets drawn with the given weight.
std::vector<std::map<ResidualKind, EnvelopeResult>> power_phase(
    const MixtureConfig& mix, const PowerStudyOptions& options, std::size_t count,
    double weight_set1, std::uint64_t phase_seed, std::size_t& redraw_total,
    std::atomic<std::size_t>& done, std::size_t total, std::mutex& progress_mutex) {
  std::vector<std::map<ResidualKind, EnvelopeResult>> envelopes(count);
  std::vector<std::size_t> redraws(count, 0);
  const ModelSpec spec = power_model_spec();
  parallel_for(count, options.threads, [&](std::size_t j) {
    const RngStream primary(phase_seed, j + 1);
    for (std::size_t attempt = 0; attempt <= 20; ++attempt) {
      RngStream rng = attempt == 0 ? primary : primary.substream(attempt);
      const Dataset design = draw_power_covariates(options.n, rng);
      const Dataset data = simulate_power_responses(design, mix, weight_set1, rng);
      try {
        const FittedModel fit = fit_mle(spec, data);
        if (!fit.converged) throw FitError("power study fit did not converge");
        EnvelopeConfig env;
        env.R = options.R;
        env.inner_B = options.inner_B;
        env.bootstrap.B = options.B;
        env.bootstrap.seed = derive_seed(phase_seed, (j + 1) * 64 + attempt);
        envelopes[j] = simulated_envelopes(fit, data, kAllKinds, env);
      } catch (const FitError&) {
        ++redraws[j];
        continue;
      } catch (const ReplicateFailureError&) {
        ++redraws[j];
        continue;
      }
      if (options.progress) {
        const std::size_t now = ++done;
        std::lock_guard lock(progress_mutex);
        options.progress(now, total);
      }
      return;
    }
    throw ReplicateFailureError("power study dataset kept failing", j + 1);
  });
  redraw_total += std::accumulate(redraws.begin(), redraws.end(), std::size_t{0});
  return envelopes;
}

}  // namespace

PowerStudyResult run_power_study(const MixtureConfig& mix, const PowerStudyOptions& options) {
  if (options.g_correct < 20) throw UsageError("power study needs g_correct >= 20");
  PowerStudyResult result;
  result.options = options;
  std::atomic<std::size_t> done{0};
  std::mutex progress_mutex;
  const std::size_t total = options.g_correct + options.g_wrong;

  const auto correct = power_phase(mix, options, options.g_correct, 1.0,
                                   derive_seed(options.seed, kCorrectTag), result.dataset_redraws,
                                   done, total, progress_mutex);
  std::vector<double> pooled_class;
  std::vector<double> pooled_composite;
  for (const auto kind : kAllKinds) {
    auto& e = result.e_correct[kind];
    for (const auto& env : correct) e.push_back(env.at(kind).e);
    auto& pool = is_class_kind(kind) ? pooled_class : pooled_composite;
    pool.insert(pool.end(), e.begin(), e.end());
  }
  result.v_class = estimate_v(pooled_class);
  result.v_composite = estimate_v(pooled_composite);
  for (const auto kind : kAllKinds) {
    auto& counts = result.flagged_correct[kind];
    for (const auto& env : correct) {
      counts.push_back(detect_misspecification(env.at(kind), result.threshold(kind)).flagged_points);
    }
  }

  const auto wrong = power_phase(mix, options, options.g_wrong, mix.weight,
                                 derive_seed(options.seed, kWrongTag), result.dataset_redraws, done,
                                 total, progress_mutex);
  for (const auto kind : kAllKinds) {
    auto& counts = result.flagged_wrong[kind];
    for (const auto& env : wrong) {
      counts.push_back(detect_misspecification(env.at(kind), result.threshold(kind)).flagged_points);
    }
  }
  return result;
}

std::string power_histogram_csv(const PowerStudyResult& result) {
  std::ostringstream out;
  const auto& o = result.options;
  out << schema_line("power") << '\n'
      << "# g_correct=" << o.g_correct << " g_wrong=" << o.g_wrong << " n=" << o.n << " R=" << o.R
      << " B=" << o.B << " inner_B=" << o.inner_B << " seed=" << o.seed
      << " dataset_redraws=" << result.dataset_redraws << '\n'
      << "# v_class=" << format_double(result.v_class)
      << " v_composite=" << format_double(result.v_composite) << '\n'
      << "phase,kind,flagged_points,datasets\n";
  auto emit = [&](const char* phase, const std::map<ResidualKind, std::vector<std::size_t>>& all) {
    for (const auto kind : kAllKinds) {
      const auto& counts = all.at(kind);
      const std::size_t top = counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
      for (std::size_t c = 0; c <= top; ++c) {
        const auto hits = std::count(counts.begin(), counts.end(), c);
        out << phase << ',' << kind_name(kind) << ',' << c << ',' << hits << '\n';
      }
    }
  };
  emit("correct", result.flagged_correct);
  emit("wrong", result.flagged_wrong);
  return out.str();
}

}  // namespace compresid
