#include "compresid/envelope.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <vector>

#include "compresid/dirichlet.hpp"
#include "compresid/error.hpp"
#include "compresid/io.hpp"
#include "compresid/parallel.hpp"
#include "compresid/rng.hpp"
#include "compresid/special.hpp"

namespace compresid {

namespace {
constexpr std::uint64_t kEnvelopeTag = 0x656e76656c6f7065ull;
}

Eigen::VectorXd blom_quantiles(std::size_t n) {
  Eigen::VectorXd z(static_cast<Eigen::Index>(n));
  const double denom = static_cast<double>(n) + 0.25;
  for (std::size_t i = 0; i < n; ++i) {
    z[static_cast<Eigen::Index>(i)] = std_normal_quantile((static_cast<double>(i + 1) - 0.375) / denom);
  }
  return z;
}

double sorted_quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw UsageError("quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

EnvelopeResult build_envelope(const Eigen::VectorXd& observed, const Eigen::MatrixXd& simulated,
                              double lower_percentile, double upper_percentile) {
  const Eigen::Index n = observed.size();
  if (n == 0) throw UsageError("envelope of an empty residual vector");
  if (simulated.cols() != n || simulated.rows() < 2) {
    throw UsageError("envelope needs at least 2 simulated residual vectors of length n");
  }
  if (!(0.0 <= lower_percentile && lower_percentile < upper_percentile && upper_percentile <= 1.0)) {
    throw UsageError("envelope percentiles must satisfy 0 <= lower < upper <= 1");
  }
  const Eigen::Index R = simulated.rows();

  // Sort each simulated vector, then take quantiles down each order position.
  std::vector<std::vector<double>> by_position(static_cast<std::size_t>(n),
                                               std::vector<double>(static_cast<std::size_t>(R)));
  std::vector<double> row(static_cast<std::size_t>(n));
  for (Eigen::Index r = 0; r < R; ++r) {
    for (Eigen::Index i = 0; i < n; ++i) row[static_cast<std::size_t>(i)] = simulated(r, i);
    std::sort(row.begin(), row.end());
    for (Eigen::Index i = 0; i < n; ++i) {
      by_position[static_cast<std::size_t>(i)][static_cast<std::size_t>(r)] = row[static_cast<std::size_t>(i)];
    }
  }

  EnvelopeResult env;
  env.sorted_residuals = observed;
  std::sort(env.sorted_residuals.data(), env.sorted_residuals.data() + n);
  env.theoretical_quantiles = blom_quantiles(static_cast<std::size_t>(n));
  env.lower_band.resize(n);
  env.upper_band.resize(n);
  env.median_band.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    auto& column = by_position[static_cast<std::size_t>(i)];
    std::sort(column.begin(), column.end());
    env.lower_band[i] = sorted_quantile(column, lower_percentile);
    env.upper_band[i] = sorted_quantile(column, upper_percentile);
    env.median_band[i] = sorted_quantile(column, 0.5);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const double r = env.sorted_residuals[i];
    double distance = 0.0;
    if (r > env.upper_band[i]) {
      distance = r - env.upper_band[i];
    } else if (r < env.lower_band[i]) {
      distance = env.lower_band[i] - r;
    }
    if (distance > 0.0) {
      ++env.outside_count;
      env.e = std::max(env.e, distance);
    }
  }
  return env;
}

std::map<ResidualKind, Eigen::VectorXd> plotted_residuals(const Design& design,
                                                          const FittedModel& fit,
                                                          const Eigen::MatrixXd& y,
                                                          std::span<const ResidualKind> kinds,
                                                          const BootstrapConfig& bootstrap) {
  std::map<ResidualKind, Eigen::VectorXd> out;
  std::vector<ResidualKind> class_kinds;
  const FittedValues fv = fit.fitted_values();
  for (const auto kind : kinds) {
    if (is_class_kind(kind)) {
      class_kinds.push_back(kind);
    } else {
      out[kind] = composite_residuals(y, fv, kind);
    }
  }
  if (!class_kinds.empty()) {
    auto results = bootstrap_class_residuals(y, fv, mle_refitter(design, fit), class_kinds, bootstrap);
    for (auto& r : results) out[r.kind] = std::move(r.s);
  }
  return out;
}

std::map<ResidualKind, EnvelopeResult> simulated_envelopes(const FittedModel& fit,
                                                           const Dataset& data,
                                                           std::span<const ResidualKind> kinds,
                                                           const EnvelopeConfig& cfg) {
  if (cfg.R < 2) throw UsageError("envelope needs R >= 2 simulations");
  if (kinds.empty()) throw UsageError("no residual kinds requested");
  if (!fit.converged) throw FitError("envelope needs a converged fit");
  data.validate();
  const Design design(fit.spec, data);
  const auto n = static_cast<Eigen::Index>(data.n());

  const auto observed = plotted_residuals(design, fit, data.responses, kinds, cfg.bootstrap);

  BootstrapConfig inner = cfg.bootstrap;
  inner.B = cfg.inner_B > 0 ? cfg.inner_B : cfg.bootstrap.B;
  inner.keep_replicates = false;

  const std::uint64_t base = derive_seed(cfg.bootstrap.seed, kEnvelopeTag);
  std::map<ResidualKind, Eigen::MatrixXd> simulated;
  for (const auto kind : kinds) simulated[kind] = Eigen::MatrixXd(static_cast<Eigen::Index>(cfg.R), n);

  FitOptions options;
  options.init = fit.coef.flatten();
  options.init_inverse_hessian = fit.inverse_hessian;
  const FittedValues fv = fit.fitted_values();

  parallel_for(cfg.R, cfg.bootstrap.threads, [&](std::size_t r) {
    const RngStream primary(base, r + 1);
    for (std::size_t attempt = 0; attempt <= cfg.bootstrap.max_retries_per_replicate; ++attempt) {
      RngStream rng = attempt == 0 ? primary : primary.substream(attempt);
      const Eigen::MatrixXd ys = sample_rows(fv.mu, fv.phi, rng);
      FittedModel fs;
      try {
        const Likelihood lik(design, ys);
        fs = fit_mle(lik, *options.init, options);
        if (!fs.converged) continue;
      } catch (const FitError&) {
        continue;
      }
      BootstrapConfig inner_r = inner;
      inner_r.seed = derive_seed(base, r + 1);
      try {
        const auto values = plotted_residuals(design, fs, ys, kinds, inner_r);
        for (const auto& [kind, v] : values) simulated.at(kind).row(static_cast<Eigen::Index>(r)) = v.transpose();
      } catch (const ReplicateFailureError&) {
        continue;
      }
      return;
    }
    throw ReplicateFailureError("envelope simulation failed after retries", r + 1);
  });

  std::map<ResidualKind, EnvelopeResult> out;
  for (const auto kind : kinds) {
    out[kind] = build_envelope(observed.at(kind), simulated.at(kind), cfg.lower_percentile,
                               cfg.upper_percentile);
  }
  return out;
}

EnvelopeResult simulated_envelope(const FittedModel& fit, const Dataset& data, ResidualKind kind,
                                  const EnvelopeConfig& cfg) {
  const std::array<ResidualKind, 1> one = {kind};
  return simulated_envelopes(fit, data, one, cfg).at(kind);
}

double estimate_v(std::span<const double> e_values) {
  const std::size_t g = e_values.size();
  if (g < 20) throw UsageError("estimate_v needs at least 20 e values, got " + std::to_string(g));
  std::vector<double> sorted(e_values.begin(), e_values.end());
  for (const double e : sorted) {
    if (!std::isfinite(e) || e < 0.0) throw UsageError("e values must be finite and nonnegative");
  }
  std::sort(sorted.begin(), sorted.end());
  const std::size_t rank = (95 * g) / 100;  // 1-based order statistic
  return 0.5 * (sorted[rank - 1] + sorted[std::min(rank, g - 1)]);
}

DetectionRule detect_misspecification(const EnvelopeResult& env, double v) {
  if (!(v >= 0.0)) throw UsageError("detection threshold v must be nonnegative");
  DetectionRule rule;
  rule.v = v;
  for (std::size_t i = 0; i < env.size(); ++i) {
    const auto idx = static_cast<Eigen::Index>(i);
    const double r = env.sorted_residuals[idx];
    double distance = 0.0;
    if (r > env.upper_band[idx]) {
      distance = r - env.upper_band[idx];
    } else if (r < env.lower_band[idx]) {
      distance = env.lower_band[idx] - r;
    }
    if (distance > 0.0 && distance >= v) ++rule.flagged_points;
  }
  return rule;
}

// ---------------------------------------------------------------------------
// SVG output
// ---------------------------------------------------------------------------

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 480.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 20.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 60.0;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Roughly five ticks at 1, 2 or 5 times a power of ten.
std::vector<double> nice_ticks(double lo, double hi) {
  const double span = hi - lo;
  const double raw = span / 5.0;
  const double magnitude = std::pow(10.0, std::floor(std::log10(raw)));
  double step = magnitude;
  for (const double m : {1.0, 2.0, 5.0, 10.0}) {
    step = m * magnitude;
    if (span / step <= 6.0) break;
  }
  std::vector<double> ticks;
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * span; t += step) {
    ticks.push_back(std::fabs(t) < 1e-12 * step ? 0.0 : t);
  }
  return ticks;
}

}  // namespace

std::string envelope_svg(const EnvelopeResult& env, const std::string& title) {
  const Eigen::Index n = static_cast<Eigen::Index>(env.size());
  if (n == 0) throw UsageError("cannot plot an empty envelope");

  double x_lo = env.theoretical_quantiles.minCoeff();
  double x_hi = env.theoretical_quantiles.maxCoeff();
  double y_lo = std::min({env.sorted_residuals.minCoeff(), env.lower_band.minCoeff()});
  double y_hi = std::max({env.sorted_residuals.maxCoeff(), env.upper_band.maxCoeff()});
  if (x_hi - x_lo < 1e-9) {
    x_lo -= 1.0;
    x_hi += 1.0;
  }
  if (y_hi - y_lo < 1e-9) {
    y_lo -= 1.0;
    y_hi += 1.0;
  }
  const double x_pad = 0.05 * (x_hi - x_lo);
  const double y_pad = 0.05 * (y_hi - y_lo);
  x_lo -= x_pad;
  x_hi += x_pad;
  y_lo -= y_pad;
  y_hi += y_pad;

  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x_lo) / (x_hi - x_lo) * plot_w; };
  auto py = [&](double y) { return kTop + (y_hi - y) / (y_hi - y_lo) * plot_h; };

  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(kWidth) << "\" height=\""
      << fmt(kHeight) << "\" viewBox=\"0 0 " << fmt(kWidth) << ' ' << fmt(kHeight) << "\">\n"
      << "<rect x=\"0\" y=\"0\" width=\"" << fmt(kWidth) << "\" height=\"" << fmt(kHeight)
      << "\" fill=\"white\"/>\n"
      << "<text x=\"" << fmt(kWidth / 2) << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"15\">"
      << escape_xml(title) << "</text>\n";

  // Frame, ticks, labels.
  out << "<g stroke=\"black\" fill=\"none\" stroke-width=\"1\">\n"
      << "<rect x=\"" << fmt(kLeft) << "\" y=\"" << fmt(kTop) << "\" width=\"" << fmt(plot_w)
      << "\" height=\"" << fmt(plot_h) << "\"/>\n";
  const auto x_ticks = nice_ticks(x_lo, x_hi);
  const auto y_ticks = nice_ticks(y_lo, y_hi);
  for (const double t : x_ticks) {
    out << "<line x1=\"" << fmt(px(t)) << "\" y1=\"" << fmt(kTop + plot_h) << "\" x2=\"" << fmt(px(t))
        << "\" y2=\"" << fmt(kTop + plot_h + 5) << "\"/>\n";
  }
  for (const double t : y_ticks) {
    out << "<line x1=\"" << fmt(kLeft - 5) << "\" y1=\"" << fmt(py(t)) << "\" x2=\"" << fmt(kLeft)
        << "\" y2=\"" << fmt(py(t)) << "\"/>\n";
  }
  out << "</g>\n<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (const double t : x_ticks) {
    out << "<text x=\"" << fmt(px(t)) << "\" y=\"" << fmt(kTop + plot_h + 18)
        << "\" text-anchor=\"middle\">" << fmt(t) << "</text>\n";
  }
  for (const double t : y_ticks) {
    out << "<text x=\"" << fmt(kLeft - 8) << "\" y=\"" << fmt(py(t) + 4) << "\" text-anchor=\"end\">"
        << fmt(t) << "</text>\n";
  }
  out << "<text x=\"" << fmt(kLeft + plot_w / 2) << "\" y=\"" << fmt(kHeight - 15)
      << "\" text-anchor=\"middle\" font-size=\"13\">Theoretical quantile</text>\n"
      << "<text x=\"18\" y=\"" << fmt(kTop + plot_h / 2) << "\" text-anchor=\"middle\" font-size=\"13\" "
      << "transform=\"rotate(-90 18 " << fmt(kTop + plot_h / 2) << ")\">Residual</text>\n</g>\n";

  // Identity reference line, clipped to the plotting window.
  const double d_lo = std::max(x_lo, y_lo);
  const double d_hi = std::min(x_hi, y_hi);
  if (d_lo < d_hi) {
    out << "<line class=\"reference\" x1=\"" << fmt(px(d_lo)) << "\" y1=\"" << fmt(py(d_lo))
        << "\" x2=\"" << fmt(px(d_hi)) << "\" y2=\"" << fmt(py(d_hi))
        << "\" stroke=\"gray\" stroke-dasharray=\"2,3\"/>\n";
  }

  auto polyline = [&](const Eigen::VectorXd& band, const char* cls, const char* dash) {
    out << "<polyline class=\"" << cls << "\" fill=\"none\" stroke=\"black\"";
    if (dash) out << " stroke-dasharray=\"" << dash << "\"";
    out << " points=\"";
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i) out << ' ';
      out << fmt(px(env.theoretical_quantiles[i])) << ',' << fmt(py(band[i]));
    }
    out << "\"/>\n";
  };
  polyline(env.lower_band, "band-lower", nullptr);
  polyline(env.upper_band, "band-upper", nullptr);
  if (env.median_band.size() == n) polyline(env.median_band, "band-median", "6,4");

  out << "<g class=\"points\" fill=\"black\">\n";
  for (Eigen::Index i = 0; i < n; ++i) {
    out << "<circle cx=\"" << fmt(px(env.theoretical_quantiles[i])) << "\" cy=\""
        << fmt(py(env.sorted_residuals[i])) << "\" r=\"2.5\"/>\n";
  }
  out << "</g>\n</svg>\n";
  return out.str();
}

void render_envelope_plot(const EnvelopeResult& env, const std::filesystem::path& path,
                          const std::string& title) {
  write_file_atomic(path, envelope_svg(env, title));
}

}  // namespace compresid
