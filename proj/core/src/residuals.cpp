#include "compresid/residuals.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "compresid/dirichlet.hpp"
#include "compresid/error.hpp"
#include "compresid/parallel.hpp"
#include "compresid/rng.hpp"
#include "compresid/special.hpp"

namespace compresid {

bool is_class_kind(ResidualKind kind) noexcept {
  return kind != ResidualKind::composite_pearson && kind != ResidualKind::composite_quantile;
}

std::string_view kind_name(ResidualKind kind) noexcept {
  switch (kind) {
    case ResidualKind::a1: return "a1";
    case ResidualKind::q1: return "q1";
    case ResidualKind::a2: return "a2";
    case ResidualKind::q2: return "q2";
    case ResidualKind::composite_pearson: return "pearson";
    case ResidualKind::composite_quantile: return "compq";
  }
  return "?";
}

ResidualKind parse_kind(std::string_view name) {
  for (const auto kind : kAllKinds) {
    if (kind_name(kind) == name) return kind;
  }
  throw UsageError("unknown residual kind '" + std::string(name) +
                   "' (expected a1, q1, a2, q2, pearson or compq)");
}

MultivariateFunction multivariate_function(ResidualKind kind) {
  switch (kind) {
    case ResidualKind::a1:
    case ResidualKind::a2: return MultivariateFunction::absolute;
    case ResidualKind::q1:
    case ResidualKind::q2:
    case ResidualKind::composite_quantile: return MultivariateFunction::quadratic;
    case ResidualKind::composite_pearson: break;
  }
  throw UsageError("composite Pearson residual has no quantile aggregation");
}

SignRule sign_rule(ResidualKind kind) {
  switch (kind) {
    case ResidualKind::a1:
    case ResidualKind::q1: return SignRule::worst_component;
    case ResidualKind::a2:
    case ResidualKind::q2: return SignRule::dominant_mean;
    default: break;
  }
  throw UsageError("composite residuals are unsigned");
}

Eigen::MatrixXd quantile_residuals(const Eigen::MatrixXd& y, const FittedValues& fitted) {
  if (y.rows() != fitted.mu.rows() || y.cols() != fitted.mu.cols() ||
      fitted.phi.size() != y.rows()) {
    throw DataError("responses and fitted values differ in shape");
  }
  Eigen::MatrixXd q(y.rows(), y.cols());
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    const double phi = fitted.phi[i];
    for (Eigen::Index j = 0; j < y.cols(); ++j) {
      const double w = y(i, j);
      if (!(w > 0.0 && w < 1.0)) {
        throw DataError("response outside (0, 1)", static_cast<std::size_t>(i));
      }
      const double mu = fitted.mu(i, j);
      const double cdf = reg_inc_beta(w, phi * mu, phi * (1.0 - mu));
      q(i, j) = std_normal_quantile(std::clamp(cdf, kCdfClamp, 1.0 - kCdfClamp));
    }
  }
  return q;
}

Eigen::MatrixXd quantile_residuals(const FittedModel& fit, const Dataset& data) {
  return quantile_residuals(data.responses, fit.fitted_values());
}

double multivariate_residual(RowRef q_row, MultivariateFunction function) {
  return function == MultivariateFunction::absolute ? q_row.cwiseAbs().sum()
                                                    : q_row.squaredNorm();
}

Eigen::VectorXd composite_pearson(const Eigen::MatrixXd& y, const FittedValues& fitted) {
  if (y.rows() != fitted.mu.rows() || y.cols() != fitted.mu.cols()) {
    throw DataError("responses and fitted values differ in shape");
  }
  return ((y - fitted.mu).rowwise().squaredNorm().array() / fitted.phi.array()).matrix();
}

Eigen::VectorXd composite_pearson(const FittedModel& fit, const Dataset& data) {
  return composite_pearson(data.responses, fit.fitted_values());
}

Eigen::VectorXd composite_quantile(const Eigen::MatrixXd& q) {
  return q.rowwise().squaredNorm();
}

int sign_h1(RowRef q_row) {
  Eigen::Index worst = 0;
  for (Eigen::Index j = 1; j < q_row.size(); ++j) {
    if (std::fabs(q_row[j]) > std::fabs(q_row[worst])) worst = j;
  }
  return q_row[worst] < 0.0 ? -1 : 1;
}

std::size_t dominant_component(const Eigen::MatrixXd& y) {
  const Eigen::RowVectorXd totals = y.colwise().sum();
  Eigen::Index best = 0;
  for (Eigen::Index j = 1; j < totals.size(); ++j) {
    if (totals[j] > totals[best]) best = j;
  }
  return static_cast<std::size_t>(best);
}

Eigen::VectorXi sign_h2(const Eigen::MatrixXd& q, const Eigen::MatrixXd& y) {
  const auto m = static_cast<Eigen::Index>(dominant_component(y));
  Eigen::VectorXi h(q.rows());
  for (Eigen::Index i = 0; i < q.rows(); ++i) h[i] = q(i, m) < 0.0 ? -1 : 1;
  return h;
}

Eigen::VectorXd signed_residuals(const Eigen::MatrixXd& q, const Eigen::MatrixXd& y,
                                 ResidualKind kind) {
  const MultivariateFunction function = multivariate_function(kind);
  const SignRule rule = sign_rule(kind);
  Eigen::VectorXd l(q.rows());
  if (rule == SignRule::worst_component) {
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
      l[i] = sign_h1(q.row(i)) * multivariate_residual(q.row(i), function);
    }
  } else {
    const Eigen::VectorXi h = sign_h2(q, y);
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
      l[i] = h[i] * multivariate_residual(q.row(i), function);
    }
  }
  return l;
}

Eigen::VectorXd composite_residuals(const Eigen::MatrixXd& y, const FittedValues& fitted,
                                    ResidualKind kind) {
  switch (kind) {
    case ResidualKind::composite_pearson: return composite_pearson(y, fitted);
    case ResidualKind::composite_quantile: return composite_quantile(quantile_residuals(y, fitted));
    default: break;
  }
  throw UsageError("composite_residuals called with a class kind");
}

std::vector<ClassResidualResult> bootstrap_class_residuals(const Eigen::MatrixXd& y,
                                                           const FittedValues& fitted,
                                                           const Refitter& refit,
                                                           std::span<const ResidualKind> kinds,
                                                           const BootstrapConfig& cfg) {
  if (cfg.B < 1) throw UsageError("bootstrap needs B >= 1");
  for (const auto kind : kinds) {
    if (!is_class_kind(kind)) throw UsageError("bootstrap residuals need a class kind");
  }
  const Eigen::Index n = y.rows();
  const auto B = static_cast<Eigen::Index>(cfg.B);
  const std::size_t kind_count = kinds.size();

  std::vector<Eigen::MatrixXd> pools(kind_count, Eigen::MatrixXd(B, n));
  std::vector<std::size_t> failures(cfg.B, 0);

  parallel_for(cfg.B, cfg.threads, [&](std::size_t index) {
    const std::uint64_t b = index + 1;
    const RngStream primary(cfg.seed, b);
    for (std::size_t attempt = 0; attempt <= cfg.max_retries_per_replicate; ++attempt) {
      RngStream rng = attempt == 0 ? primary : primary.substream(attempt);
      const Eigen::MatrixXd yb = sample_rows(fitted.mu, fitted.phi, rng);
      FittedValues fb;
      try {
        fb = refit(yb);
      } catch (const FitError&) {
        ++failures[index];
        continue;
      }
      const Eigen::MatrixXd qb = quantile_residuals(yb, fb);
      for (std::size_t c = 0; c < kind_count; ++c) {
        pools[c].row(static_cast<Eigen::Index>(index)) = signed_residuals(qb, yb, kinds[c]).transpose();
      }
      return;
    }
    throw ReplicateFailureError("bootstrap refit failed after retries", b);
  });

  std::size_t total_failures = 0;
  for (const auto f : failures) total_failures += f;

  // One randomization uniform per observation, shared across kinds.
  Eigen::VectorXd jitter(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    RngStream rng(cfg.seed, cfg.B + 1 + static_cast<std::uint64_t>(i));
    jitter[i] = rng.next_uniform();
  }

  const Eigen::MatrixXd q = quantile_residuals(y, fitted);
  const double cells = static_cast<double>(cfg.B + 1);
  std::vector<ClassResidualResult> results;
  results.reserve(kind_count);
  for (std::size_t c = 0; c < kind_count; ++c) {
    ClassResidualResult r;
    r.kind = kinds[c];
    r.l = signed_residuals(q, y, kinds[c]);
    r.a.resize(n);
    r.u.resize(n);
    r.s.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      r.a[i] = static_cast<int>((pools[c].col(i).array() < r.l[i]).count());
      const double lo = r.a[i] / cells;
      const double hi = (r.a[i] + 1) / cells;
      const double u = (r.a[i] + jitter[i]) / cells;
      r.u[i] = std::clamp(u, std::nextafter(lo, 1.0), std::nextafter(hi, 0.0));
      r.s[i] = std_normal_quantile(r.u[i]);
    }
    r.replicate_failures = total_failures;
    if (cfg.keep_replicates) r.replicate_l = pools[c];
    results.push_back(std::move(r));
  }
  return results;
}

Refitter mle_refitter(const Design& design, const FittedModel& start) {
  FitOptions options;
  options.init_inverse_hessian = start.inverse_hessian;
  const Eigen::VectorXd init = start.coef.flatten();
  return [&design, options, init](const Eigen::MatrixXd& yb) {
    const Likelihood lik(design, yb);
    const FittedModel fb = fit_mle(lik, init, options);
    if (!fb.converged) throw FitError("bootstrap refit did not converge");
    return fb.fitted_values();
  };
}

std::vector<ClassResidualResult> class_residuals(const FittedModel& fit, const Dataset& data,
                                                 std::span<const ResidualKind> kinds,
                                                 const BootstrapConfig& cfg) {
  if (!fit.converged) throw FitError("class residuals need a converged fit");
  data.validate();
  const Design design(fit.spec, data);
  return bootstrap_class_residuals(data.responses, fit.fitted_values(), mle_refitter(design, fit),
                                   kinds, cfg);
}

ClassResidualResult class_residual(const FittedModel& fit, const Dataset& data, ResidualKind kind,
                                   const BootstrapConfig& cfg) {
  const std::array<ResidualKind, 1> one = {kind};
  return std::move(class_residuals(fit, data, one, cfg).front());
}

}  // namespace compresid
