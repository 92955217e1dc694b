#include "compresid/dirichlet.hpp"

#include <cmath>
#include <string>

#include "compresid/error.hpp"
#include "compresid/special.hpp"

namespace compresid {

namespace {

void check_open_simplex(const Eigen::VectorXd& w, double tolerance, const char* what) {
  if (w.size() < 2) {
    throw DataError(std::string(what) + ": need at least 2 components");
  }
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    if (!(w[j] > 0.0 && w[j] < 1.0)) {
      throw DataError(std::string(what) + ": component " + std::to_string(j) +
                      " outside (0, 1): " + std::to_string(w[j]));
    }
  }
  if (std::fabs(w.sum() - 1.0) > tolerance) {
    throw DataError(std::string(what) + ": components sum to " +
                    std::to_string(w.sum()));
  }
}

}  // namespace

Composition::Composition(Eigen::VectorXd w) : w_(std::move(w)) {
  check_open_simplex(w_, kCompositionSumTolerance, "composition");
}

Composition Composition::from_observed(std::span<const double> values) {
  Eigen::VectorXd w(static_cast<Eigen::Index>(values.size()));
  for (std::size_t j = 0; j < values.size(); ++j) w[static_cast<Eigen::Index>(j)] = values[j];
  check_open_simplex(w, kObservedSumTolerance, "composition");
  w /= w.sum();
  return Composition(std::move(w));
}

void DirichletParams::validate() const {
  check_open_simplex(mu, kCompositionSumTolerance, "dirichlet mean");
  if (!(phi > 0.0) || !std::isfinite(phi)) {
    throw DataError("dirichlet precision must be positive, got " + std::to_string(phi));
  }
}

double log_density_unchecked(const Eigen::Ref<const Eigen::VectorXd>& w,
                             const Eigen::Ref<const Eigen::VectorXd>& mu, double phi) {
  double value = log_gamma(phi);
  for (Eigen::Index j = 0; j < mu.size(); ++j) {
    const double alpha = phi * mu[j];
    value += (alpha - 1.0) * std::log(w[j]) - log_gamma(alpha);
  }
  return value;
}

double log_density(const Composition& w, const DirichletParams& p) {
  p.validate();
  if (w.size() != p.k()) {
    throw DataError("log_density: composition has " + std::to_string(w.size()) +
                    " parts, parameters have " + std::to_string(p.k()));
  }
  return log_density_unchecked(w.values(), p.mu, p.phi);
}

void sample_into(const Eigen::Ref<const Eigen::VectorXd>& mu, double phi,
                 RngStream& rng, Eigen::Ref<Eigen::VectorXd> out) {
  const Eigen::Index k = mu.size();
  // Normalize in log space so tiny shapes cannot underflow the whole draw.
  double top = -INFINITY;
  for (Eigen::Index j = 0; j < k; ++j) {
    out[j] = sample_log_gamma(phi * mu[j], rng);
    top = std::max(top, out[j]);
  }
  double total = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    out[j] = std::exp(out[j] - top);
    total += out[j];
  }
  out /= total;
  bool clamped = false;
  for (Eigen::Index j = 0; j < k; ++j) {
    if (out[j] < kSampleClamp) {
      out[j] = kSampleClamp;
      clamped = true;
    } else if (out[j] > 1.0 - kSampleClamp) {
      out[j] = 1.0 - kSampleClamp;
      clamped = true;
    }
  }
  if (clamped) out /= out.sum();
}

Composition sample(const DirichletParams& p, RngStream& rng) {
  p.validate();
  Eigen::VectorXd w(p.mu.size());
  sample_into(p.mu, p.phi, rng, w);
  return Composition(std::move(w));
}

Eigen::MatrixXd sample_rows(const Eigen::MatrixXd& mu, const Eigen::VectorXd& phi, RngStream& rng) {
  Eigen::MatrixXd out(mu.rows(), mu.cols());
  Eigen::VectorXd row(mu.cols());
  for (Eigen::Index i = 0; i < mu.rows(); ++i) {
    sample_into(mu.row(i).transpose(), phi[i], rng, row);
    out.row(i) = row.transpose();
  }
  return out;
}

BetaParams marginal_beta_params(const DirichletParams& p, std::size_t j) {
  if (j >= p.k()) {
    throw UsageError("marginal_beta_params: component index " + std::to_string(j) +
                    " out of range for k = " + std::to_string(p.k()));
  }
  const double mu = p.mu[static_cast<Eigen::Index>(j)];
  return {p.phi * mu, p.phi * (1.0 - mu)};
}

}  // namespace compresid
