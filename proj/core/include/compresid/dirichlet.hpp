#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <span>

#include "compresid/rng.hpp"

namespace compresid {

/// Tolerance on the unit sum of a composition held in memory.
inline constexpr double kCompositionSumTolerance = 1e-9;
/// Looser tolerance for compositions read back from text files.
inline constexpr double kObservedSumTolerance = 1e-6;
/// Sampled components are kept inside [kSampleClamp, 1 - kSampleClamp].
inline constexpr double kSampleClamp = 1e-12;

/// A point on the open simplex: k >= 2 strictly positive parts summing to one.
class Composition {
 public:
  /// Validates strictly; throws DataError on violation.
  explicit Composition(Eigen::VectorXd w);

  /// Accepts a unit sum within kObservedSumTolerance and renormalizes exactly.
  static Composition from_observed(std::span<const double> values);

  std::size_t size() const noexcept { return static_cast<std::size_t>(w_.size()); }
  double operator[](std::size_t j) const { return w_[static_cast<Eigen::Index>(j)]; }
  const Eigen::VectorXd& values() const noexcept { return w_; }

 private:
  Eigen::VectorXd w_;
};

/// Dirichlet in the mean/precision parameterization: E(w_j) = mu_j and
/// Var(w_j) = mu_j (1 - mu_j) / (1 + phi).
struct DirichletParams {
  Eigen::VectorXd mu;
  double phi = 1.0;

  std::size_t k() const noexcept { return static_cast<std::size_t>(mu.size()); }
  /// Throws DataError if mu is off the open simplex or phi <= 0.
  void validate() const;
};

struct BetaParams {
  double a;
  double b;
};

double log_density(const Composition& w, const DirichletParams& p);

/// No validation; used by the likelihood inner loops.
double log_density_unchecked(const Eigen::Ref<const Eigen::VectorXd>& w,
                             const Eigen::Ref<const Eigen::VectorXd>& mu, double phi);

Composition sample(const DirichletParams& p, RngStream& rng);

/// Writes one draw into `out` (size k). Same draws as sample().
void sample_into(const Eigen::Ref<const Eigen::VectorXd>& mu, double phi,
                 RngStream& rng, Eigen::Ref<Eigen::VectorXd> out);

/// One composition per row of `mu` (n x k) with precision phi_i.
Eigen::MatrixXd sample_rows(const Eigen::MatrixXd& mu, const Eigen::VectorXd& phi, RngStream& rng);

/// Component j (0-based) is marginally Beta(phi mu_j, phi (1 - mu_j)).
BetaParams marginal_beta_params(const DirichletParams& p, std::size_t j);

}  // namespace compresid
