#pragma once

#include <Eigen/Core>
#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "compresid/dataset.hpp"
#include "compresid/regression.hpp"

namespace compresid {

/// The four bootstrap class residuals, then the two composite competitors.
enum class ResidualKind { a1, q1, a2, q2, composite_pearson, composite_quantile };

inline constexpr std::array<ResidualKind, 4> kClassKinds = {
    ResidualKind::a1, ResidualKind::q1, ResidualKind::a2, ResidualKind::q2};
inline constexpr std::array<ResidualKind, 6> kAllKinds = {
    ResidualKind::a1, ResidualKind::q1, ResidualKind::a2,
    ResidualKind::q2, ResidualKind::composite_pearson, ResidualKind::composite_quantile};

bool is_class_kind(ResidualKind kind) noexcept;
/// "a1", "q1", "a2", "q2", "pearson", "compq".
std::string_view kind_name(ResidualKind kind) noexcept;
/// Inverse of kind_name; throws UsageError.
ResidualKind parse_kind(std::string_view name);

enum class MultivariateFunction { absolute, quadratic };
enum class SignRule {
  worst_component,  ///< sign of q at argmax_j |q_ij|
  dominant_mean,    ///< sign of q at the column with the largest mean response
};

MultivariateFunction multivariate_function(ResidualKind kind);
SignRule sign_rule(ResidualKind kind);

/// Beta CDF values are clamped to [kCdfClamp, 1 - kCdfClamp] before the
/// normal quantile is applied.
inline constexpr double kCdfClamp = 1e-15;

using RowRef = Eigen::Ref<const Eigen::RowVectorXd, 0, Eigen::InnerStride<>>;

/// q_ij = Phi^-1(I_{y_ij}(phi_i mu_ij, phi_i (1 - mu_ij))).
Eigen::MatrixXd quantile_residuals(const Eigen::MatrixXd& responses, const FittedValues& fitted);
Eigen::MatrixXd quantile_residuals(const FittedModel& fit, const Dataset& data);

double multivariate_residual(RowRef q_row, MultivariateFunction function);

/// sum_j ((y_ij - mu_ij) / sqrt(phi_i))^2
Eigen::VectorXd composite_pearson(const Eigen::MatrixXd& responses, const FittedValues& fitted);
Eigen::VectorXd composite_pearson(const FittedModel& fit, const Dataset& data);

/// sum_j q_ij^2
Eigen::VectorXd composite_quantile(const Eigen::MatrixXd& q);

/// Sign of the largest-magnitude entry; ties go to the lowest index and
/// sign(0) = +1.
int sign_h1(RowRef q_row);

/// Column with the largest mean response (ties to the lowest index).
std::size_t dominant_component(const Eigen::MatrixXd& responses);

/// Per-row sign of q at dominant_component(responses).
Eigen::VectorXi sign_h2(const Eigen::MatrixXd& q, const Eigen::MatrixXd& responses);

/// l_i = h_i r_i for a class kind.
Eigen::VectorXd signed_residuals(const Eigen::MatrixXd& q, const Eigen::MatrixXd& responses,
                                 ResidualKind kind);

/// Composite Pearson or composite quantile values; throws UsageError for a
/// class kind.
Eigen::VectorXd composite_residuals(const Eigen::MatrixXd& responses, const FittedValues& fitted,
                                    ResidualKind kind);

struct BootstrapConfig {
  std::size_t B = 1000;
  std::uint64_t seed = 0;
  std::size_t max_retries_per_replicate = 20;
  std::size_t threads = 1;
  /// Store every replicate's l vector in the result.
  bool keep_replicates = false;
};

struct ClassResidualResult {
  ResidualKind kind = ResidualKind::a1;
  Eigen::VectorXd s;
  Eigen::VectorXd u;
  Eigen::VectorXi a;
  Eigen::VectorXd l;
  std::size_t replicate_failures = 0;
  /// B x n, filled only with BootstrapConfig::keep_replicates.
  Eigen::MatrixXd replicate_l;
};

/// Maps simulated responses to fitted values; throws FitError on failure.
using Refitter = std::function<FittedValues(const Eigen::MatrixXd& responses)>;

/// Bootstrap engine. Replicate b (1-based) draws its responses from
/// RngStream(seed, b), retries draw from its substreams, and observation i
/// (0-based) takes its randomization uniform from RngStream(seed, B + 1 + i).
/// All requested kinds are evaluated on the same replicates.
std::vector<ClassResidualResult> bootstrap_class_residuals(const Eigen::MatrixXd& responses,
                                                           const FittedValues& fitted,
                                                           const Refitter& refit,
                                                           std::span<const ResidualKind> kinds,
                                                           const BootstrapConfig& cfg);

/// Refits `design`'s spec by maximum likelihood, warm-started at `start`.
/// Non-converged fits count as failures.
Refitter mle_refitter(const Design& design, const FittedModel& start);

std::vector<ClassResidualResult> class_residuals(const FittedModel& fit, const Dataset& data,
                                                 std::span<const ResidualKind> kinds,
                                                 const BootstrapConfig& cfg);

ClassResidualResult class_residual(const FittedModel& fit, const Dataset& data, ResidualKind kind,
                                   const BootstrapConfig& cfg);

}  // namespace compresid
