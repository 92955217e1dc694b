#pragma once

#include <Eigen/Core>
#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "compresid/dataset.hpp"
#include "compresid/dirichlet.hpp"
#include "compresid/envelope.hpp"
#include "compresid/regression.hpp"
#include "compresid/residuals.hpp"
#include "compresid/rng.hpp"

namespace compresid {

// ---------------------------------------------------------------------------
// Distributional summaries
// ---------------------------------------------------------------------------

struct SampleSummary {
  double mean;
  double variance;  ///< divisor m - 1
  double skewness;  ///< m3 / m2^(3/2)
  double kurtosis;  ///< m4 / m2^2, not excess
};

/// Needs at least 4 values and nonzero spread.
SampleSummary summary_statistics(std::span<const double> samples);

struct AndersonDarling {
  double statistic;
  /// Number of Phi values clamped to [1e-15, 1 - 1e-15].
  std::size_t clamped;
};

/// A^2 against the fully specified standard normal.
AndersonDarling anderson_darling(std::span<const double> samples);
double ad_statistic(std::span<const double> samples);

/// Upper 5% point of A^2 for a fully specified null.
inline constexpr double kAdCritical5 = 2.492;
/// Upper 1% point.
inline constexpr double kAdCritical1 = 3.857;

// ---------------------------------------------------------------------------
// Scenario studies (k = 3, two covariates)
// ---------------------------------------------------------------------------

enum class CovariateLaw { uniform, bernoulli_gamma };

struct ScenarioConfig {
  std::string id;
  std::size_t n = 20;
  CoefficientVector coefficients;
  CovariateLaw covariate_law = CovariateLaw::uniform;
  double gamma1 = 3.0;
};

/// Scenario ids "1a".."5a" and "1b".."5b".
ScenarioConfig scenario_config(std::string_view id, std::size_t n);
std::vector<std::string> scenario_ids();

/// Intercept, x2 and x3 in both mean submodels and in the precision submodel.
ModelSpec scenario_model_spec();

/// n x 2 matrix of (x2, x3) draws under the scenario's covariate law.
Eigen::MatrixXd draw_scenario_covariates(const ScenarioConfig& cfg, RngStream& rng);

/// Dataset with the given covariates and responses drawn from the scenario
/// coefficients.
Dataset simulate_scenario_responses(const ScenarioConfig& cfg, const Eigen::MatrixXd& covariates,
                                    RngStream& rng);

/// Fresh covariates and responses.
Dataset generate_scenario_dataset(const ScenarioConfig& cfg, RngStream& rng);

/// Population average of mu over the uniform covariate law (Gauss-Legendre).
Eigen::Vector3d uniform_design_mean(const CoefficientVector& coef);

/// Intercepts (beta_21, beta_31) that move uniform_design_mean onto `target`
/// with the slopes of `coef` held fixed.
Eigen::Vector2d calibrate_intercepts(const CoefficientVector& coef, const Eigen::Vector3d& target);

inline constexpr std::size_t kStatCount = 5;  // mean, variance, skewness, kurtosis, AD
inline constexpr std::array<std::string_view, kStatCount> kStatNames = {
    "mean", "variance", "skewness", "kurtosis", "ad"};

struct SummaryTable {
  std::string scenario;
  std::size_t n = 0;
  std::size_t replicates = 0;
  std::size_t B = 0;
  std::uint64_t seed = 0;
  /// values[i][stat][kind] for observation i and kClassKinds order.
  std::vector<std::array<std::array<double, 4>, kStatCount>> values;
  std::array<std::array<double, 4>, kStatCount> column_mean{};
  std::array<std::array<double, 4>, kStatCount> column_sd{};
  std::size_t response_redraws = 0;
  std::size_t replicate_failures = 0;
  /// Fixed design used by every replicate.
  Eigen::MatrixXd covariates;
};

struct StudyOptions {
  std::size_t replicates = 500;
  std::size_t B = 200;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::size_t max_redraws = 20;
  std::function<void(std::size_t done, std::size_t total)> progress;
};

SummaryTable run_scenario_study(const ScenarioConfig& cfg, const StudyOptions& options);

std::string summary_table_csv(const SummaryTable& table);

// ---------------------------------------------------------------------------
// Misspecification power study
// ---------------------------------------------------------------------------

/// Dirichlet laws per covariate cell; cell index = x2 + 2 * x3 for binary
/// covariates, i.e. (0,0), (1,0), (0,1), (1,1).
struct MixtureConfig {
  std::array<DirichletParams, 4> set1;
  std::array<DirichletParams, 4> set2;
  double weight = 0.7;  ///< probability of drawing from set1

  static MixtureConfig standard_sets();
};

/// Cell-means model for the binary design: intercept, x2, x3, x2x3 in both
/// mean submodels; constant precision.
ModelSpec power_model_spec();

/// Binary covariates x2, x3 ~ Bernoulli(1/2) plus the product column;
/// redrawn until every cell has at least two observations.
Dataset draw_power_covariates(std::size_t n, RngStream& rng);

/// Each observation comes from set1 with probability `weight_set1`, else
/// set2.
Dataset simulate_power_responses(const Dataset& design, const MixtureConfig& mix,
                                 double weight_set1, RngStream& rng);

struct PowerStudyOptions {
  std::size_t g_correct = 200;
  std::size_t g_wrong = 100;
  std::size_t n = 50;
  std::size_t R = 100;
  std::size_t B = 100;
  std::size_t inner_B = 100;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::function<void(std::size_t done, std::size_t total)> progress;
};

struct PowerStudyResult {
  double v_class = 0.0;      ///< shared by the four class kinds
  double v_composite = 0.0;  ///< shared by the two composite kinds
  /// Per kind, one entry per dataset.
  std::map<ResidualKind, std::vector<double>> e_correct;
  std::map<ResidualKind, std::vector<std::size_t>> flagged_correct;
  std::map<ResidualKind, std::vector<std::size_t>> flagged_wrong;
  std::size_t dataset_redraws = 0;
  PowerStudyOptions options;

  double threshold(ResidualKind kind) const;
  /// Fraction of datasets with at least one flagged point.
  double flag_rate(ResidualKind kind, bool wrong_model) const;
};

PowerStudyResult run_power_study(const MixtureConfig& mix, const PowerStudyOptions& options);

/// Rows: phase, kind, flagged_points, datasets.
std::string power_histogram_csv(const PowerStudyResult& result);

}  // namespace compresid
