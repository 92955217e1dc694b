#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>

#include "compresid/dataset.hpp"
#include "compresid/regression.hpp"
#include "compresid/residuals.hpp"

namespace compresid {

/// Normal probability plot with a simulated envelope for one residual kind.
struct EnvelopeResult {
  Eigen::VectorXd sorted_residuals;
  Eigen::VectorXd theoretical_quantiles;
  Eigen::VectorXd lower_band;
  Eigen::VectorXd upper_band;
  Eigen::VectorXd median_band;
  std::size_t outside_count = 0;
  /// Vertical distance from the farthest outside point to its nearest band;
  /// zero when every point is inside.
  double e = 0.0;

  std::size_t size() const noexcept { return static_cast<std::size_t>(sorted_residuals.size()); }
};

struct DetectionRule {
  double v = 0.0;
  std::size_t flagged_points = 0;
  bool flagged() const noexcept { return flagged_points > 0; }
};

struct EnvelopeConfig {
  std::size_t R = 100;
  double lower_percentile = 0.025;
  double upper_percentile = 0.975;
  /// Bootstrap settings for the observed class residuals.
  BootstrapConfig bootstrap;
  /// Inner bootstrap size inside each simulated dataset; 0 means bootstrap.B.
  std::size_t inner_B = 0;
};

/// Blom plotting positions Phi^-1((i - 3/8) / (n + 1/4)), i = 1..n.
Eigen::VectorXd blom_quantiles(std::size_t n);

/// Linear-interpolation sample quantile of sorted data (Hyndman-Fan type 7).
double sorted_quantile(std::span<const double> sorted, double p);

/// Builds the bands from R simulated residual vectors (rows of `simulated`,
/// each of length n, in any order) and places the observed residuals.
EnvelopeResult build_envelope(const Eigen::VectorXd& observed, const Eigen::MatrixXd& simulated,
                              double lower_percentile = 0.025, double upper_percentile = 0.975);

/// Residuals as plotted for every requested kind on one dataset: s for class
/// kinds (bootstrap from `bootstrap`), raw values for composite kinds.
std::map<ResidualKind, Eigen::VectorXd> plotted_residuals(const Design& design,
                                                          const FittedModel& fit,
                                                          const Eigen::MatrixXd& responses,
                                                          std::span<const ResidualKind> kinds,
                                                          const BootstrapConfig& bootstrap);

/// Simulates R datasets from the fitted model, refits each, recomputes every
/// requested kind (class kinds run a full inner bootstrap), and returns one
/// envelope per kind.
std::map<ResidualKind, EnvelopeResult> simulated_envelopes(const FittedModel& fit,
                                                           const Dataset& data,
                                                           std::span<const ResidualKind> kinds,
                                                           const EnvelopeConfig& cfg);

EnvelopeResult simulated_envelope(const FittedModel& fit, const Dataset& data, ResidualKind kind,
                                  const EnvelopeConfig& cfg);

/// Average of the floor(0.95 g)-th and next order statistics (1-based) of the
/// per-dataset e values. Needs g >= 20.
double estimate_v(std::span<const double> e_values);

/// Points outside the band by at least v.
DetectionRule detect_misspecification(const EnvelopeResult& env, double v);

std::string envelope_svg(const EnvelopeResult& env, const std::string& title);
void render_envelope_plot(const EnvelopeResult& env, const std::filesystem::path& path,
                          const std::string& title = "Normal probability plot");

}  // namespace compresid
