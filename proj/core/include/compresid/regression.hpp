#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "compresid/dataset.hpp"

namespace compresid {

/// Covariates entering one linear predictor.
struct Submodel {
  bool intercept = true;
  std::vector<std::string> covariates;

  std::size_t size() const noexcept { return (intercept ? 1 : 0) + covariates.size(); }
  bool operator==(const Submodel&) const = default;
};

/// Dirichlet logistic regression:
///   log(mu_ij / mu_ir) = x_ij' beta_j  for j != r,
///   log(phi_i)         = d_i' gamma,
/// where r is the reference component (0-based).
struct ModelSpec {
  std::size_t k = 0;
  /// One entry per non-reference component, in component order.
  std::vector<Submodel> mean;
  Submodel precision;
  std::size_t reference = 0;

  /// Same mean covariates in every mean submodel.
  static ModelSpec uniform(std::size_t k, const Submodel& mean, const Submodel& precision,
                           std::size_t reference = 0);

  std::size_t parameter_count() const;
  /// Component index driven by mean submodel m.
  std::size_t mean_component(std::size_t m) const;
  void validate() const;
  /// Also checks that every covariate exists in `data`.
  void validate(const Dataset& data) const;

  bool operator==(const ModelSpec&) const = default;
};

struct CoefficientVector {
  std::vector<Eigen::VectorXd> beta;  ///< parallel to ModelSpec::mean
  Eigen::VectorXd gamma;

  static CoefficientVector zeros(const ModelSpec& spec);
  static CoefficientVector unflatten(const ModelSpec& spec, const Eigen::VectorXd& theta);
  /// beta blocks in order, then gamma.
  Eigen::VectorXd flatten() const;
};

/// Per-observation Dirichlet parameters.
struct FittedValues {
  Eigen::MatrixXd mu;   ///< n x k, rows on the open simplex
  Eigen::VectorXd phi;  ///< n
};

struct LinearPrediction {
  Eigen::VectorXd mu;
  double phi;
};

/// Softmax of the mean predictors (reference pinned at 0) and exp of the
/// precision predictor for one covariate row. Throws DataError on a missing
/// column and FitError on a non-finite result.
LinearPrediction linear_predictors(const ModelSpec& spec, const CoefficientVector& coef,
                                   const std::map<std::string, double>& covariate_row);

/// Model matrices compiled from a spec and the covariates of a dataset.
class Design {
 public:
  Design(ModelSpec spec, const Dataset& data);

  const ModelSpec& spec() const noexcept { return spec_; }
  std::size_t n() const noexcept { return n_; }
  std::size_t k() const noexcept { return spec_.k; }
  std::size_t parameter_count() const noexcept { return spec_.parameter_count(); }

  const Eigen::MatrixXd& mean_block(std::size_t m) const { return mean_blocks_[m]; }
  const Eigen::MatrixXd& precision_block() const noexcept { return precision_block_; }

  /// Throws FitError if any fitted value is non-finite.
  FittedValues predict(const Eigen::VectorXd& theta) const;

 private:
  ModelSpec spec_;
  std::size_t n_;
  std::vector<Eigen::MatrixXd> mean_blocks_;
  Eigen::MatrixXd precision_block_;
};

/// Log-likelihood of a design against one response matrix. The covariate
/// part is shared, so bootstrap refits only swap the responses.
class Likelihood {
 public:
  Likelihood(const Design& design, const Eigen::MatrixXd& responses);

  const Design& design() const noexcept { return *design_; }

  /// Returns the log-likelihood at theta and, if requested, its gradient.
  /// Non-finite parameter regions return -inf rather than throwing.
  double evaluate(const Eigen::VectorXd& theta, Eigen::VectorXd* gradient = nullptr) const;

 private:
  const Design* design_;
  Eigen::MatrixXd log_y_;
};

double log_likelihood(const ModelSpec& spec, const CoefficientVector& coef, const Dataset& data);
Eigen::VectorXd gradient(const ModelSpec& spec, const CoefficientVector& coef,
                         const Dataset& data);

struct FitOptions {
  int max_iter = 500;
  /// Convergence threshold on the max-norm of the gradient.
  double tol = 1e-6;
  std::optional<Eigen::VectorXd> init;
  /// Starting inverse-Hessian approximation (e.g. from a previous fit).
  std::optional<Eigen::MatrixXd> init_inverse_hessian;
};

struct FittedModel {
  ModelSpec spec;
  CoefficientVector coef;
  double loglik = 0.0;
  Eigen::MatrixXd fitted_mu;
  Eigen::VectorXd fitted_phi;
  std::optional<Eigen::VectorXd> std_errors;
  bool converged = false;
  int iterations = 0;
  double gradient_max_norm = 0.0;
  /// Final quasi-Newton inverse-Hessian approximation of -loglik.
  Eigen::MatrixXd inverse_hessian;

  FittedValues fitted_values() const { return {fitted_mu, fitted_phi}; }
};

/// Starting point: intercepts from log ratios of component means, the
/// precision intercept from the averaged moment estimate, slopes 0.
Eigen::VectorXd initial_coefficients(const ModelSpec& spec, const Dataset& data);

/// Maximum likelihood by BFGS with backtracking line search.
/// Throws FitError when the likelihood cannot be made finite along the search
/// direction.
FittedModel fit_mle(const ModelSpec& spec, const Dataset& data, const FitOptions& options = {});
FittedModel fit_mle(const Likelihood& likelihood, const Eigen::VectorXd& init,
                    const FitOptions& options = {});

/// Central finite-difference Hessian of the log-likelihood, built from the
/// analytic gradient with step 1e-5 * max(1, |theta_c|).
Eigen::MatrixXd numerical_hessian(const Likelihood& likelihood, const Eigen::VectorXd& theta);

/// Square roots of the diagonal of the inverse observed information. Throws
/// SingularInformationError when the information is not positive definite.
Eigen::VectorXd standard_errors(const FittedModel& fit, const Dataset& data);

struct LikelihoodRatioTest {
  double statistic;
  std::size_t df;
  double p_value;
};

/// `reduced` must be nested in `full` (each submodel's covariates a subset).
LikelihoodRatioTest lr_test(const FittedModel& full, const FittedModel& reduced);

bool is_nested(const ModelSpec& reduced, const ModelSpec& full);

}  // namespace compresid
