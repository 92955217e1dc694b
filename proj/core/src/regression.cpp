#include "compresid/regression.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "compresid/error.hpp"
#include "compresid/special.hpp"

namespace compresid {

// ---------------------------------------------------------------------------
// ModelSpec / CoefficientVector
// ---------------------------------------------------------------------------

ModelSpec ModelSpec::uniform(std::size_t k, const Submodel& mean, const Submodel& precision,
                             std::size_t reference) {
  ModelSpec spec;
  spec.k = k;
  spec.mean.assign(k > 0 ? k - 1 : 0, mean);
  spec.precision = precision;
  spec.reference = reference;
  return spec;
}

std::size_t ModelSpec::parameter_count() const {
  std::size_t count = precision.size();
  for (const auto& m : mean) count += m.size();
  return count;
}

std::size_t ModelSpec::mean_component(std::size_t m) const {
  return m < reference ? m : m + 1;
}

void ModelSpec::validate() const {
  if (k < 2) throw UsageError("model needs at least 2 components");
  if (mean.size() != k - 1) {
    throw UsageError("model needs " + std::to_string(k - 1) + " mean submodels, got " +
                     std::to_string(mean.size()));
  }
  if (reference >= k) throw UsageError("reference component out of range");
  if (precision.size() == 0) throw UsageError("precision submodel is empty");
  for (const auto& m : mean) {
    if (m.size() == 0) throw UsageError("mean submodel is empty");
  }
}

void ModelSpec::validate(const Dataset& data) const {
  validate();
  if (data.k() != k) {
    throw DataError("model has " + std::to_string(k) + " components, data has " +
                    std::to_string(data.k()));
  }
  for (const auto& m : mean) {
    for (const auto& c : m.covariates) (void)data.covariate_index(c);
  }
  for (const auto& c : precision.covariates) (void)data.covariate_index(c);
}

CoefficientVector CoefficientVector::zeros(const ModelSpec& spec) {
  CoefficientVector coef;
  for (const auto& m : spec.mean) coef.beta.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.size())));
  coef.gamma = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.precision.size()));
  return coef;
}

CoefficientVector CoefficientVector::unflatten(const ModelSpec& spec, const Eigen::VectorXd& theta) {
  if (static_cast<std::size_t>(theta.size()) != spec.parameter_count()) {
    throw UsageError("coefficient vector has " + std::to_string(theta.size()) +
                     " entries, model needs " + std::to_string(spec.parameter_count()));
  }
  CoefficientVector coef;
  Eigen::Index offset = 0;
  for (const auto& m : spec.mean) {
    const auto p = static_cast<Eigen::Index>(m.size());
    coef.beta.push_back(theta.segment(offset, p));
    offset += p;
  }
  coef.gamma = theta.segment(offset, static_cast<Eigen::Index>(spec.precision.size()));
  return coef;
}

Eigen::VectorXd CoefficientVector::flatten() const {
  Eigen::Index total = gamma.size();
  for (const auto& b : beta) total += b.size();
  Eigen::VectorXd theta(total);
  Eigen::Index offset = 0;
  for (const auto& b : beta) {
    theta.segment(offset, b.size()) = b;
    offset += b.size();
  }
  theta.segment(offset, gamma.size()) = gamma;
  return theta;
}

// ---------------------------------------------------------------------------
// Linear predictors
// ---------------------------------------------------------------------------

namespace {

double submodel_predictor(const Submodel& sub, const Eigen::VectorXd& coef,
                          const std::map<std::string, double>& row) {
  if (static_cast<std::size_t>(coef.size()) != sub.size()) {
    throw UsageError("coefficient block size does not match submodel");
  }
  double eta = 0.0;
  Eigen::Index c = 0;
  if (sub.intercept) eta += coef[c++];
  for (const auto& name : sub.covariates) {
    const auto it = row.find(name);
    if (it == row.end()) throw DataError("missing covariate '" + name + "'");
    eta += coef[c++] * it->second;
  }
  return eta;
}

// In-place softmax with max subtraction.
void softmax(double* eta, Eigen::Index k) {
  double top = eta[0];
  for (Eigen::Index j = 1; j < k; ++j) top = std::max(top, eta[j]);
  double total = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    eta[j] = std::exp(eta[j] - top);
    total += eta[j];
  }
  for (Eigen::Index j = 0; j < k; ++j) eta[j] /= total;
}

}  // namespace

LinearPrediction linear_predictors(const ModelSpec& spec, const CoefficientVector& coef,
                                   const std::map<std::string, double>& covariate_row) {
  spec.validate();
  if (coef.beta.size() != spec.mean.size()) throw UsageError("wrong number of beta blocks");
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.k));
  for (std::size_t m = 0; m < spec.mean.size(); ++m) {
    eta[static_cast<Eigen::Index>(spec.mean_component(m))] =
        submodel_predictor(spec.mean[m], coef.beta[m], covariate_row);
  }
  const double log_phi = submodel_predictor(spec.precision, coef.gamma, covariate_row);
  if (!eta.allFinite() || !std::isfinite(log_phi)) throw FitError("non-finite linear predictor");
  softmax(eta.data(), eta.size());
  const double phi = std::exp(log_phi);
  if (!std::isfinite(phi) || phi <= 0.0 || eta.minCoeff() <= 0.0) {
    throw FitError("linear predictor leaves the parameter space");
  }
  return {std::move(eta), phi};
}

// ---------------------------------------------------------------------------
// Design
// ---------------------------------------------------------------------------

namespace {

Eigen::MatrixXd build_block(const Submodel& sub, const Dataset& data) {
  const auto n = static_cast<Eigen::Index>(data.n());
  Eigen::MatrixXd block(n, static_cast<Eigen::Index>(sub.size()));
  Eigen::Index c = 0;
  if (sub.intercept) block.col(c++).setOnes();
  for (const auto& name : sub.covariates) {
    block.col(c++) = data.covariates.col(static_cast<Eigen::Index>(data.covariate_index(name)));
  }
  return block;
}

}  // namespace

Design::Design(ModelSpec spec, const Dataset& data) : spec_(std::move(spec)), n_(data.n()) {
  spec_.validate(data);
  for (const auto& m : spec_.mean) mean_blocks_.push_back(build_block(m, data));
  precision_block_ = build_block(spec_.precision, data);
}

FittedValues Design::predict(const Eigen::VectorXd& theta) const {
  const auto n = static_cast<Eigen::Index>(n_);
  const auto k = static_cast<Eigen::Index>(spec_.k);
  FittedValues out{Eigen::MatrixXd::Zero(n, k), Eigen::VectorXd(n)};
  Eigen::VectorXd eta(k);
  for (Eigen::Index i = 0; i < n; ++i) {
    eta.setZero();
    Eigen::Index offset = 0;
    for (std::size_t m = 0; m < mean_blocks_.size(); ++m) {
      const auto& X = mean_blocks_[m];
      eta[static_cast<Eigen::Index>(spec_.mean_component(m))] =
          X.row(i).dot(theta.segment(offset, X.cols()));
      offset += X.cols();
    }
    const double log_phi = precision_block_.row(i).dot(theta.segment(offset, precision_block_.cols()));
    if (!eta.allFinite() || !std::isfinite(log_phi)) throw FitError("non-finite linear predictor");
    softmax(eta.data(), k);
    out.mu.row(i) = eta.transpose();
    out.phi[i] = std::exp(log_phi);
    if (!(out.phi[i] > 0.0) || !std::isfinite(out.phi[i]) || eta.minCoeff() <= 0.0) {
      throw FitError("fitted values leave the parameter space");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Likelihood
// ---------------------------------------------------------------------------

Likelihood::Likelihood(const Design& design, const Eigen::MatrixXd& responses)
    : design_(&design), log_y_(responses.array().log().matrix()) {
  if (static_cast<std::size_t>(responses.rows()) != design.n() ||
      static_cast<std::size_t>(responses.cols()) != design.k()) {
    throw DataError("response matrix does not match the design");
  }
  for (Eigen::Index i = 0; i < responses.rows(); ++i) {
    if (!log_y_.row(i).allFinite() || (responses.row(i).array() >= 1.0).any()) {
      throw DataError("response row is not an interior composition", static_cast<std::size_t>(i));
    }
  }
}

double Likelihood::evaluate(const Eigen::VectorXd& theta, Eigen::VectorXd* grad) const {
  const Design& d = *design_;
  const ModelSpec& spec = d.spec();
  const auto n = static_cast<Eigen::Index>(d.n());
  const auto k = static_cast<Eigen::Index>(spec.k);
  const std::size_t blocks = spec.mean.size();
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();

  if (grad) grad->setZero(theta.size());
  // Stack buffers; k is small.
  Eigen::VectorXd eta(k);
  Eigen::VectorXd score(k);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    eta.setZero();
    Eigen::Index offset = 0;
    for (std::size_t m = 0; m < blocks; ++m) {
      const auto& X = d.mean_block(m);
      eta[static_cast<Eigen::Index>(spec.mean_component(m))] =
          X.row(i).dot(theta.segment(offset, X.cols()));
      offset += X.cols();
    }
    const auto& D = d.precision_block();
    const double log_phi = D.row(i).dot(theta.segment(offset, D.cols()));
    if (!std::isfinite(log_phi) || !eta.allFinite()) return kNegInf;
    softmax(eta.data(), k);
    const double phi = std::exp(log_phi);
    if (!(phi > 0.0) || !std::isfinite(phi)) return kNegInf;

    double ll = log_gamma(phi);
    double mean_score = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      const double alpha = phi * eta[j];
      if (!(alpha > 0.0)) return kNegInf;
      const double ly = log_y_(i, j);
      ll += (alpha - 1.0) * ly - log_gamma(alpha);
      if (grad) {
        score[j] = ly - digamma(alpha);
        mean_score += eta[j] * score[j];
      }
    }
    total += ll;
    if (!grad) continue;

    // d ll / d eta_j = phi mu_j (score_j - sum_m mu_m score_m)
    // d ll / d log(phi) = phi (psi(phi) + sum_m mu_m score_m)
    offset = 0;
    for (std::size_t m = 0; m < blocks; ++m) {
      const auto& X = d.mean_block(m);
      const auto j = static_cast<Eigen::Index>(spec.mean_component(m));
      const double weight = phi * eta[j] * (score[j] - mean_score);
      grad->segment(offset, X.cols()) += weight * X.row(i).transpose();
      offset += X.cols();
    }
    const double weight = phi * (digamma(phi) + mean_score);
    grad->segment(offset, D.cols()) += weight * D.row(i).transpose();
  }
  if (!std::isfinite(total)) return kNegInf;
  return total;
}

double log_likelihood(const ModelSpec& spec, const CoefficientVector& coef, const Dataset& data) {
  data.validate();
  const Design design(spec, data);
  const Likelihood lik(design, data.responses);
  return lik.evaluate(coef.flatten());
}

Eigen::VectorXd gradient(const ModelSpec& spec, const CoefficientVector& coef, const Dataset& data) {
  data.validate();
  const Design design(spec, data);
  const Likelihood lik(design, data.responses);
  Eigen::VectorXd g;
  lik.evaluate(coef.flatten(), &g);
  return g;
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

Eigen::VectorXd initial_coefficients(const ModelSpec& spec, const Dataset& data) {
  spec.validate(data);
  CoefficientVector coef = CoefficientVector::zeros(spec);
  const Eigen::RowVectorXd means = data.responses.colwise().mean();
  const auto ref = static_cast<Eigen::Index>(spec.reference);
  for (std::size_t m = 0; m < spec.mean.size(); ++m) {
    if (!spec.mean[m].intercept) continue;
    const auto j = static_cast<Eigen::Index>(spec.mean_component(m));
    coef.beta[m][0] = std::log(means[j] / means[ref]);
  }
  if (spec.precision.intercept) {
    // phi_j = mean (1 - mean) / var - 1 from Var(w_j) = mu_j (1 - mu_j) / (1 + phi).
    double phi_sum = 0.0;
    int used = 0;
    const double n = static_cast<double>(data.n());
    for (Eigen::Index j = 0; j < data.responses.cols(); ++j) {
      const double var = (data.responses.col(j).array() - means[j]).square().sum() / std::max(1.0, n - 1.0);
      if (var <= 0.0) continue;
      const double phi_j = means[j] * (1.0 - means[j]) / var - 1.0;
      if (phi_j > 0.0 && std::isfinite(phi_j)) {
        phi_sum += phi_j;
        ++used;
      }
    }
    coef.gamma[0] = used > 0 ? std::log(phi_sum / used) : 0.0;
  }
  return coef.flatten();
}

namespace {

constexpr double kArmijo = 1e-4;
constexpr int kMaxBacktracks = 60;
constexpr double kMaxStep = 10.0;

struct SearchResult {
  bool accepted = false;
  bool any_finite = false;
  Eigen::VectorXd theta;
  Eigen::VectorXd grad;
  double value = 0.0;
};

// Backtracking on the negative log-likelihood along direction p.
SearchResult line_search(const Likelihood& lik, const Eigen::VectorXd& theta, double f,
                         const Eigen::VectorXd& g, const Eigen::VectorXd& p) {
  SearchResult result;
  const double slope = g.dot(p);
  double t = 1.0;
  const double longest = p.cwiseAbs().maxCoeff();
  if (longest * t > kMaxStep) t = kMaxStep / longest;
  Eigen::VectorXd trial;
  Eigen::VectorXd trial_grad;
  for (int attempt = 0; attempt < kMaxBacktracks; ++attempt, t *= 0.5) {
    trial = theta + t * p;
    const double value = -lik.evaluate(trial, &trial_grad);
    if (!std::isfinite(value)) continue;
    trial_grad = -trial_grad;
    result.any_finite = true;
    const bool sufficient = value <= f + kArmijo * t * slope;
    // At the rounding floor of f the Armijo test is noise; accept a step that
    // does not raise f and shrinks the gradient.
    const bool flat = std::fabs(value - f) <= 1e-13 * (1.0 + std::fabs(f)) &&
                      trial_grad.cwiseAbs().maxCoeff() < g.cwiseAbs().maxCoeff();
    if (sufficient || flat) {
      result.accepted = true;
      result.theta = trial;
      result.grad = trial_grad;
      result.value = value;
      return result;
    }
  }
  return result;
}

}  // namespace

FittedModel fit_mle(const Likelihood& lik, const Eigen::VectorXd& init, const FitOptions& options) {
  const Design& design = lik.design();
  const auto p = static_cast<Eigen::Index>(design.parameter_count());
  if (init.size() != p) throw UsageError("initial coefficient vector has the wrong size");
  if (design.n() <= design.parameter_count()) {
    throw DataError("need more observations (" + std::to_string(design.n()) +
                    ") than parameters (" + std::to_string(design.parameter_count()) + ")");
  }

  Eigen::VectorXd theta = init;
  Eigen::VectorXd g;
  double f = -lik.evaluate(theta, &g);
  if (!std::isfinite(f)) throw FitError("log-likelihood is not finite at the initial point");
  g = -g;

  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(p, p);
  bool have_curvature = options.init_inverse_hessian.has_value();
  Eigen::MatrixXd H = have_curvature ? *options.init_inverse_hessian : identity;
  if (H.rows() != p || H.cols() != p) throw UsageError("initial inverse Hessian has the wrong size");

  FittedModel fit;
  int iter = 0;
  bool converged = false;
  for (; iter < options.max_iter; ++iter) {
    if (g.cwiseAbs().maxCoeff() <= options.tol) {
      converged = true;
      break;
    }
    Eigen::VectorXd dir = -H * g;
    if (g.dot(dir) >= 0.0) {
      H = identity;
      have_curvature = false;
      dir = -g;
    }
    SearchResult step = line_search(lik, theta, f, g, dir);
    if (!step.accepted && have_curvature) {
      H = identity;
      have_curvature = false;
      dir = -g;
      step = line_search(lik, theta, f, g, dir);
    }
    if (!step.accepted) {
      if (!step.any_finite) {
        throw FitError("log-likelihood not finite anywhere along the search direction");
      }
      break;
    }
    const Eigen::VectorXd s = step.theta - theta;
    const Eigen::VectorXd y = step.grad - g;
    theta = step.theta;
    g = step.grad;
    f = step.value;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!have_curvature) {
        H = (sy / y.squaredNorm()) * identity;
        have_curvature = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::VectorXd Hy = H * y;
      const double yHy = y.dot(Hy);
      H += ((1.0 + rho * yHy) * rho) * (s * s.transpose()) -
           rho * (Hy * s.transpose() + s * Hy.transpose());
    }
  }
  if (!converged && g.cwiseAbs().maxCoeff() <= options.tol) converged = true;

  const FittedValues fv = design.predict(theta);
  fit.spec = design.spec();
  fit.coef = CoefficientVector::unflatten(fit.spec, theta);
  fit.loglik = -f;
  fit.fitted_mu = fv.mu;
  fit.fitted_phi = fv.phi;
  fit.converged = converged;
  fit.iterations = iter;
  fit.gradient_max_norm = g.cwiseAbs().maxCoeff();
  fit.inverse_hessian = std::move(H);
  return fit;
}

FittedModel fit_mle(const ModelSpec& spec, const Dataset& data, const FitOptions& options) {
  data.validate();
  const Design design(spec, data);
  const Likelihood lik(design, data.responses);
  const Eigen::VectorXd init = options.init ? *options.init : initial_coefficients(spec, data);
  return fit_mle(lik, init, options);
}

// ---------------------------------------------------------------------------
// Standard errors and likelihood-ratio tests
// ---------------------------------------------------------------------------

Eigen::MatrixXd numerical_hessian(const Likelihood& lik, const Eigen::VectorXd& theta) {
  const Eigen::Index p = theta.size();
  Eigen::MatrixXd hessian(p, p);
  Eigen::VectorXd plus;
  Eigen::VectorXd minus;
  for (Eigen::Index c = 0; c < p; ++c) {
    const double h = 1e-5 * std::max(1.0, std::fabs(theta[c]));
    Eigen::VectorXd shifted = theta;
    shifted[c] = theta[c] + h;
    const double up = lik.evaluate(shifted, &plus);
    shifted[c] = theta[c] - h;
    const double down = lik.evaluate(shifted, &minus);
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw FitError("log-likelihood not finite near the estimate");
    }
    hessian.col(c) = (plus - minus) / (2.0 * h);
  }
  return 0.5 * (hessian + hessian.transpose());
}

Eigen::VectorXd standard_errors(const FittedModel& fit, const Dataset& data) {
  data.validate();
  const Design design(fit.spec, data);
  const Likelihood lik(design, data.responses);
  const Eigen::MatrixXd information = -numerical_hessian(lik, fit.coef.flatten());
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(information);
  const double largest = eig.eigenvalues().maxCoeff();
  const double smallest = eig.eigenvalues().minCoeff();
  const double condition =
      smallest > 0.0 ? largest / smallest : std::numeric_limits<double>::infinity();
  if (!(smallest > 0.0) || condition > 1e12) {
    throw SingularInformationError("observed information is singular", condition);
  }
  const Eigen::MatrixXd covariance = eig.eigenvectors() *
                                     eig.eigenvalues().cwiseInverse().asDiagonal() *
                                     eig.eigenvectors().transpose();
  return covariance.diagonal().cwiseSqrt();
}

namespace {

bool submodel_nested(const Submodel& reduced, const Submodel& full) {
  if (reduced.intercept && !full.intercept) return false;
  return std::all_of(reduced.covariates.begin(), reduced.covariates.end(), [&](const auto& c) {
    return std::find(full.covariates.begin(), full.covariates.end(), c) != full.covariates.end();
  });
}

}  // namespace

bool is_nested(const ModelSpec& reduced, const ModelSpec& full) {
  if (reduced.k != full.k || reduced.reference != full.reference ||
      reduced.mean.size() != full.mean.size()) {
    return false;
  }
  for (std::size_t m = 0; m < reduced.mean.size(); ++m) {
    if (!submodel_nested(reduced.mean[m], full.mean[m])) return false;
  }
  return submodel_nested(reduced.precision, full.precision);
}

LikelihoodRatioTest lr_test(const FittedModel& full, const FittedModel& reduced) {
  if (!is_nested(reduced.spec, full.spec)) {
    throw UsageError("lr_test: reduced model is not nested in the full model");
  }
  if (!full.converged || !reduced.converged) {
    throw FitError("lr_test: both models must be converged");
  }
  double statistic = 2.0 * (full.loglik - reduced.loglik);
  if (statistic < -1e-6) {
    throw FitError("lr_test: full model fits worse than the reduced model (statistic " +
                   std::to_string(statistic) + ")");
  }
  statistic = std::max(0.0, statistic);
  const std::size_t df = full.spec.parameter_count() - reduced.spec.parameter_count();
  const double p = df == 0 ? 1.0 : 1.0 - chi_square_cdf(statistic, static_cast<double>(df));
  return {statistic, df, p};
}

}  // namespace compresid
