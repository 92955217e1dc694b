#include "compresid/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "compresid/dirichlet.hpp"
#include "compresid/error.hpp"

namespace compresid {

std::size_t Dataset::covariate_index(std::string_view name) const {
  const auto it = std::find(covariate_names.begin(), covariate_names.end(), name);
  if (it == covariate_names.end()) {
    throw DataError("unknown covariate column '" + std::string(name) + "'");
  }
  return static_cast<std::size_t>(it - covariate_names.begin());
}

bool Dataset::has_covariate(std::string_view name) const {
  return std::find(covariate_names.begin(), covariate_names.end(), name) !=
         covariate_names.end();
}

void Dataset::validate() const {
  if (component_names.size() != k()) {
    throw DataError("component names do not match response columns");
  }
  if (covariate_names.size() != static_cast<std::size_t>(covariates.cols()) ||
      (covariates.cols() > 0 && covariates.rows() != responses.rows())) {
    throw DataError("covariate names do not match covariate columns");
  }
  if (k() < 2) throw DataError("need at least 2 response components");
  for (Eigen::Index i = 0; i < responses.rows(); ++i) {
    double total = 0.0;
    for (Eigen::Index j = 0; j < responses.cols(); ++j) {
      const double w = responses(i, j);
      if (!(w > 0.0 && w < 1.0)) {
        throw DataError("response component '" + component_names[static_cast<std::size_t>(j)] +
                            "' outside (0, 1)",
                        static_cast<std::size_t>(i));
      }
      total += w;
    }
    if (std::fabs(total - 1.0) > kCompositionSumTolerance) {
      throw DataError("response row does not sum to 1", static_cast<std::size_t>(i));
    }
  }
  for (Eigen::Index i = 0; i < covariates.rows(); ++i) {
    for (Eigen::Index c = 0; c < covariates.cols(); ++c) {
      if (!std::isfinite(covariates(i, c))) {
        throw DataError("non-finite covariate '" + covariate_names[static_cast<std::size_t>(c)] + "'",
                        static_cast<std::size_t>(i));
      }
    }
  }
}

Dataset Dataset::with_responses(Eigen::MatrixXd y) const {
  Dataset out;
  out.component_names = component_names;
  out.responses = std::move(y);
  out.covariate_names = covariate_names;
  out.covariates = covariates;
  return out;
}

}  // namespace compresid
