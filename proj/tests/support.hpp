// Small data generators shared by the test files.
#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "compresid/dataset.hpp"
#include "compresid/dirichlet.hpp"
#include "compresid/regression.hpp"
#include "compresid/rng.hpp"

namespace testsupport {

/// n rows with uniform covariates named x1..xc and placeholder responses.
inline compresid::Dataset uniform_design(std::size_t n, std::size_t k, std::size_t c,
                                         compresid::RngStream& rng) {
  compresid::Dataset d;
  for (std::size_t j = 0; j < k; ++j) d.component_names.push_back("y" + std::to_string(j + 1));
  for (std::size_t j = 0; j < c; ++j) d.covariate_names.push_back("x" + std::to_string(j + 1));
  const auto rows = static_cast<Eigen::Index>(n);
  d.covariates.resize(rows, static_cast<Eigen::Index>(c));
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < d.covariates.cols(); ++j) d.covariates(i, j) = rng.next_uniform();
  }
  d.responses = Eigen::MatrixXd::Constant(rows, static_cast<Eigen::Index>(k), 1.0 / static_cast<double>(k));
  return d;
}

/// Replaces the responses by a draw from the model at `theta`.
inline compresid::Dataset simulate(const compresid::ModelSpec& spec, const Eigen::VectorXd& theta,
                                   const compresid::Dataset& design, compresid::RngStream& rng) {
  const compresid::Design d(spec, design);
  const compresid::FittedValues fv = d.predict(theta);
  return design.with_responses(compresid::sample_rows(fv.mu, fv.phi, rng));
}

}  // namespace testsupport
