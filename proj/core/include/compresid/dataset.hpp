#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace compresid {

/// Compositional responses plus named real covariates, one row per
/// observation.
struct Dataset {
  std::vector<std::string> component_names;
  Eigen::MatrixXd responses;  ///< n x k
  std::vector<std::string> covariate_names;
  Eigen::MatrixXd covariates;  ///< n x c

  std::size_t n() const noexcept { return static_cast<std::size_t>(responses.rows()); }
  std::size_t k() const noexcept { return static_cast<std::size_t>(responses.cols()); }

  /// Throws DataError if the column does not exist.
  std::size_t covariate_index(std::string_view name) const;
  bool has_covariate(std::string_view name) const;

  /// Every response row must be a valid Composition; throws DataError with the
  /// row index otherwise.
  void validate() const;

  /// Same covariates, new responses.
  Dataset with_responses(Eigen::MatrixXd y) const;
};

}  // namespace compresid
