#include "compresid/preprocess.hpp"

#include <cmath>
#include <string>

#include "compresid/dirichlet.hpp"
#include "compresid/error.hpp"

namespace compresid {

Dataset preprocess_zeros(const Dataset& data, double epsilon, double max_zero_fraction) {
  const Eigen::Index n = data.responses.rows();
  const Eigen::Index k = data.responses.cols();
  if (k < 2) throw UsageError("preprocess_zeros needs at least two components");
  if (!(epsilon > 0.0) || !(epsilon < 1.0 / static_cast<double>(k))) {
    throw UsageError("zero replacement epsilon must lie in (0, 1/k)");
  }
  if (!(max_zero_fraction >= 0.0 && max_zero_fraction <= 1.0)) {
    throw UsageError("max_zero_fraction must lie in [0, 1]");
  }

  Dataset out = data;
  std::size_t zero_rows = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = static_cast<std::size_t>(i);
    bool has_zero = false;
    double sum = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      const double w = data.responses(i, j);
      if (!std::isfinite(w) || w < 0.0 || w > 1.0) {
        throw DataError("component " + data.component_names.at(static_cast<std::size_t>(j)) +
                            " outside [0, 1]",
                        row);
      }
      has_zero = has_zero || w == 0.0;
      sum += w;
    }
    if (std::fabs(sum - 1.0) > kObservedSumTolerance) {
      throw DataError("composition does not sum to 1", row);
    }
    if (!has_zero) continue;
    ++zero_rows;
    for (Eigen::Index j = 0; j < k; ++j) {
      if (out.responses(i, j) == 0.0) out.responses(i, j) = epsilon;
    }
    out.responses.row(i) /= out.responses.row(i).sum();
  }

  if (n > 0 && static_cast<double>(zero_rows) > max_zero_fraction * static_cast<double>(n)) {
    throw DataError(std::to_string(zero_rows) + " of " + std::to_string(n) +
                    " rows contain zeros; replacement is only sensible for a few zeros, "
                    "consider a zero-adjusted Dirichlet model instead");
  }
  return out;
}

}  // namespace compresid
