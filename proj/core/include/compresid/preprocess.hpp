#pragma once

#include "compresid/dataset.hpp"

namespace compresid {

/// Replaces exact zeros in the responses by `epsilon` and renormalizes the
/// affected rows. Rows without zeros are copied untouched.
///
/// Throws UsageError unless 0 < epsilon < 1/k, DataError (with the row index)
/// for a component outside [0, 1] or a row that does not sum to 1, and
/// DataError when more than `max_zero_fraction` of the rows contain a zero.
Dataset preprocess_zeros(const Dataset& data, double epsilon = 0.001,
                         double max_zero_fraction = 0.1);

}  // namespace compresid
