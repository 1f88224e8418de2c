#pragma once

#include <cstddef>

namespace kdq::detail {

/// Pair sweep for teacher-weighted RankNet over candidates already sorted by
/// descending teacher score. Adds dLoss/ds to grad (sorted order) when grad
/// is non-null and returns the loss. Inputs must be finite.
double ranknet_pair_sweep(const double* teacher, const double* student, double* grad,
                          std::size_t n);

}  // namespace kdq::detail
