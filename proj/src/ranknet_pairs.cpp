// Built with -ffast-math so the inner loop vectorises (exp/log1p from the
// vector math library). Keep anything that inspects NaN/Inf out of this file.
#include "ranknet_pairs.hpp"

#include <algorithm>
#include <cmath>

namespace kdq::detail {

double ranknet_pair_sweep(const double* teacher, const double* student, double* grad,
                          std::size_t n) {
  double loss = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double ti = teacher[i];
    const double si = student[i];
    double li = 0.0;
    double gi = 0.0;
    if (grad != nullptr) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const double margin = ti - teacher[j];  // >= 0 by sort order
        const double x = si - student[j];
        const double e = std::exp(-std::fabs(x));
        li += margin * (std::max(-x, 0.0) + std::log1p(e));
        const double g = margin * ((x >= 0.0 ? e : 1.0) / (1.0 + e));  // margin * sigmoid(-x)
        gi += g;
        grad[j] += g;
      }
      grad[i] -= gi;
    } else {
      for (std::size_t j = i + 1; j < n; ++j) {
        const double margin = ti - teacher[j];
        const double x = si - student[j];
        li += margin * (std::max(-x, 0.0) + std::log1p(std::exp(-std::fabs(x))));
      }
    }
    loss += li;
  }
  return loss;
}

}  // namespace kdq::detail
