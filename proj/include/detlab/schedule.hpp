#pragma once

#include <algorithm>
#include <cmath>

#include "detlab/errors.hpp"

namespace detlab {

// Row-count schedules used by the hybrid and diagnostic experiments. All of
// them are deterministic functions of n so runs are reproducible from config.

// Number of trailing rows replaced in a hybrid matrix: ceil((ln n)^2).
inline int tail_block(int n) {
  if (n < 2) throw InvalidConfig("tail_block needs n >= 2");
  const double ln = std::log(static_cast<double>(n));
  const int k = static_cast<int>(std::ceil(ln * ln));
  return std::min(k, n);
}

// Index where the trailing block starts: n0 = n - tail_block(n).
inline int n0_split(int n) { return n - tail_block(n); }

// Early-phase cutoff n1 = n - ceil(n / (ln n)^4), clamped to [1, n - 1] so at
// least one late row always exists.
inline int n1_index(int n) {
  if (n < 2) throw InvalidConfig("n1_index needs n >= 2");
  const double ln = std::log(static_cast<double>(n));
  const int drop = static_cast<int>(std::ceil(static_cast<double>(n) / (ln * ln * ln * ln)));
  return std::clamp(n - drop, 1, n - 1);
}

// Truncation level L(n) = (ln n)^max(1, 3/c2) for tail-decay exponent c2.
inline double truncation_level(int n, double c2) {
  if (n < 2) throw InvalidConfig("truncation_level needs n >= 2");
  if (!(c2 > 0.0)) throw InvalidConfig("truncation_level needs c2 > 0");
  const double expo = std::max(1.0, 3.0 / c2);
  return std::pow(std::log(static_cast<double>(n)), expo);
}

}  // namespace detlab
