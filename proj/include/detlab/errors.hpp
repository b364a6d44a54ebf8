#pragma once

#include <stdexcept>
#include <string>

namespace detlab {

// Configuration rejected before any work started (bad flag, bad JSON, bad range).
struct InvalidConfig : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A derived atom law collapsed (zero variance after truncation).
struct DegenerateDistribution : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Row set handed to a projection helper was not linearly independent.
struct NotFullRank : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A decomposition trace ended early and the caller required a full one.
struct DegenerateTrace : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Normalization asked for on a singular sample (log|det| = -inf).
struct SingularStatistic : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Statistic requested on an empty (or all-filtered) sample vector.
struct EmptySample : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem write failed.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace detlab
