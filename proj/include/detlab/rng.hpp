#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "detlab/errors.hpp"

namespace detlab {

// Identifies one reproducible random stream: a master seed plus the index of
// the trial (or sub-experiment) within it.
struct SeedSpec {
  std::uint64_t master_seed = 0;
  std::uint64_t trial_index = 0;
};

namespace rng_detail {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

constexpr std::uint64_t finalize(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace rng_detail

// Maps (parent seed, child index) to a child seed. Children of one parent are
// decorrelated, and the map is pure, so any worker can reconstruct any stream.
constexpr std::uint64_t derive_stream(std::uint64_t parent, std::uint64_t index) {
  return rng_detail::finalize(parent + rng_detail::kGolden * (index + 1));
}

constexpr std::uint64_t stream_seed(const SeedSpec& spec) {
  return derive_stream(spec.master_seed, spec.trial_index);
}

// splitmix64 counter generator. Small state, splittable via derive_stream,
// passes BigCrush; good enough for every sampling job here.
class Rng {
 public:
  explicit constexpr Rng(std::uint64_t seed) : state_(seed) {}
  explicit constexpr Rng(const SeedSpec& spec) : state_(stream_seed(spec)) {}

  constexpr std::uint64_t next_u64() {
    state_ += rng_detail::kGolden;
    return rng_detail::finalize(state_);
  }

  // Uniform on [0, 1), 53-bit resolution.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1): safe as a log argument.
  double next_open() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Standard normal via Box-Muller; caches the second value of each pair.
  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = next_open();
    const double u2 = next_double();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

  double next_sign() { return (next_u64() >> 63) ? 1.0 : -1.0; }

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Chi-square with k degrees of freedom as a literal sum of squared normals.
// O(k) per draw; kept as the independent cross-check for the gamma route.
inline double sample_chi_square_sum(Rng& rng, int k) {
  if (k < 1) throw InvalidConfig("chi-square needs k >= 1");
  double acc = 0.0;
  for (int i = 0; i < k; ++i) {
    const double z = rng.next_normal();
    acc += z * z;
  }
  return acc;
}

namespace rng_detail {

// Marsaglia-Tsang squeeze for Gamma(alpha, 1), alpha >= 1.
inline double gamma_ge1(Rng& rng, double alpha) {
  const double d = alpha - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.next_normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.next_open();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

}  // namespace rng_detail

inline double sample_gamma(Rng& rng, double alpha) {
  if (!(alpha > 0.0)) throw InvalidConfig("gamma needs alpha > 0");
  if (alpha >= 1.0) return rng_detail::gamma_ge1(rng, alpha);
  // Boost: Gamma(a) = Gamma(a+1) * U^{1/a}.
  const double g = rng_detail::gamma_ge1(rng, alpha + 1.0);
  return g * std::pow(rng.next_open(), 1.0 / alpha);
}

// Chi-square with k degrees of freedom via Gamma(k/2) * 2. O(1) per draw.
inline double sample_chi_square(Rng& rng, int k) {
  if (k < 1) throw InvalidConfig("chi-square needs k >= 1");
  return 2.0 * sample_gamma(rng, 0.5 * static_cast<double>(k));
}

}  // namespace detlab
