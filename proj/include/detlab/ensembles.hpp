#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "detlab/errors.hpp"
#include "detlab/numeric.hpp"
#include "detlab/rng.hpp"

namespace detlab {

enum class AtomKind { bernoulli, gaussian, uniform_scaled };

inline const char* atom_kind_name(AtomKind k) {
  switch (k) {
    case AtomKind::bernoulli: return "bernoulli";
    case AtomKind::gaussian: return "gaussian";
    case AtomKind::uniform_scaled: return "uniform_scaled";
  }
  return "?";
}

inline AtomKind atom_kind_from_name(const std::string& s) {
  if (s == "bernoulli") return AtomKind::bernoulli;
  if (s == "gaussian") return AtomKind::gaussian;
  if (s == "uniform_scaled") return AtomKind::uniform_scaled;
  throw InvalidConfig("unknown ensemble kind: " + s);
}

// One entry law: a base atom, optionally truncated at |a| <= level and
// re-standardized, optionally mixed with an independent scaled uniform
// (a' = sqrt(1-eps^2) a + eps * sqrt(3) U[-1,1]). Every constructor keeps the
// law centered with unit variance and records the moment and tail metadata
// the diagnostics need.
struct AtomDistribution {
  AtomKind base = AtomKind::bernoulli;
  bool truncated = false;
  double level = std::numeric_limits<double>::infinity();
  double trunc_mean = 0.0;   // mean of the truncated base, removed on sampling
  double trunc_scale = 1.0;  // std dev of the truncated base, divided out
  double eps = 0.0;
  double smooth_base = 1.0;  // sqrt(1 - eps^2), cached for the sampler

  double fourth_moment = 1.0;          // E a^4 of the standardized law
  double bound = 1.0;                  // ess sup |a|, +inf if unbounded
  double tail_c1 = std::exp(1.0);      // P(|a| >= t) <= c1 exp(-t^c2)
  double tail_c2 = 1.0;

  static AtomDistribution bernoulli() {
    AtomDistribution d;
    d.base = AtomKind::bernoulli;
    d.fourth_moment = 1.0;
    d.bound = 1.0;
    d.tail_c1 = std::exp(1.0);
    return d;
  }

  static AtomDistribution gaussian() {
    AtomDistribution d;
    d.base = AtomKind::gaussian;
    d.fourth_moment = 3.0;
    d.bound = std::numeric_limits<double>::infinity();
    d.tail_c1 = 2.0 * std::exp(0.5);
    return d;
  }

  static AtomDistribution uniform_scaled() {
    AtomDistribution d;
    d.base = AtomKind::uniform_scaled;
    d.fourth_moment = 9.0 / 5.0;
    d.bound = std::sqrt(3.0);
    d.tail_c1 = std::exp(std::sqrt(3.0));
    return d;
  }

  static AtomDistribution from_name(const std::string& s) {
    switch (atom_kind_from_name(s)) {
      case AtomKind::bernoulli: return bernoulli();
      case AtomKind::gaussian: return gaussian();
      case AtomKind::uniform_scaled: return uniform_scaled();
    }
    throw InvalidConfig("unknown ensemble kind: " + s);
  }

  bool plain() const { return !truncated && eps == 0.0; }

  std::string name() const {
    std::string s = atom_kind_name(base);
    if (truncated) {
      char buf[48];
      std::snprintf(buf, sizeof buf, "_trunc%.6g", level);
      s += buf;
    }
    if (eps > 0.0) {
      char buf[48];
      std::snprintf(buf, sizeof buf, "_eps%.6g", eps);
      s += buf;
    }
    return s;
  }
};

namespace ensemble_detail {

inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

struct RawMoments {
  double m1, m2, m3, m4;
};

// Raw moments of a * 1_{|a|<=L} for a base law; zeroed-out mass contributes 0,
// so these are plain integrals over [-L, L].
inline RawMoments truncated_raw_moments(AtomKind base, double level) {
  RawMoments r{};
  if (base == AtomKind::bernoulli) {
    const double keep = level >= 1.0 ? 1.0 : 0.0;
    r.m1 = 0.0;
    r.m2 = keep;
    r.m3 = 0.0;
    r.m4 = keep;
    return r;
  }
  const bool gauss = base == AtomKind::gaussian;
  // Gaussian mass beyond 12 sigma is ~2e-33: irrelevant at double precision
  // but a huge interval would starve the quadrature's coarse pass.
  const double cap = gauss ? std::min(level, 12.0) : std::min(level, std::sqrt(3.0));
  const auto weight = [gauss](double x) {
    return gauss ? normal_pdf(x) : 1.0 / (2.0 * std::sqrt(3.0));
  };
  const double tol = 1e-13;
  r.m1 = integrate([&](double x) { return x * weight(x); }, -cap, cap, tol);
  r.m2 = integrate([&](double x) { return x * x * weight(x); }, -cap, cap, tol);
  r.m3 = integrate([&](double x) { return x * x * x * weight(x); }, -cap, cap, tol);
  r.m4 = integrate([&](double x) { return x * x * x * x * weight(x); }, -cap, cap, tol);
  return r;
}

}  // namespace ensemble_detail

// Truncate |a| <= level (values outside map to 0), then center and rescale to
// unit variance. No-op when the base is already bounded by level. Only plain
// base laws can be truncated; truncating an already-derived law is rejected.
inline AtomDistribution truncate_center_rescale(const AtomDistribution& dist, double level) {
  if (!(level > 0.0)) throw InvalidConfig("truncation level must be positive");
  if (!dist.plain()) throw InvalidConfig("truncation applies to plain base laws only");
  if (dist.bound <= level) return dist;

  const auto raw = ensemble_detail::truncated_raw_moments(dist.base, level);
  const double mu = raw.m1;
  const double var = raw.m2 - mu * mu;
  if (!(var > 1e-12)) throw DegenerateDistribution("truncation left (almost) no variance");
  const double sigma = std::sqrt(var);
  // Central fourth moment of the truncated (uncentered) law.
  const double c4 = raw.m4 - 4.0 * mu * raw.m3 + 6.0 * mu * mu * raw.m2 -
                    4.0 * mu * mu * mu * raw.m1 + mu * mu * mu * mu;

  AtomDistribution out = dist;
  out.truncated = true;
  out.level = level;
  out.trunc_mean = mu;
  out.trunc_scale = sigma;
  out.fourth_moment = c4 / (var * var);
  out.bound = (level + std::abs(mu)) / sigma;
  out.tail_c1 = std::exp(out.bound);
  out.tail_c2 = 1.0;
  return out;
}

// Mix with an independent scaled uniform: a' = sqrt(1-eps^2) a + eps xi0 with
// xi0 = sqrt(3) U[-1,1] (unit variance), keeping mean 0 and variance 1.
// eps = 0 returns the law unchanged.
inline AtomDistribution epsilon_smooth(const AtomDistribution& dist, double eps) {
  if (!(eps >= 0.0) || eps >= 1.0) throw InvalidConfig("smoothing eps must lie in [0, 1)");
  if (eps == 0.0) return dist;
  if (dist.eps > 0.0) throw InvalidConfig("law is already smoothed");

  const double c2 = 1.0 - eps * eps;
  const double c = std::sqrt(c2);
  AtomDistribution out = dist;
  out.eps = eps;
  out.smooth_base = c;
  // E(ca + e xi)^4 = c^4 m4 + 6 c^2 e^2 + e^4 * 9/5 for independent unit
  // variance parts with E xi^4 = 9/5.
  out.fourth_moment = c2 * c2 * dist.fourth_moment + 6.0 * c2 * eps * eps +
                      (9.0 / 5.0) * eps * eps * eps * eps;
  const double shift = eps * std::sqrt(3.0);
  if (std::isinf(dist.bound)) {
    out.bound = std::numeric_limits<double>::infinity();
    // P(|ca + e xi| >= t) <= P(|a| >= (t - e sqrt3)/c) <= c1 e^{e sqrt3 / c} e^{-t}.
    out.tail_c1 = dist.tail_c1 * std::exp(shift / c);
    out.tail_c2 = std::min(dist.tail_c2, 1.0);
  } else {
    out.bound = c * dist.bound + shift;
    out.tail_c1 = std::exp(out.bound);
    out.tail_c2 = 1.0;
  }
  return out;
}

struct Moments {
  double variance;
  double fourth;
};

// Variance and fourth moment of the (standardized) law; every constructed law
// has variance exactly 1, so this mostly reports E a^4.
inline Moments atom_moments(const AtomDistribution& dist) {
  return Moments{1.0, dist.fourth_moment};
}

inline double sample_atom(const AtomDistribution& dist, Rng& rng) {
  double a;
  switch (dist.base) {
    case AtomKind::bernoulli: a = rng.next_sign(); break;
    case AtomKind::gaussian: a = rng.next_normal(); break;
    case AtomKind::uniform_scaled: a = std::sqrt(3.0) * (2.0 * rng.next_double() - 1.0); break;
    default: a = 0.0; break;
  }
  if (dist.truncated) {
    if (std::abs(a) > dist.level) a = 0.0;
    a = (a - dist.trunc_mean) / dist.trunc_scale;
  }
  if (dist.eps > 0.0) {
    const double xi = std::sqrt(3.0) * (2.0 * rng.next_double() - 1.0);
    a = dist.smooth_base * a + dist.eps * xi;
  }
  return a;
}

// A sampled n x n matrix, row-major, together with the recipe that made it.
struct MatrixSample {
  int n = 0;
  std::vector<double> entries;  // row-major, entries[r * n + c]
  AtomDistribution ensemble;
  int hybrid_tail_rows = 0;  // trailing rows drawn N(0,1) instead
  std::uint64_t seed = 0;    // the concrete stream seed used

  double at(int r, int c) const { return entries[static_cast<std::size_t>(r) * n + c]; }
  const double* row(int r) const { return entries.data() + static_cast<std::size_t>(r) * n; }
};

// Fills rows top to bottom, each row left to right, from the stream named by
// `seed`. The last `hybrid_tail_rows` rows are standard normal regardless of
// the ensemble. Same spec, same bytes, on every platform and worker count.
inline MatrixSample sample_matrix(int n, const AtomDistribution& dist, int hybrid_tail_rows,
                                  const SeedSpec& seed) {
  if (n < 1) throw InvalidConfig("matrix size must be >= 1");
  if (hybrid_tail_rows < 0 || hybrid_tail_rows > n)
    throw InvalidConfig("hybrid tail must lie in [0, n]");
  MatrixSample m;
  m.n = n;
  m.ensemble = dist;
  m.hybrid_tail_rows = hybrid_tail_rows;
  m.seed = stream_seed(seed);
  m.entries.resize(static_cast<std::size_t>(n) * n);
  Rng rng(m.seed);
  const int first_tail = n - hybrid_tail_rows;
  std::size_t idx = 0;
  for (int r = 0; r < n; ++r) {
    if (r >= first_tail) {
      for (int c = 0; c < n; ++c) m.entries[idx++] = rng.next_normal();
    } else {
      for (int c = 0; c < n; ++c) m.entries[idx++] = sample_atom(dist, rng);
    }
  }
  return m;
}

inline MatrixSample sample_matrix(int n, const AtomDistribution& dist, const SeedSpec& seed) {
  return sample_matrix(n, dist, 0, seed);
}

// JSON descriptor: {"kind": ..., "level": ..., "eps": ..., "hybrid_tail_rows": ...}.
// `level`/`eps`/`hybrid_tail_rows` may be omitted and default to "none".
struct EnsembleDescriptor {
  std::string kind = "bernoulli";
  std::optional<double> level;
  double eps = 0.0;
  int hybrid_tail_rows = 0;

  AtomDistribution materialize() const {
    AtomDistribution d = AtomDistribution::from_name(kind);
    if (level) d = truncate_center_rescale(d, *level);
    if (eps != 0.0) d = epsilon_smooth(d, eps);
    return d;
  }
};

inline void to_json(nlohmann::json& j, const EnsembleDescriptor& d) {
  j = nlohmann::json{{"kind", d.kind}, {"eps", d.eps}, {"hybrid_tail_rows", d.hybrid_tail_rows}};
  if (d.level) j["level"] = *d.level;
}

inline void from_json(const nlohmann::json& j, EnsembleDescriptor& d) {
  if (!j.is_object()) throw InvalidConfig("ensemble descriptor must be a JSON object");
  for (const auto& item : j.items()) {
    const std::string& key = item.key();
    if (key != "kind" && key != "level" && key != "eps" && key != "hybrid_tail_rows")
      throw InvalidConfig("unknown ensemble descriptor key: " + key);
  }
  d = EnsembleDescriptor{};
  if (j.contains("kind")) {
    if (!j["kind"].is_string()) throw InvalidConfig("ensemble kind must be a string");
    d.kind = j["kind"].get<std::string>();
  }
  atom_kind_from_name(d.kind);  // validate early
  if (j.contains("level")) {
    if (j["level"].is_null()) {
      d.level.reset();
    } else if (j["level"].is_number()) {
      d.level = j["level"].get<double>();
    } else {
      throw InvalidConfig("ensemble level must be a number or null");
    }
  }
  if (j.contains("eps")) {
    if (!j["eps"].is_number()) throw InvalidConfig("ensemble eps must be a number");
    d.eps = j["eps"].get<double>();
  }
  if (j.contains("hybrid_tail_rows")) {
    if (!j["hybrid_tail_rows"].is_number_integer())
      throw InvalidConfig("hybrid_tail_rows must be an integer");
    d.hybrid_tail_rows = j["hybrid_tail_rows"].get<int>();
    if (d.hybrid_tail_rows < 0) throw InvalidConfig("hybrid_tail_rows must be >= 0");
  }
}

}  // namespace detlab
