#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "detlab/errors.hpp"
#include "detlab/numeric.hpp"

namespace detlab {

// Phi(x) through erfc: absolute error well below 1e-10 over the whole line.
inline double std_normal_cdf(double x) {
  return 0.5 * std::erfc(-x * 0.70710678118654752440);
}

inline double std_normal_pdf(double x) {
  return std::exp(-0.5 * x * x) * 0.39894228040143267794;
}

struct EmpiricalCdf {
  std::vector<double> sorted_values;

  explicit EmpiricalCdf(std::vector<double> samples) : sorted_values(std::move(samples)) {
    if (sorted_values.empty()) throw EmptySample("empirical CDF needs samples");
    for (double v : sorted_values)
      if (!std::isfinite(v)) throw InvalidConfig("empirical CDF needs finite samples");
    std::sort(sorted_values.begin(), sorted_values.end());
  }

  std::size_t count() const { return sorted_values.size(); }

  // F(x) = (# values <= x) / count; right-continuous.
  double evaluate(double x) const {
    const auto it = std::upper_bound(sorted_values.begin(), sorted_values.end(), x);
    return static_cast<double>(it - sorted_values.begin()) / static_cast<double>(count());
  }
};

enum class KsReference { std_normal, two_sample };

struct KsReport {
  double d = 0.0;
  std::size_t count_a = 0;
  std::optional<std::size_t> count_b;
  KsReference reference = KsReference::std_normal;

  // Width of the DKW confidence band at confidence 1 - delta: one-sample
  // sqrt(ln(2/delta) / 2T); for two samples the variance-combined analogue
  // sqrt(ln(2/delta) (Ta+Tb) / (2 Ta Tb)).
  double dkw_epsilon_at(double delta) const {
    if (!(delta > 0.0) || !(delta < 1.0)) throw InvalidConfig("delta must lie in (0,1)");
    const double la = std::log(2.0 / delta);
    if (!count_b) return std::sqrt(la / (2.0 * static_cast<double>(count_a)));
    const double ta = static_cast<double>(count_a);
    const double tb = static_cast<double>(*count_b);
    return std::sqrt(la * (ta + tb) / (2.0 * ta * tb));
  }
};

// Exact sup-distance between the empirical CDF and Phi, via order statistics:
// d = max_i max(i/T - Phi(x_i), Phi(x_i) - (i-1)/T).
inline KsReport ks_one_sample(std::vector<double> samples) {
  EmpiricalCdf cdf(std::move(samples));
  const std::size_t t = cdf.count();
  double d = 0.0;
  for (std::size_t i = 0; i < t; ++i) {
    const double phi = std_normal_cdf(cdf.sorted_values[i]);
    const double hi = static_cast<double>(i + 1) / t - phi;
    const double lo = phi - static_cast<double>(i) / t;
    d = std::max(d, std::max(hi, lo));
  }
  KsReport r;
  r.d = d;
  r.count_a = t;
  r.reference = KsReference::std_normal;
  return r;
}

// Exact sup-distance between two empirical CDFs over the merged sample points.
inline KsReport ks_two_sample(std::vector<double> a, std::vector<double> b) {
  EmpiricalCdf ca(std::move(a));
  EmpiricalCdf cb(std::move(b));
  const auto& va = ca.sorted_values;
  const auto& vb = cb.sorted_values;
  const double na = static_cast<double>(va.size());
  const double nb = static_cast<double>(vb.size());
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < va.size() || j < vb.size()) {
    double x;
    if (j >= vb.size() || (i < va.size() && va[i] <= vb[j]))
      x = va[i];
    else
      x = vb[j];
    while (i < va.size() && va[i] <= x) ++i;
    while (j < vb.size() && vb[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  KsReport r;
  r.d = d;
  r.count_a = va.size();
  r.count_b = vb.size();
  r.reference = KsReference::two_sample;
  return r;
}

struct MomentSummary {
  double mean = 0.0;
  double variance = 0.0;  // unbiased
  double skewness = 0.0;
  double excess_kurtosis = 0.0;
};

inline MomentSummary ecdf_summary(const std::vector<double>& samples) {
  const std::size_t t = samples.size();
  if (t < 2) throw EmptySample("moment summary needs >= 2 samples");
  for (double v : samples)
    if (!std::isfinite(v)) throw InvalidConfig("moment summary needs finite samples");
  KahanSum acc;
  for (double v : samples) acc.add(v);
  const double mean = acc.value() / static_cast<double>(t);
  KahanSum m2s, m3s, m4s;
  for (double v : samples) {
    const double d = v - mean;
    m2s.add(d * d);
    m3s.add(d * d * d);
    m4s.add(d * d * d * d);
  }
  const double m2 = m2s.value() / static_cast<double>(t);
  const double m3 = m3s.value() / static_cast<double>(t);
  const double m4 = m4s.value() / static_cast<double>(t);
  MomentSummary s;
  s.mean = mean;
  s.variance = m2s.value() / static_cast<double>(t - 1);
  if (m2 > 0.0) {
    s.skewness = m3 / std::pow(m2, 1.5);
    s.excess_kurtosis = m4 / (m2 * m2) - 3.0;
  }
  return s;
}

}  // namespace detlab
