#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace detlab {

// Compensated accumulator; keeps long sums of small terms honest.
class KahanSum {
 public:
  void add(double x) {
    const double y = x - comp_;
    const double t = sum_ + y;
    comp_ = (t - sum_) - y;
    sum_ = t;
  }
  double value() const { return sum_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

namespace numeric_detail {

template <class F>
double simpson(const F& f, double a, double fa, double b, double fb, double m, double fm) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

template <class F>
double adapt(const F& f, double a, double fa, double b, double fb, double m, double fm,
             double whole, double tol, int depth) {
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = simpson(f, a, fa, m, fm, lm, flm);
  const double right = simpson(f, m, fm, b, fb, rm, frm);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) {
    return left + right + delta / 15.0;
  }
  return adapt(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1) +
         adapt(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1);
}

}  // namespace numeric_detail

// Adaptive Simpson quadrature with an initial 16-panel split so narrow bumps
// inside a wide interval are not missed by the first coarse estimate.
template <class F>
double integrate(const F& f, double a, double b, double tol = 1e-12) {
  if (a == b) return 0.0;
  const int panels = 16;
  const double h = (b - a) / panels;
  KahanSum total;
  for (int i = 0; i < panels; ++i) {
    const double x0 = a + i * h;
    const double x1 = (i == panels - 1) ? b : x0 + h;
    const double xm = 0.5 * (x0 + x1);
    const double f0 = f(x0), f1 = f(x1), fm = f(xm);
    const double whole = numeric_detail::simpson(f, x0, f0, x1, f1, xm, fm);
    total.add(numeric_detail::adapt(f, x0, f0, x1, f1, xm, fm, whole, tol / panels, 48));
  }
  return total.value();
}

inline double median_inplace(std::vector<double>& v) {
  const std::size_t n = v.size();
  if (n == 0) return std::nan("");
  std::nth_element(v.begin(), v.begin() + n / 2, v.end());
  double hi = v[n / 2];
  if (n % 2 == 1) return hi;
  std::nth_element(v.begin(), v.begin() + n / 2 - 1, v.begin() + n / 2);
  return 0.5 * (v[n / 2 - 1] + hi);
}

}  // namespace detlab
