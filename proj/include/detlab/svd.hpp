#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "detlab/errors.hpp"
#include "detlab/numeric.hpp"

namespace detlab {

// One-sided Jacobi: rotate column pairs until all are mutually orthogonal;
// the singular values are then the column norms. Slow but dependable and
// self-contained, which is all the window-count diagnostics need.
inline std::vector<double> singular_values(const std::vector<double>& entries, int n) {
  if (n < 1 || entries.size() != static_cast<std::size_t>(n) * n)
    throw InvalidConfig("singular_values needs a square matrix");
  // Column-major working copy: a[j*n + i] = entries[i*n + j].
  std::vector<double> a(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a[static_cast<std::size_t>(j) * n + i] = entries[static_cast<std::size_t>(i) * n + j];

  const double tol = 1e-14;
  const int max_sweeps = 60;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (int p = 0; p < n - 1; ++p) {
      double* cp = a.data() + static_cast<std::size_t>(p) * n;
      for (int q = p + 1; q < n; ++q) {
        double* cq = a.data() + static_cast<std::size_t>(q) * n;
        double app = 0.0, aqq = 0.0, apq = 0.0;
        for (int i = 0; i < n; ++i) {
          app += cp[i] * cp[i];
          aqq += cq[i] * cq[i];
          apq += cp[i] * cq[i];
        }
        if (std::abs(apq) <= tol * std::sqrt(app * aqq)) continue;
        rotated = true;
        const double tau = (aqq - app) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (int i = 0; i < n; ++i) {
          const double vp = cp[i];
          const double vq = cq[i];
          cp[i] = c * vp - s * vq;
          cq[i] = s * vp + c * vq;
        }
      }
    }
    if (!rotated) break;
  }

  std::vector<double> sv(n);
  for (int j = 0; j < n; ++j) {
    KahanSum s;
    const double* cj = a.data() + static_cast<std::size_t>(j) * n;
    for (int i = 0; i < n; ++i) s.add(cj[i] * cj[i]);
    sv[j] = std::sqrt(std::max(0.0, s.value()));
  }
  std::sort(sv.begin(), sv.end(), std::greater<double>());
  return sv;
}

inline int count_singular_values_in(const std::vector<double>& entries, int n, double lo,
                                    double hi) {
  int count = 0;
  for (double s : singular_values(entries, n))
    if (s >= lo && s <= hi) ++count;
  return count;
}

namespace svd_detail {

// LU factorization with partial pivoting kept for repeated solves with both
// A and A^T. Used by the inverse-iteration smallest-singular-value estimate.
struct LuFactors {
  int n = 0;
  std::vector<double> lu;   // row-major, L below diagonal (unit), U on/above
  std::vector<int> perm;    // row permutation applied to the input
  bool singular = false;

  static LuFactors build(const std::vector<double>& entries, int n) {
    LuFactors f;
    f.n = n;
    f.lu = entries;
    f.perm.resize(n);
    for (int i = 0; i < n; ++i) f.perm[i] = i;
    double max_abs = 0.0;
    for (double v : entries) max_abs = std::max(max_abs, std::abs(v));
    const double tol = n * std::numeric_limits<double>::epsilon() * max_abs;
    for (int col = 0; col < n; ++col) {
      int piv = col;
      double best = std::abs(f.lu[static_cast<std::size_t>(col) * n + col]);
      for (int r = col + 1; r < n; ++r) {
        const double v = std::abs(f.lu[static_cast<std::size_t>(r) * n + col]);
        if (v > best) {
          best = v;
          piv = r;
        }
      }
      if (best <= tol) {
        f.singular = true;
        return f;
      }
      if (piv != col) {
        for (int c = 0; c < n; ++c)
          std::swap(f.lu[static_cast<std::size_t>(col) * n + c],
                    f.lu[static_cast<std::size_t>(piv) * n + c]);
        std::swap(f.perm[col], f.perm[piv]);
      }
      const double pivot = f.lu[static_cast<std::size_t>(col) * n + col];
      for (int r = col + 1; r < n; ++r) {
        double* row = f.lu.data() + static_cast<std::size_t>(r) * n;
        const double m = row[col] / pivot;
        row[col] = m;
        const double* prow = f.lu.data() + static_cast<std::size_t>(col) * n;
        for (int c = col + 1; c < n; ++c) row[c] -= m * prow[c];
      }
    }
    return f;
  }

  // Solves A x = b (PA = LU form).
  void solve(const double* b, double* x) const {
    for (int i = 0; i < n; ++i) x[i] = b[perm[i]];
    for (int i = 1; i < n; ++i) {
      const double* row = lu.data() + static_cast<std::size_t>(i) * n;
      double acc = x[i];
      for (int j = 0; j < i; ++j) acc -= row[j] * x[j];
      x[i] = acc;
    }
    for (int i = n - 1; i >= 0; --i) {
      const double* row = lu.data() + static_cast<std::size_t>(i) * n;
      double acc = x[i];
      for (int j = i + 1; j < n; ++j) acc -= row[j] * x[j];
      x[i] = acc / row[i];
    }
  }

  // Solves A^T x = b, i.e. U^T L^T P x = b.
  void solve_transposed(const double* b, double* x) const {
    std::vector<double> y(b, b + n);
    for (int i = 0; i < n; ++i) {
      double acc = y[i];
      for (int j = 0; j < i; ++j) acc -= lu[static_cast<std::size_t>(j) * n + i] * y[j];
      y[i] = acc / lu[static_cast<std::size_t>(i) * n + i];
    }
    for (int i = n - 1; i >= 0; --i) {
      double acc = y[i];
      for (int j = i + 1; j < n; ++j) acc -= lu[static_cast<std::size_t>(j) * n + i] * y[j];
      y[i] = acc;
    }
    for (int i = 0; i < n; ++i) x[perm[i]] = y[i];
  }
};

}  // namespace svd_detail

// Smallest singular value by inverse power iteration on (A^T A)^{-1} using a
// single LU factorization: two triangular solves per step. Returns 0 for a
// numerically singular matrix. Orders of magnitude cheaper than the Jacobi
// route at the sizes the diagnostics sweep over.
inline double smallest_singular_value(const std::vector<double>& entries, int n,
                                      int iterations = 50) {
  if (n < 1 || entries.size() != static_cast<std::size_t>(n) * n)
    throw InvalidConfig("smallest_singular_value needs a square matrix");
  const auto f = svd_detail::LuFactors::build(entries, n);
  if (f.singular) return 0.0;
  // Fixed deterministic start vector; any direction with a component on the
  // smallest singular direction works, and iteration count is generous.
  std::vector<double> v(n), w(n), t(n);
  for (int i = 0; i < n; ++i) v[i] = 1.0 / std::sqrt(static_cast<double>(n) + i);
  double sigma = 0.0;
  for (int it = 0; it < iterations; ++it) {
    f.solve_transposed(v.data(), t.data());
    f.solve(t.data(), w.data());
    double norm_sq = 0.0;
    for (int i = 0; i < n; ++i) norm_sq += w[i] * w[i];
    const double norm = std::sqrt(norm_sq);
    if (!(norm > 0.0) || !std::isfinite(norm)) return 0.0;
    // v was unit, w = (A^T A)^{-1} v: the Rayleigh growth estimates 1/sigma^2.
    sigma = 1.0 / std::sqrt(norm);
    for (int i = 0; i < n; ++i) v[i] = w[i] / norm;
  }
  return sigma;
}

}  // namespace detlab
