#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "detlab/ensembles.hpp"
#include "detlab/errors.hpp"
#include "detlab/numeric.hpp"
#include "detlab/schedule.hpp"

namespace detlab {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

enum class DetMethod { lu, qr };

// sign = 0 marks a numerically singular matrix; log_abs_det is then -inf.
// Singularity is a value, not an error: some ensembles hit it legitimately.
struct LogDetResult {
  double log_abs_det = kNegInf;
  int sign = 0;
  DetMethod method = DetMethod::lu;

  bool singular() const { return sign == 0; }
};

namespace detcore_detail {

inline double max_row_norm(const std::vector<double>& a, int n) {
  double best = 0.0;
  for (int r = 0; r < n; ++r) {
    KahanSum s;
    const double* row = a.data() + static_cast<std::size_t>(r) * n;
    for (int c = 0; c < n; ++c) s.add(row[c] * row[c]);
    best = std::max(best, std::sqrt(std::max(0.0, s.value())));
  }
  return best;
}

}  // namespace detcore_detail

// Gaussian elimination with partial pivoting. log|det| = sum of log pivot
// magnitudes; a pivot at or below n*eps*(max row 2-norm) means singular.
inline LogDetResult logdet_lu(const std::vector<double>& entries, int n) {
  if (n < 1 || entries.size() != static_cast<std::size_t>(n) * n)
    throw InvalidConfig("logdet_lu needs a square matrix");
  std::vector<double> a(entries);
  const double tol =
      n * std::numeric_limits<double>::epsilon() * detcore_detail::max_row_norm(a, n);
  int sign = 1;
  KahanSum logsum;
  for (int col = 0; col < n; ++col) {
    int pivot_row = col;
    double best = std::abs(a[static_cast<std::size_t>(col) * n + col]);
    for (int r = col + 1; r < n; ++r) {
      const double v = std::abs(a[static_cast<std::size_t>(r) * n + col]);
      if (v > best) {
        best = v;
        pivot_row = r;
      }
    }
    if (best <= tol) return LogDetResult{kNegInf, 0, DetMethod::lu};
    if (pivot_row != col) {
      double* ra = a.data() + static_cast<std::size_t>(col) * n;
      double* rb = a.data() + static_cast<std::size_t>(pivot_row) * n;
      for (int c = col; c < n; ++c) std::swap(ra[c], rb[c]);
      sign = -sign;
    }
    const double pivot = a[static_cast<std::size_t>(col) * n + col];
    if (pivot < 0.0) sign = -sign;
    logsum.add(std::log(std::abs(pivot)));
    const double* prow = a.data() + static_cast<std::size_t>(col) * n;
    for (int r = col + 1; r < n; ++r) {
      double* row = a.data() + static_cast<std::size_t>(r) * n;
      const double f = row[col] / pivot;
      if (f == 0.0) continue;
      row[col] = 0.0;
      for (int c = col + 1; c < n; ++c) row[c] -= f * prow[c];
    }
  }
  return LogDetResult{logsum.value(), sign, DetMethod::lu};
}

inline LogDetResult logdet_lu(const MatrixSample& m) { return logdet_lu(m.entries, m.n); }

// Householder orthogonal factorization; the independent route used to check
// logdet_lu. Works on the transpose so reflector columns stay contiguous;
// |det| is unchanged by transposition and the sign bookkeeping accounts for
// the reflector count.
inline LogDetResult logdet_qr(const std::vector<double>& entries, int n) {
  if (n < 1 || entries.size() != static_cast<std::size_t>(n) * n)
    throw InvalidConfig("logdet_qr needs a square matrix");
  // a(i,j) = entries[j*n + i]: column j of `a` is row j of the input.
  std::vector<double> a(entries);
  const double tol =
      n * std::numeric_limits<double>::epsilon() * detcore_detail::max_row_norm(entries, n);
  std::vector<double> v(n);
  int sign = 1;
  KahanSum logsum;
  for (int col = 0; col < n; ++col) {
    double* ac = a.data() + static_cast<std::size_t>(col) * n;
    KahanSum norm_sq;
    for (int r = col; r < n; ++r) norm_sq.add(ac[r] * ac[r]);
    const double norm = std::sqrt(std::max(0.0, norm_sq.value()));
    if (norm <= tol) return LogDetResult{kNegInf, 0, DetMethod::qr};
    const double head = ac[col];
    // alpha keeps the same sign opposition as the head entry: no cancellation.
    const double alpha = head >= 0.0 ? -norm : norm;
    const double vhead = head - alpha;
    double v_norm_sq = vhead * vhead;
    v[col] = vhead;
    for (int r = col + 1; r < n; ++r) {
      v[r] = ac[r];
      v_norm_sq += ac[r] * ac[r];
    }
    logsum.add(std::log(norm));
    if (alpha < 0.0) sign = -sign;
    if (v_norm_sq > 0.0) {
      sign = -sign;  // one genuine reflector, det -1
      const double beta = 2.0 / v_norm_sq;
      for (int j = col + 1; j < n; ++j) {
        double* aj = a.data() + static_cast<std::size_t>(j) * n;
        double dot = 0.0;
        for (int r = col; r < n; ++r) dot += v[r] * aj[r];
        const double f = beta * dot;
        for (int r = col; r < n; ++r) aj[r] -= f * v[r];
      }
    }
    ac[col] = alpha;
  }
  return LogDetResult{logsum.value(), sign, DetMethod::qr};
}

inline LogDetResult logdet_qr(const MatrixSample& m) { return logdet_qr(m.entries, m.n); }

// Incremental orthonormal basis of a growing row span. Modified Gram-Schmidt
// with one unconditional reorthogonalization pass per row; column norms of
// the basis are tracked so the diagonal of the complement projector
// (p_ss = 1 - sum_j Q[j][s]^2) costs O(n) at any step.
class RowBasis {
 public:
  explicit RowBasis(int n) : n_(n), col_sq_(n, 0.0) {
    if (n < 1) throw InvalidConfig("RowBasis needs n >= 1");
  }

  int n() const { return n_; }
  int dim() const { return dim_; }
  const double* basis_row(int j) const { return q_.data() + static_cast<std::size_t>(j) * n_; }
  double col_sq(int s) const { return col_sq_[s]; }
  double projection_diag(int s) const { return 1.0 - col_sq_[s]; }

  struct Projection {
    double delta_sq;      // ||a||^2 - ||proj||^2, clamped at 0
    double residual_sq;   // squared norm of the orthogonal remainder vector
    double row_norm_sq;   // ||a||^2
    bool degenerate;      // delta_sq <= n * eps * ||a||^2
  };

  // Measures the squared distance from `row` to the current span without
  // inserting. `scratch` must hold n entries; callers own it so concurrent
  // use of one shared basis stays safe.
  Projection project(const double* row, std::vector<double>& scratch) const {
    scratch.assign(row, row + n_);
    KahanSum norm_sq;
    for (int c = 0; c < n_; ++c) norm_sq.add(row[c] * row[c]);
    KahanSum coeff_sq;
    orthogonalize(scratch.data(), coeff_sq);
    orthogonalize(scratch.data(), coeff_sq);
    const double row_sq = norm_sq.value();
    double delta_sq = row_sq - coeff_sq.value();
    if (delta_sq < 0.0) delta_sq = 0.0;
    KahanSum res;
    for (int c = 0; c < n_; ++c) res.add(scratch[c] * scratch[c]);
    const double tol = n_ * std::numeric_limits<double>::epsilon() * row_sq;
    return Projection{delta_sq, res.value(), row_sq, delta_sq <= tol};
  }

  // Projects and, when the remainder is not degenerate, appends its
  // normalized direction to the basis.
  Projection add_row(const double* row) {
    if (dim_ >= n_) throw NotFullRank("basis already spans the full space");
    work_.resize(n_);
    Projection p = project(row, work_);
    if (p.residual_sq <= 0.0) p.degenerate = true;
    if (p.degenerate) return p;
    const double inv = 1.0 / std::sqrt(p.residual_sq);
    q_.resize(static_cast<std::size_t>(dim_ + 1) * n_);
    double* dst = q_.data() + static_cast<std::size_t>(dim_) * n_;
    for (int c = 0; c < n_; ++c) {
      dst[c] = work_[c] * inv;
      col_sq_[c] += dst[c] * dst[c];
    }
    ++dim_;
    return p;
  }

 private:
  void orthogonalize(double* v, KahanSum& coeff_sq) const {
    for (int j = 0; j < dim_; ++j) {
      const double* q = q_.data() + static_cast<std::size_t>(j) * n_;
      double c = 0.0;
      for (int k = 0; k < n_; ++k) c += v[k] * q[k];
      if (c == 0.0) continue;
      for (int k = 0; k < n_; ++k) v[k] -= c * q[k];
      coeff_sq.add(c * c);
    }
  }

  int n_;
  int dim_ = 0;
  std::vector<double> q_;
  std::vector<double> col_sq_;
  std::vector<double> work_;
};

struct StepRecord {
  int i = 0;          // row index, 0-based
  double k = 0.0;     // codimension n - i before this row lands
  double delta_sq = 0.0;
  double x = 0.0;     // delta_sq / k - 1
  double r = 0.0;     // ln(1+x) - (x - x^2/2)
  double qss_sq_sum = std::numeric_limits<double>::quiet_NaN();
  double y = std::numeric_limits<double>::quiet_NaN();
  double z = std::numeric_limits<double>::quiet_NaN();
};

// Worst deviations from the exact projector identities seen along one trace;
// used by tests that demand zero violations.
struct TraceIdentityStats {
  double max_qss_sum_err = 0.0;    // | sum_s q_ss - 1 |
  double min_pss = std::numeric_limits<double>::infinity();
  double max_pss = -std::numeric_limits<double>::infinity();
  double max_qss_sq_excess = -std::numeric_limits<double>::infinity();  // sum q_ss^2 - 1/k
  std::size_t steps = 0;

  void merge(const TraceIdentityStats& o) {
    max_qss_sum_err = std::max(max_qss_sum_err, o.max_qss_sum_err);
    min_pss = std::min(min_pss, o.min_pss);
    max_pss = std::max(max_pss, o.max_pss);
    max_qss_sq_excess = std::max(max_qss_sq_excess, o.max_qss_sq_excess);
    steps += o.steps;
  }
};

struct DecompositionTrace {
  int n = 0;
  std::vector<StepRecord> steps;
  bool degenerate = false;
  int degenerate_at = -1;
  double log_det_sq = kNegInf;  // sum of ln(delta_sq); -inf when degenerate
  bool with_diagnostics = false;
  TraceIdentityStats identity_stats;  // populated when diagnostics enabled
};

// Base-times-height decomposition: row i is measured against the span of
// rows 0..i-1, giving det^2 = prod delta_sq. With diagnostics enabled, each
// step also records sum_s q_ss^2 and the y/z split of -x^2/2 + 1/k, using
// m4 = 3 for rows of a hybrid tail and the ensemble's fourth moment
// otherwise.
inline DecompositionTrace decompose_rows(const MatrixSample& m, bool with_diagnostics = true) {
  const int n = m.n;
  DecompositionTrace trace;
  trace.n = n;
  trace.with_diagnostics = with_diagnostics;
  trace.steps.reserve(n);
  RowBasis basis(n);
  KahanSum logsum;
  const int first_tail = n - m.hybrid_tail_rows;
  const double base_m4 = m.ensemble.fourth_moment;
  for (int i = 0; i < n; ++i) {
    StepRecord step;
    step.i = i;
    const double k = static_cast<double>(n - i);
    step.k = k;
    if (with_diagnostics) {
      KahanSum sum_p, sum_p_sq;
      double lo = std::numeric_limits<double>::infinity();
      double hi = -std::numeric_limits<double>::infinity();
      for (int s = 0; s < n; ++s) {
        const double p = basis.projection_diag(s);
        sum_p.add(p);
        sum_p_sq.add(p * p);
        lo = std::min(lo, p);
        hi = std::max(hi, p);
      }
      // Dividing the summed squares by k*k (rather than squaring p/k term by
      // term) makes the i = 0 step yield exactly fl(1/n), so the hard bound
      // sum q_ss^2 <= 1/k survives floating point with zero slack there.
      step.qss_sq_sum = sum_p_sq.value() / (k * k);
      const double m4 = (i >= first_tail) ? 3.0 : base_m4;
      step.z = 0.5 * (3.0 - m4) * step.qss_sq_sum;
      auto& st = trace.identity_stats;
      st.max_qss_sum_err = std::max(st.max_qss_sum_err, std::abs(sum_p.value() / k - 1.0));
      st.min_pss = std::min(st.min_pss, lo);
      st.max_pss = std::max(st.max_pss, hi);
      st.max_qss_sq_excess = std::max(st.max_qss_sq_excess, step.qss_sq_sum - 1.0 / k);
      ++st.steps;
    }
    const RowBasis::Projection proj = basis.add_row(m.row(i));
    step.delta_sq = proj.delta_sq;
    step.x = proj.delta_sq / k - 1.0;
    step.r = std::log1p(step.x) - (step.x - 0.5 * step.x * step.x);
    if (with_diagnostics) {
      step.y = 1.0 / k - 0.5 * step.x * step.x - step.z;
    }
    trace.steps.push_back(step);
    if (proj.degenerate) {
      trace.degenerate = true;
      trace.degenerate_at = i;
      trace.log_det_sq = kNegInf;
      return trace;
    }
    logsum.add(std::log(proj.delta_sq));
  }
  trace.log_det_sq = logsum.value();
  return trace;
}

struct TaylorSums {
  double sum_x = 0.0;
  double sum_half_x_sq = 0.0;
  double sum_r = 0.0;
};

// Component sums of log(delta_sq/k) = x - x^2/2 + r over the early block
// i < n0 (the trailing block is analyzed separately).
inline TaylorSums taylor_split(const DecompositionTrace& trace) {
  if (trace.degenerate) throw DegenerateTrace("taylor_split needs a full-rank trace");
  const int n0 = trace.n >= 2 ? n0_split(trace.n) : 0;
  KahanSum sx, sh, sr;
  for (const StepRecord& s : trace.steps) {
    if (s.i >= n0) break;
    sx.add(s.x);
    sh.add(0.5 * s.x * s.x);
    sr.add(s.r);
  }
  return TaylorSums{sx.value(), sh.value(), sr.value()};
}

// Natural log of (m)! as an exact sum of logs.
inline double log_factorial(int m) {
  if (m < 0) throw InvalidConfig("log_factorial needs m >= 0");
  KahanSum s;
  for (int k = 2; k <= m; ++k) s.add(std::log(static_cast<double>(k)));
  return s.value();
}

// Centered and scaled log-determinant: (log det^2 - log (n-1)!) / sqrt(2 ln n).
inline double normalize_statistic(double log_abs_det, int n) {
  if (n < 2) throw InvalidConfig("normalize_statistic needs n >= 2");
  if (log_abs_det == kNegInf) throw SingularStatistic("singular sample has no statistic");
  return (2.0 * log_abs_det - log_factorial(n - 1)) / std::sqrt(2.0 * std::log(n));
}

inline double normalize_statistic(const LogDetResult& r, int n) {
  if (r.sign == 0) throw SingularStatistic("singular sample has no statistic");
  return normalize_statistic(r.log_abs_det, n);
}

// Diagonal of the projector onto the orthogonal complement of the span of
// `i` rows (row-major, each of length n): p_ss = 1 - sum_j Q[j][s]^2.
inline std::vector<double> projection_diagonal(const double* rows, int i, int n) {
  RowBasis basis(n);
  for (int r = 0; r < i; ++r) {
    if (basis.add_row(rows + static_cast<std::size_t>(r) * n).degenerate)
      throw NotFullRank("row block is numerically rank-deficient");
  }
  std::vector<double> p(n);
  for (int s = 0; s < n; ++s) p[s] = basis.projection_diag(s);
  return p;
}

inline std::vector<double> projection_diagonal(const MatrixSample& m, int i) {
  if (i < 0 || i > m.n) throw InvalidConfig("row count out of range");
  return projection_diagonal(m.entries.data(), i, m.n);
}

struct MartingaleDiagnostics {
  double s_sq = 0.0;      // mean over traces of sum_{i<n0} x_i^2
  double v_sq = 0.0;      // mean over traces of sum_{i<n0} (2/k - sum q_ss^2 (3 - m4))
  double gamma_max = 0.0; // max |x_i| over the pooled early steps
  std::size_t traces_used = 0;
  std::size_t traces_skipped = 0;  // degenerate traces
};

// Martingale scale diagnostics over the early block i < n0. The conditional
// second-moment formula value per step is 2/k - sum_s q_ss^2 (3 - m4), which
// the trace already carries as 2/k - 2z.
inline MartingaleDiagnostics martingale_diagnostics(const std::vector<DecompositionTrace>& traces,
                                                    int n) {
  if (n < 2) throw InvalidConfig("martingale_diagnostics needs n >= 2");
  const int n0 = n0_split(n);
  MartingaleDiagnostics out;
  KahanSum total_x_sq, total_v;
  for (const DecompositionTrace& t : traces) {
    if (t.n != n) throw InvalidConfig("trace size does not match n");
    if (t.degenerate) {
      ++out.traces_skipped;
      continue;
    }
    if (!t.with_diagnostics)
      throw InvalidConfig("martingale_diagnostics needs diagnostics-enabled traces");
    KahanSum xs, vs;
    for (const StepRecord& s : t.steps) {
      if (s.i >= n0) break;
      xs.add(s.x * s.x);
      vs.add(2.0 / s.k - 2.0 * s.z);
      out.gamma_max = std::max(out.gamma_max, std::abs(s.x));
    }
    total_x_sq.add(xs.value());
    total_v.add(vs.value());
    ++out.traces_used;
  }
  if (out.traces_used == 0) throw EmptySample("no usable traces");
  out.s_sq = total_x_sq.value() / static_cast<double>(out.traces_used);
  out.v_sq = total_v.value() / static_cast<double>(out.traces_used);
  return out;
}

}  // namespace detlab
