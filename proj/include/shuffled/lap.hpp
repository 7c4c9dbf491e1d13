#pragma once

// Linear assignment: exact shortest-augmenting-path solver and the
// zero-temperature (min-sum) message-passing iteration.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace shuffled::lap {

using Matrix = Eigen::MatrixXd;

inline constexpr int kUnassigned = -1;

/// Square, finite n x n cost matrix.
class CostMatrix {
 public:
  explicit CostMatrix(Matrix values) : values_(std::move(values)) {
    if (values_.rows() != values_.cols() || values_.rows() == 0)
      throw std::invalid_argument("CostMatrix: must be square and non-empty");
    if (!values_.allFinite()) throw std::invalid_argument("CostMatrix: entries must be finite");
  }

  int size() const { return int(values_.rows()); }
  double operator()(int i, int j) const { return values_(i, j); }
  const Matrix& values() const { return values_; }

 private:
  Matrix values_;
};

struct AssignmentResult {
  std::vector<int> assignment;  // row -> column, or kUnassigned
  bool is_permutation = false;
  bool converged = false;
  int iterations_used = 0;
  std::optional<double> objective;  // set only when is_permutation
};

inline bool assignment_is_permutation(const std::vector<int>& a) {
  std::vector<char> used(a.size(), 0);
  for (int j : a) {
    if (j < 0 || std::size_t(j) >= a.size() || used[j]) return false;
    used[j] = 1;
  }
  return true;
}

inline double assignment_cost(const CostMatrix& C, const std::vector<int>& a) {
  double s = 0.0;
  for (int i = 0; i < C.size(); ++i) s += C(i, a[i]);
  return s;
}

inline AssignmentResult make_result(const CostMatrix& C, std::vector<int> a, bool converged,
                                    int iterations) {
  AssignmentResult r;
  r.assignment = std::move(a);
  r.is_permutation = assignment_is_permutation(r.assignment);
  r.converged = converged;
  r.iterations_used = iterations;
  if (r.is_permutation) r.objective = assignment_cost(C, r.assignment);
  return r;
}

/// Minimum-cost perfect assignment, O(n^3) shortest augmenting paths with
/// row/column potentials. Deterministic for a fixed input.
inline AssignmentResult solve_exact(const CostMatrix& C) {
  const int n = C.size();
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based arrays; column 0 is the virtual root of each augmentation.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> match_col(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  const auto& a = C.values();

  for (int row = 1; row <= n; ++row) {
    match_col[0] = row;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = match_col[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match_col[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match_col[j0] != 0);
    do {
      const int j1 = way[j0];
      match_col[j0] = match_col[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> assign(n, kUnassigned);
  for (int j = 1; j <= n; ++j) assign[match_col[j] - 1] = j - 1;
  return make_result(C, std::move(assign), true, 0);
}

struct MpParams {
  int max_iters = 2000;
  double damping = 0.3;  // new = (1 - damping) * update + damping * old
  double tol = 1e-9;
  /// Stand-in for a minimum over an empty index set (n == 1).
  double empty_min_cap = 1e18;

  void validate() const {
    if (max_iters < 1) throw std::invalid_argument("MpParams: max_iters must be >= 1");
    if (!(damping >= 0.0 && damping < 1.0))
      throw std::invalid_argument("MpParams: damping must be in [0, 1)");
    if (!(tol > 0.0)) throw std::invalid_argument("MpParams: tol must be positive");
  }
};

/// Row-side messages L(i, j) = l_{i->j}, column-side R(i, j) = r_{i->j}.
struct MPState {
  Matrix L;
  Matrix R;
  int iteration = 0;
  double damping = 0.3;

  static MPState zeros(int n, double damping) {
    return {Matrix::Zero(n, n), Matrix::Zero(n, n), 0, damping};
  }

  /// zeta_ij = l_{i->j} + r_{i->j} - C_ij; edge (i, j) is selected when positive.
  Matrix zeta(const CostMatrix& C) const { return L + R - C.values(); }
};

namespace detail {

// out(i, j) = min_{k != j} A(i, k) along rows (by_row) or
// out(i, j) = min_{k != i} A(k, j) along columns.
inline void exclusive_min(const Matrix& A, bool by_row, double cap, Matrix& out) {
  const int n = int(A.rows());
  out.resize(n, n);
  const double inf = std::numeric_limits<double>::infinity();
  for (int line = 0; line < n; ++line) {
    double m1 = inf, m2 = inf;
    int arg = -1;
    for (int k = 0; k < n; ++k) {
      const double x = by_row ? A(line, k) : A(k, line);
      if (x < m1) {
        m2 = m1;
        m1 = x;
        arg = k;
      } else if (x < m2) {
        m2 = x;
      }
    }
    for (int k = 0; k < n; ++k) {
      double v = (k == arg) ? m2 : m1;
      if (v > cap) v = cap;
      (by_row ? out(line, k) : out(k, line)) = v;
    }
  }
}

// In a linear-drift regime candidate k of line `line` moves by slope(k) per
// step. The exclusive minima keep their arguments forever iff each current
// argmin is also the slowest-falling candidate among those it competes with.
inline bool drift_is_stable(const Matrix& A, const Matrix& slope, bool by_row, double tol) {
  const int n = int(A.rows());
  if (n < 2) return true;
  for (int line = 0; line < n; ++line) {
    auto at = [&](const Matrix& M, int k) { return by_row ? M(line, k) : M(k, line); };
    int a1 = -1, a2 = -1;  // smallest and second smallest value
    int s1 = -1, s2 = -1;  // smallest and second smallest slope
    for (int k = 0; k < n; ++k) {
      if (a1 < 0 || at(A, k) < at(A, a1)) {
        a2 = a1;
        a1 = k;
      } else if (a2 < 0 || at(A, k) < at(A, a2)) {
        a2 = k;
      }
      if (s1 < 0 || at(slope, k) < at(slope, s1)) {
        s2 = s1;
        s1 = k;
      } else if (s2 < 0 || at(slope, k) < at(slope, s2)) {
        s2 = k;
      }
    }
    for (int j = 0; j < n; ++j) {
      const int arg = j == a1 ? a2 : a1;
      const double fastest = at(slope, j == s1 ? s2 : s1);
      if (at(slope, arg) > fastest + tol) return false;
    }
  }
  return true;
}

}  // namespace detail

/// One synchronous (Jacobi) min-sum update with damping:
///   l_{i->j} = min_{k != j} (C_ik - r_{i->k}),  r_{i->j} = min_{k != i} (C_kj - l_{k->j}).
inline MPState mp_step(const MPState& state, const CostMatrix& C,
                       double empty_min_cap = MpParams{}.empty_min_cap) {
  const int n = C.size();
  if (state.L.rows() != n || state.L.cols() != n || state.R.rows() != n || state.R.cols() != n)
    throw std::invalid_argument("mp_step: state dimensions do not match cost matrix");
  MPState next;
  next.damping = state.damping;
  next.iteration = state.iteration + 1;
  detail::exclusive_min(C.values() - state.R, true, empty_min_cap, next.L);
  detail::exclusive_min(C.values() - state.L, false, empty_min_cap, next.R);
  if (state.damping > 0.0) {
    next.L = (1.0 - state.damping) * next.L + state.damping * state.L;
    next.R = (1.0 - state.damping) * next.R + state.damping * state.R;
  }
  return next;
}

/// Row i takes the column maximizing zeta_ij if that maximum is positive;
/// the smallest column index wins ties.
inline AssignmentResult mp_decode(const MPState& state, const CostMatrix& C) {
  const int n = C.size();
  const Matrix z = state.zeta(C);
  std::vector<int> assign(n, kUnassigned);
  for (int i = 0; i < n; ++i) {
    int best = 0;
    for (int j = 1; j < n; ++j)
      if (z(i, j) > z(i, best)) best = j;
    if (z(i, best) > 0.0) assign[i] = best;
  }
  return make_result(C, std::move(assign), false, state.iteration);
}

/// Iterates mp_step from zero messages. Stops when the L-infinity message
/// change is <= tol (fixed point), or when the messages drift linearly
/// (per-step change constant to within tol on two consecutive steps) and no
/// minimum can switch argument under that drift.
inline AssignmentResult solve_mp(const CostMatrix& C, const MpParams& params = {}) {
  params.validate();
  const int n = C.size();
  MPState state = MPState::zeros(n, params.damping);
  Matrix prev_dL, prev_dR;
  bool converged = false;
  int steady_hits = 0;
  for (int it = 0; it < params.max_iters; ++it) {
    MPState next = mp_step(state, C, params.empty_min_cap);
    Matrix dL = next.L - state.L;
    Matrix dR = next.R - state.R;
    const double change = std::max(dL.cwiseAbs().maxCoeff(), dR.cwiseAbs().maxCoeff());
    double accel = std::numeric_limits<double>::infinity();
    if (prev_dL.size() != 0)
      accel = std::max((dL - prev_dL).cwiseAbs().maxCoeff(), (dR - prev_dR).cwiseAbs().maxCoeff());
    state = std::move(next);
    if (change <= params.tol) {
      converged = true;
      break;
    }
    steady_hits = accel <= params.tol ? steady_hits + 1 : 0;
    if (steady_hits >= 2 && detail::drift_is_stable(C.values() - state.R, -dR, true, params.tol) &&
        detail::drift_is_stable(C.values() - state.L, -dL, false, params.tol)) {
      converged = true;
      break;
    }
    prev_dL = std::move(dL);
    prev_dR = std::move(dR);
  }
  AssignmentResult r = mp_decode(state, C);
  r.converged = converged;
  return r;
}

}  // namespace shuffled::lap
