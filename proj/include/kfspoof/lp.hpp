#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "kfspoof/model.hpp"

namespace kfspoof::lp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// minimize c^T x  subject to  A x >= b,  lower <= x <= upper.
/// Variables default to [0, +inf).
struct LpProblem {
  Vector c;
  Matrix A;
  Vector b;
  Vector lower;
  Vector upper;

  LpProblem() = default;
  explicit LpProblem(Eigen::Index variables)
      : c(Vector::Zero(variables)),
        A(0, variables),
        lower(Vector::Zero(variables)),
        upper(Vector::Constant(variables, kInf)) {}

  [[nodiscard]] Eigen::Index variables() const { return c.size(); }
  [[nodiscard]] Eigen::Index constraints() const { return A.rows(); }

  void add_row(const Vector& coeffs, double rhs) {
    if (coeffs.size() != variables()) throw DimensionError("LP row length does not match variable count");
    A.conservativeResize(A.rows() + 1, variables());
    A.row(A.rows() - 1) = coeffs.transpose();
    b.conservativeResize(b.size() + 1);
    b(b.size() - 1) = rhs;
  }
  void set_free(Eigen::Index j) {
    lower(j) = -kInf;
    upper(j) = kInf;
  }
};

enum class LpStatus { optimal, infeasible, unbounded };

inline const char* to_string(LpStatus s) {
  switch (s) {
    case LpStatus::optimal: return "optimal";
    case LpStatus::infeasible: return "infeasible";
    case LpStatus::unbounded: return "unbounded";
  }
  return "unknown";
}

struct LpSolution {
  LpStatus status = LpStatus::infeasible;
  Vector x;
  double objective = 0.0;
  int iterations = 0;
  /// Multipliers y >= 0 of the rows A x >= b (only meaningful when optimal).
  Vector duals;
};

struct Tolerances {
  double feasibility = 1e-8;
  double reduced_cost = 1e-9;
  double pivot = 1e-10;
};

namespace detail {

// Dense tableau: rows 0..m-1 are constraints, row m holds reduced costs.
// The last column is the right-hand side; the objective row's rhs is minus the objective value.
class Tableau {
 public:
  Tableau(Matrix body, std::vector<int> basis, int artificial_begin, Tolerances tol)
      : t_(std::move(body)), basis_(std::move(basis)), artificial_begin_(artificial_begin), tol_(tol) {}

  [[nodiscard]] int rows() const { return static_cast<int>(t_.rows()) - 1; }
  [[nodiscard]] int cols() const { return static_cast<int>(t_.cols()) - 1; }
  [[nodiscard]] double rhs(int i) const { return t_(i, cols()); }
  [[nodiscard]] double value() const { return -t_(rows(), cols()); }
  [[nodiscard]] double reduced_cost(int j) const { return t_(rows(), j); }
  [[nodiscard]] const std::vector<int>& basis() const { return basis_; }
  [[nodiscard]] int iterations() const { return iterations_; }
  [[nodiscard]] double at(int i, int j) const { return t_(i, j); }

  void set_costs(const Vector& cost) {
    const int m = rows();
    t_.row(m).setZero();
    t_.row(m).head(cost.size()) = cost.transpose();
    for (int i = 0; i < m; ++i) {
      const double cb = cost(basis_[static_cast<std::size_t>(i)]);
      if (cb != 0.0) t_.row(m) -= cb * t_.row(i);
    }
  }

  void pivot(int r, int c) {
    t_.row(r) /= t_(r, c);
    for (int i = 0; i <= rows(); ++i) {
      if (i == r) continue;
      const double f = t_(i, c);
      if (f != 0.0) t_.row(i) -= f * t_.row(r);
    }
    t_(r, c) = 1.0;
    basis_[static_cast<std::size_t>(r)] = c;
    ++iterations_;
  }

  /// Runs primal simplex over columns [0, allowed_end). Returns false if unbounded.
  bool optimize(int allowed_end) {
    const int m = rows();
    const int bland_after = 5 * (m + allowed_end);
    const int guard = 50 * (m + allowed_end) + 1000;
    int local = 0;
    for (;;) {
      if (local > guard) throw NumericError("simplex iteration guard exceeded (cycling?)");
      const bool bland = local >= bland_after;

      int enter = -1;
      double best = -tol_.reduced_cost;
      for (int j = 0; j < allowed_end; ++j) {
        const double r = t_(m, j);
        if (r < best) {
          enter = j;
          if (bland) break;
          best = r;
        }
      }
      if (enter < 0) return true;

      Eigen::Index leave = -1;
      double ratio = 0.0;
      const Eigen::Index rhs_col = t_.cols() - 1;
      for (Eigen::Index i = 0; i < t_.rows() - 1; ++i) {
        const double a = t_(i, enter);
        if (a <= tol_.pivot) continue;
        const double q = t_(i, rhs_col) / a;
        if (leave < 0 || q < ratio - 1e-12 ||
            (q <= ratio + 1e-12 && basis_[static_cast<std::size_t>(i)] < basis_[static_cast<std::size_t>(leave)])) {
          leave = i;
          ratio = q;
        }
      }
      if (leave < 0) return false;
      pivot(static_cast<int>(leave), enter);
      ++local;
    }
  }

  /// After phase one: pivot zero-level artificials out where possible.
  void expel_artificials() {
    for (int i = 0; i < rows(); ++i) {
      if (basis_[static_cast<std::size_t>(i)] < artificial_begin_) continue;
      int best = -1;
      double mag = tol_.pivot;
      for (int j = 0; j < artificial_begin_; ++j) {
        if (std::abs(t_(i, j)) > mag) {
          mag = std::abs(t_(i, j));
          best = j;
        }
      }
      if (best >= 0) pivot(i, best);
    }
  }

 private:
  Matrix t_;
  std::vector<int> basis_;
  int artificial_begin_;
  Tolerances tol_;
  int iterations_ = 0;
};

// x_j = shift_j + sum(coef * y_col)
struct VariableMap {
  double shift = 0.0;
  int col = -1;
  double coef = 1.0;
  int col_neg = -1;  // second column of a free split (coefficient -1)
};

}  // namespace detail

/// Two-phase dense simplex. Dantzig pricing, switching to Bland's rule after 5(m+n) pivots.
/// Deterministic for a fixed input. Throws NumericError if the iteration guard trips.
inline LpSolution solve(const LpProblem& p, Tolerances tol = {}) {
  const Eigen::Index n = p.variables();
  if (p.A.cols() != n || p.b.size() != p.A.rows() || p.lower.size() != n || p.upper.size() != n)
    throw DimensionError("inconsistent LP dimensions");

  LpSolution sol;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (p.lower(j) > p.upper(j) || std::isnan(p.lower(j)) || std::isnan(p.upper(j)))
      throw DimensionError("LP bounds inconsistent for variable " + std::to_string(j));
  }

  // Map onto y >= 0.
  std::vector<detail::VariableMap> map(static_cast<std::size_t>(n));
  std::vector<std::pair<int, double>> bound_rows;  // (column, capacity) for y_col <= capacity
  int ny = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    auto& v = map[static_cast<std::size_t>(j)];
    const double lo = p.lower(j);
    const double hi = p.upper(j);
    if (std::isfinite(lo)) {
      v.shift = lo;
      v.col = ny++;
      if (std::isfinite(hi)) bound_rows.emplace_back(v.col, hi - lo);
    } else if (std::isfinite(hi)) {
      v.shift = hi;
      v.col = ny++;
      v.coef = -1.0;
    } else {
      v.col = ny++;
      v.col_neg = ny++;
    }
  }

  const int mu = static_cast<int>(p.A.rows());
  const int m = mu + static_cast<int>(bound_rows.size());
  Matrix rows = Matrix::Zero(m, ny);
  Vector rhs(m);
  for (int i = 0; i < mu; ++i) {
    double shifted = p.b(i);
    for (Eigen::Index j = 0; j < n; ++j) {
      const double a = p.A(i, j);
      if (a == 0.0) continue;
      const auto& v = map[static_cast<std::size_t>(j)];
      shifted -= a * v.shift;
      rows(i, v.col) += a * v.coef;
      if (v.col_neg >= 0) rows(i, v.col_neg) -= a;
    }
    rhs(i) = shifted;
  }
  for (std::size_t k = 0; k < bound_rows.size(); ++k) {
    const int i = mu + static_cast<int>(k);
    rows(i, bound_rows[k].first) = -1.0;
    rhs(i) = -bound_rows[k].second;
  }

  // Columns: y | surplus (one per row) | artificials
  std::vector<int> needs_artificial;
  std::vector<double> sign(static_cast<std::size_t>(m), 1.0);
  for (int i = 0; i < m; ++i) {
    if (rhs(i) <= 0.0)
      sign[static_cast<std::size_t>(i)] = -1.0;  // surplus enters the basis directly
    else
      needs_artificial.push_back(i);
  }
  const int surplus0 = ny;
  const int art0 = ny + m;
  const int total = art0 + static_cast<int>(needs_artificial.size());
  Matrix body = Matrix::Zero(m + 1, total + 1);
  std::vector<int> basis(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    const double s = sign[static_cast<std::size_t>(i)];
    body.row(i).head(ny) = s * rows.row(i);
    body(i, surplus0 + i) = -s;
    body(i, total) = s * rhs(i);
    basis[static_cast<std::size_t>(i)] = surplus0 + i;
  }
  for (std::size_t k = 0; k < needs_artificial.size(); ++k) {
    const int i = needs_artificial[k];
    body(i, art0 + static_cast<int>(k)) = 1.0;
    basis[static_cast<std::size_t>(i)] = art0 + static_cast<int>(k);
  }

  detail::Tableau tab(std::move(body), std::move(basis), art0, tol);

  if (!needs_artificial.empty()) {
    Vector phase1 = Vector::Zero(total);
    phase1.tail(total - art0).setOnes();
    tab.set_costs(phase1);
    tab.optimize(total);
    const double scale = std::max(1.0, rhs.cwiseAbs().maxCoeff());
    if (tab.value() > tol.feasibility * scale) {
      sol.status = LpStatus::infeasible;
      sol.iterations = tab.iterations();
      return sol;
    }
    tab.expel_artificials();
  }

  Vector phase2 = Vector::Zero(total);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& v = map[static_cast<std::size_t>(j)];
    phase2(v.col) += p.c(j) * v.coef;
    if (v.col_neg >= 0) phase2(v.col_neg) -= p.c(j);
  }
  tab.set_costs(phase2);
  const bool bounded = tab.optimize(art0);
  sol.iterations = tab.iterations();
  if (!bounded) {
    sol.status = LpStatus::unbounded;
    return sol;
  }

  Vector y = Vector::Zero(total);
  for (int i = 0; i < m; ++i) y(tab.basis()[static_cast<std::size_t>(i)]) = tab.rhs(i);

  sol.x.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& v = map[static_cast<std::size_t>(j)];
    double x = v.shift + v.coef * y(v.col);
    if (v.col_neg >= 0) x -= y(v.col_neg);
    sol.x(j) = x;
  }
  sol.objective = p.c.dot(sol.x);
  sol.duals.resize(mu);
  for (int i = 0; i < mu; ++i) sol.duals(i) = tab.reduced_cost(surplus0 + i);

  for (int i = 0; i < mu; ++i) {
    const double lhs = p.A.row(i).dot(sol.x);
    const double scale = std::max({1.0, std::abs(p.b(i)), p.A.row(i).cwiseAbs().dot(sol.x.cwiseAbs())});
    if (lhs < p.b(i) - 10.0 * tol.feasibility * scale)
      throw NumericError("simplex returned a point violating row " + std::to_string(i));
  }
  sol.status = LpStatus::optimal;
  return sol;
}

}  // namespace kfspoof::lp
