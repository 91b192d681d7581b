#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <optional>
#include <thread>
#include <vector>

#include "kfspoof/lp.hpp"
#include "kfspoof/separation.hpp"

namespace kfspoof {

/// One constrained step: (m_t - m~_t)_j = offset_j + coeffs.row(j) . x
struct ConstraintBlock {
  int step = 0;
  double separation = 0.0;
  Matrix coeffs;  // n x (n*T)
  Vector offset;  // P_t * M0
};

/// Constraint data for every constrained step. Columns of `coeffs` stack the spoofing
/// vectors component-major: [eps_{1,x} .. eps_{T,x}, eps_{1,y} .. eps_{T,y}, ...].
struct ConstraintRows {
  int horizon = 0;
  Eigen::Index dim = 0;
  std::vector<ConstraintBlock> blocks;

  [[nodiscard]] Eigen::Index columns() const { return dim * horizon; }
  [[nodiscard]] Eigen::Index column(int step, Eigen::Index comp) const { return comp * horizon + (step - 1); }
  [[nodiscard]] int last_step() const { return blocks.empty() ? 0 : blocks.back().step; }
};

inline ConstraintRows build_constraint_rows(const SeparationTerms& terms, const SeparationSpec& spec,
                                            const Vector& M0) {
  const auto n = terms.dim();
  detail::require_length(M0, n, "M0");
  ConstraintRows rows;
  rows.horizon = spec.horizon;
  rows.dim = n;
  for (const auto& [t, d] : spec.constraints) {
    if (t < 1 || t > spec.horizon || t > terms.horizon())
      throw DimensionError("constrained step " + std::to_string(t) + " beyond horizon");
    ConstraintBlock block;
    block.step = t;
    block.separation = d;
    block.offset = terms.initial_propagator(t) * M0;
    block.coeffs = Matrix::Zero(n, rows.columns());
    for (int i = 1; i <= t; ++i) {
      const Matrix phi = terms.influence(t, i);
      for (Eigen::Index comp = 0; comp < n; ++comp) block.coeffs.col(rows.column(i, comp)) = phi.col(comp);
    }
    rows.blocks.push_back(std::move(block));
  }
  return rows;
}

enum class PositivityTest {
  strict,   // every entry > 0
  relaxed,  // every entry >= 0 and every diagonal entry > 0
};

/// Single-LP condition on F and on each I - K_t H (t <= T).
inline bool lemma1_applicable(const LinearSystem& sys, const GainSchedule& schedule, int steps,
                              PositivityTest test = PositivityTest::strict) {
  if (schedule.length() < steps) throw DimensionError("gain schedule shorter than horizon");
  auto positive = [test](const Matrix& m) {
    if (test == PositivityTest::strict) return (m.array() > 0.0).all();
    return (m.array() >= 0.0).all() && (m.diagonal().array() > 0.0).all();
  };
  if (!positive(sys.F)) return false;
  const auto n = sys.dim();
  const Matrix I = Matrix::Identity(n, n);
  for (int t = 1; t <= steps; ++t)
    if (!positive(I - schedule.gain(t) * sys.H)) return false;
  return true;
}

/// Signs that put every constrained component and every spoofing component in one orthant:
/// row_sign * coeff * col_sign >= 0 for all nonzero coefficients, and row_sign * offset >= 0.
struct Orientation {
  std::vector<int> row_sign;  // block-major, n entries per block
  std::vector<int> col_sign;  // one per column
};

namespace detail {

inline double coefficient_floor(const ConstraintRows& rows) {
  double largest = 0.0;
  for (const auto& b : rows.blocks) largest = std::max(largest, b.coeffs.cwiseAbs().maxCoeff());
  return 1e-12 * std::max(largest, 1e-300);
}

}  // namespace detail

/// Two-colours the bipartite (row, column) graph by coefficient sign, then flips each connected
/// component so that nonzero offsets agree with their rows. Returns nullopt when no such
/// orientation exists; in that case the single-orthant LP is not guaranteed optimal.
inline std::optional<Orientation> single_orthant_orientation(const ConstraintRows& rows) {
  const auto n = rows.dim;
  const int nrows = static_cast<int>(rows.blocks.size() * static_cast<std::size_t>(n));
  const int ncols = static_cast<int>(rows.columns());
  const double floor = detail::coefficient_floor(rows);

  auto coef = [&](int r, int c) {
    const auto& b = rows.blocks[static_cast<std::size_t>(r / n)];
    return b.coeffs(r % n, c);
  };
  auto offset = [&](int r) { return rows.blocks[static_cast<std::size_t>(r / n)].offset(r % n); };
  double off_scale = 0.0;
  for (int r = 0; r < nrows; ++r) off_scale = std::max(off_scale, std::abs(offset(r)));
  const double off_floor = 1e-12 * std::max(1.0, off_scale);

  // Nodes: rows 0..nrows-1, columns nrows..nrows+ncols-1.
  std::vector<int> sign(static_cast<std::size_t>(nrows + ncols), 0);
  std::vector<int> component(static_cast<std::size_t>(nrows + ncols), -1);
  int components = 0;
  std::vector<int> stack;
  for (int start = 0; start < nrows + ncols; ++start) {
    if (component[static_cast<std::size_t>(start)] >= 0) continue;
    component[static_cast<std::size_t>(start)] = components;
    sign[static_cast<std::size_t>(start)] = 1;
    stack.assign(1, start);
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      const int sv = sign[static_cast<std::size_t>(v)];
      auto visit = [&](int w, double a) {
        if (std::abs(a) <= floor) return true;
        const int want = sv * (a > 0 ? 1 : -1);
        auto& sw = sign[static_cast<std::size_t>(w)];
        if (component[static_cast<std::size_t>(w)] < 0) {
          component[static_cast<std::size_t>(w)] = components;
          sw = want;
          stack.push_back(w);
          return true;
        }
        return sw == want;
      };
      if (v < nrows) {
        for (int c = 0; c < ncols; ++c)
          if (!visit(nrows + c, coef(v, c))) return std::nullopt;
      } else {
        for (int r = 0; r < nrows; ++r)
          if (!visit(r, coef(r, v - nrows))) return std::nullopt;
      }
    }
    ++components;
  }

  // Per component: +1 keep, -1 flip, 0 undecided.
  std::vector<int> flip(static_cast<std::size_t>(components), 0);
  for (int r = 0; r < nrows; ++r) {
    const double o = offset(r);
    if (std::abs(o) <= off_floor) continue;
    const int need = (o > 0 ? 1 : -1) * sign[static_cast<std::size_t>(r)];
    auto& f = flip[static_cast<std::size_t>(component[static_cast<std::size_t>(r)])];
    if (f == 0)
      f = need;
    else if (f != need)
      return std::nullopt;
  }

  Orientation out;
  out.row_sign.resize(static_cast<std::size_t>(nrows));
  out.col_sign.resize(static_cast<std::size_t>(ncols));
  for (int v = 0; v < nrows + ncols; ++v) {
    const int f = flip[static_cast<std::size_t>(component[static_cast<std::size_t>(v)])];
    const int s = sign[static_cast<std::size_t>(v)] * (f == 0 ? 1 : f);
    if (v < nrows)
      out.row_sign[static_cast<std::size_t>(v)] = s;
    else
      out.col_sign[static_cast<std::size_t>(v - nrows)] = s;
  }
  return out;
}

struct PlanOptions {
  bool allow_fast_path = true;
  /// Upper bound on n*k for sign enumeration ((2^n)^k LP instances).
  int max_enumeration_bits = 24;
};

namespace detail {

struct RowsSolution {
  lp::LpStatus status = lp::LpStatus::infeasible;
  Vector x;  // full column vector (n*T)
  int branches = 0;
};

inline std::vector<Vector> unstack(const ConstraintRows& rows, const Vector& x) {
  std::vector<Vector> eps(static_cast<std::size_t>(rows.horizon), Vector::Zero(rows.dim));
  for (int t = 1; t <= rows.horizon; ++t)
    for (Eigen::Index j = 0; j < rows.dim; ++j) eps[static_cast<std::size_t>(t - 1)](j) = x(rows.column(t, j));
  return eps;
}

// Columns that can influence some constraint: steps 1..last constrained step.
struct ActiveColumns {
  std::vector<Eigen::Index> column;  // active index -> full column
  std::vector<int> step;
};

inline ActiveColumns active_columns(const ConstraintRows& rows) {
  ActiveColumns a;
  for (Eigen::Index j = 0; j < rows.dim; ++j)
    for (int t = 1; t <= rows.last_step(); ++t) {
      a.column.push_back(rows.column(t, j));
      a.step.push_back(t);
    }
  return a;
}

/// Single LP inside the orthant picked by `o`: eps = col_sign * y, y >= 0.
inline RowsSolution solve_l1_oriented(const ConstraintRows& rows, const SeparationSpec& spec, double scale,
                                      const Orientation& o) {
  const auto n = rows.dim;
  const auto act = active_columns(rows);
  const auto nv = static_cast<Eigen::Index>(act.column.size());
  lp::LpProblem p(nv);
  for (Eigen::Index a = 0; a < nv; ++a) p.c(a) = spec.weight(act.step[static_cast<std::size_t>(a)]);
  for (std::size_t b = 0; b < rows.blocks.size(); ++b) {
    const auto& blk = rows.blocks[b];
    Vector coeffs = Vector::Zero(nv);
    double rhs = scale * blk.separation;
    for (Eigen::Index j = 0; j < n; ++j) {
      const int rs = o.row_sign[b * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)];
      rhs -= rs * blk.offset(j);
      for (Eigen::Index a = 0; a < nv; ++a) {
        const auto c = act.column[static_cast<std::size_t>(a)];
        coeffs(a) += rs * blk.coeffs(j, c) * o.col_sign[static_cast<std::size_t>(c)];
      }
    }
    p.add_row(coeffs, rhs);
  }
  const auto s = lp::solve(p);
  RowsSolution out;
  out.status = s.status;
  out.branches = 1;
  if (s.status != lp::LpStatus::optimal) return out;
  out.x = Vector::Zero(rows.columns());
  for (Eigen::Index a = 0; a < nv; ++a) {
    const auto c = act.column[static_cast<std::size_t>(a)];
    out.x(c) = o.col_sign[static_cast<std::size_t>(c)] * s.x(a);
  }
  return out;
}

/// LP for one sign pattern: component j of block b is forced to sign sigma(b, j).
inline lp::LpSolution solve_l1_branch(const ConstraintRows& rows, const SeparationSpec& spec, double scale,
                                      const ActiveColumns& act, std::uint64_t code, int bits) {
  const auto n = rows.dim;
  const auto na = static_cast<Eigen::Index>(act.column.size());
  // variables: eps (free, na) | slack s (na)
  lp::LpProblem p(2 * na);
  for (Eigen::Index a = 0; a < na; ++a) {
    p.set_free(a);
    p.c(na + a) = spec.weight(act.step[static_cast<std::size_t>(a)]);
  }
  const Eigen::Index total_rows = 2 * na + static_cast<Eigen::Index>(rows.blocks.size()) * (n + 1);
  p.A = Matrix::Zero(total_rows, 2 * na);
  p.b = Vector::Zero(total_rows);
  Eigen::Index r = 0;
  for (Eigen::Index a = 0; a < na; ++a) {
    p.A(r, na + a) = 1.0;
    p.A(r++, a) = -1.0;
    p.A(r, na + a) = 1.0;
    p.A(r++, a) = 1.0;
  }
  for (std::size_t b = 0; b < rows.blocks.size(); ++b) {
    const auto& blk = rows.blocks[b];
    const Eigen::Index sum_row = r + n;
    p.b(sum_row) = scale * blk.separation;
    for (Eigen::Index j = 0; j < n; ++j) {
      const int bit = bits - 1 - static_cast<int>(b * static_cast<std::size_t>(n) + static_cast<std::size_t>(j));
      const double sigma = ((code >> bit) & 1u) ? -1.0 : 1.0;
      for (Eigen::Index a = 0; a < na; ++a) {
        const double v = sigma * blk.coeffs(j, act.column[static_cast<std::size_t>(a)]);
        p.A(r + j, a) = v;
        p.A(sum_row, a) += v;
      }
      p.b(r + j) = -sigma * blk.offset(j);
      p.b(sum_row) -= sigma * blk.offset(j);
    }
    r += n + 1;
  }
  return lp::solve(p);
}

/// Enumerates all (2^n)^k sign patterns. Patterns are visited in lexicographic order (first
/// block's first component most significant) inside fixed-size chunks, so the reduction is the
/// same for any thread count: lowest objective wins, ties go to the smaller pattern.
inline RowsSolution solve_l1_enumerated(const ConstraintRows& rows, const SeparationSpec& spec, double scale,
                                        const PlanOptions& opts) {
  const int bits = static_cast<int>(rows.blocks.size()) * static_cast<int>(rows.dim);
  if (bits > opts.max_enumeration_bits)
    throw ConfigError("sign enumeration needs 2^" + std::to_string(bits) + " LPs; limit is 2^" +
                      std::to_string(opts.max_enumeration_bits) + " (reduce constraints or dimension)");
  const auto act = active_columns(rows);
  const std::uint64_t patterns = std::uint64_t{1} << bits;
  constexpr std::uint64_t kChunk = 64;
  const std::uint64_t chunks = (patterns + kChunk - 1) / kChunk;

  struct Best {
    bool found = false;
    double objective = 0.0;
    std::uint64_t code = 0;
    Vector x;
  };
  auto better = [](const Best& cand, const Best& cur) {
    if (!cand.found) return false;
    if (!cur.found) return true;
    const double tie = 1e-12 * (1.0 + std::abs(cur.objective));
    if (cand.objective < cur.objective - tie) return true;
    return std::abs(cand.objective - cur.objective) <= tie && cand.code < cur.code;
  };
  auto run_chunk = [&](std::uint64_t chunk) {
    Best best;
    const std::uint64_t end = std::min(patterns, (chunk + 1) * kChunk);
    for (std::uint64_t code = chunk * kChunk; code < end; ++code) {
      auto s = solve_l1_branch(rows, spec, scale, act, code, bits);
      if (s.status != lp::LpStatus::optimal) continue;
      Best cand{true, s.objective, code, s.x.head(static_cast<Eigen::Index>(act.column.size()))};
      if (better(cand, best)) best = std::move(cand);
    }
    return best;
  };

  const unsigned workers =
      static_cast<unsigned>(std::min<std::uint64_t>(std::max(1u, std::thread::hardware_concurrency()), chunks));
  std::vector<Best> per_chunk(static_cast<std::size_t>(chunks));
  if (workers <= 1) {
    for (std::uint64_t c = 0; c < chunks; ++c) per_chunk[c] = run_chunk(c);
  } else {
    std::vector<std::future<void>> jobs;
    for (unsigned w = 0; w < workers; ++w)
      jobs.push_back(std::async(std::launch::async, [&, w] {
        for (std::uint64_t c = w; c < chunks; c += workers) per_chunk[c] = run_chunk(c);
      }));
    for (auto& j : jobs) j.get();
  }
  Best best;
  for (auto& b : per_chunk)
    if (better(b, best)) best = std::move(b);

  RowsSolution out;
  out.branches = static_cast<int>(patterns);
  if (!best.found) return out;
  out.status = lp::LpStatus::optimal;
  out.x = Vector::Zero(rows.columns());
  for (std::size_t a = 0; a < act.column.size(); ++a) out.x(act.column[a]) = best.x(static_cast<Eigen::Index>(a));
  return out;
}

inline RowsSolution solve_l1_rows(const ConstraintRows& rows, const SeparationSpec& spec, double scale,
                                  const PlanOptions& opts) {
  if (opts.allow_fast_path) {
    if (auto o = single_orthant_orientation(rows)) return solve_l1_oriented(rows, spec, scale, *o);
  }
  return solve_l1_enumerated(rows, spec, scale, opts);
}

inline SpoofPlan zero_plan(const ConstraintRows& rows) {
  SpoofPlan plan;
  plan.epsilons.assign(static_cast<std::size_t>(rows.horizon), Vector::Zero(rows.dim));
  return plan;
}

inline SpoofPlan finish(const ConstraintRows& rows, const SeparationSpec& spec, const RowsSolution& s,
                        PlanStatus ok_status) {
  SpoofPlan plan = zero_plan(rows);
  plan.branches_solved = s.branches;
  if (s.status != lp::LpStatus::optimal) {
    plan.status = PlanStatus::infeasible;
    return plan;
  }
  plan.epsilons = unstack(rows, s.x);
  plan.objective = weighted_effort(plan.epsilons, spec);
  plan.status = ok_status;
  return plan;
}

inline SpoofPlan plan_l1_rows(const ConstraintRows& rows, const SeparationSpec& spec, const PlanOptions& opts) {
  if (rows.blocks.empty()) return zero_plan(rows);
  return finish(rows, spec, solve_l1_rows(rows, spec, 1.0, opts), PlanStatus::optimal);
}

/// p = 2. With diagonal model matrices, y = eps^2 turns the problem into an LP; exact when every
/// constrained component has at most one contributor (one eps or an offset), otherwise a
/// feasible inner approximation. Everything else falls back to L1 with thresholds sqrt(n) d.
inline SpoofPlan plan_l2_rows(const ConstraintRows& rows, const SeparationSpec& spec, bool diagonal,
                              const PlanOptions& opts) {
  if (rows.blocks.empty()) return zero_plan(rows);
  const auto n = rows.dim;

  std::optional<Orientation> orient;
  if (diagonal) orient = single_orthant_orientation(rows);
  if (!orient) {
    auto s = solve_l1_rows(rows, spec, std::sqrt(static_cast<double>(n)), opts);
    return finish(rows, spec, s, PlanStatus::suboptimal_fallback);
  }

  const double floor = coefficient_floor(rows);
  bool exact = true;
  const auto act = active_columns(rows);
  const auto nv = static_cast<Eigen::Index>(act.column.size());
  lp::LpProblem p(nv);
  for (Eigen::Index a = 0; a < nv; ++a) p.c(a) = spec.weight(act.step[static_cast<std::size_t>(a)]);
  for (const auto& blk : rows.blocks) {
    Vector coeffs = Vector::Zero(nv);
    double rhs = blk.separation * blk.separation;
    for (Eigen::Index j = 0; j < n; ++j) {
      int contributors = std::abs(blk.offset(j)) > 0.0 ? 1 : 0;
      rhs -= blk.offset(j) * blk.offset(j);
      for (Eigen::Index a = 0; a < nv; ++a) {
        const double c = blk.coeffs(j, act.column[static_cast<std::size_t>(a)]);
        coeffs(a) += c * c;
        if (std::abs(c) > floor) ++contributors;
      }
      if (contributors > 1) exact = false;
    }
    p.add_row(coeffs, rhs);
  }
  const auto s = lp::solve(p);
  RowsSolution rs;
  rs.status = s.status;
  rs.branches = 1;
  if (s.status == lp::LpStatus::optimal) {
    rs.x = Vector::Zero(rows.columns());
    for (Eigen::Index a = 0; a < nv; ++a) {
      const auto c = act.column[static_cast<std::size_t>(a)];
      rs.x(c) = orient->col_sign[static_cast<std::size_t>(c)] * std::sqrt(std::max(0.0, s.x(a)));
    }
  }
  return finish(rows, spec, rs, exact ? PlanStatus::optimal : PlanStatus::suboptimal_fallback);
}

inline bool diagonal_model(const LinearSystem& sys, const Matrix& sigma0, const Matrix& sigma0_att) {
  return is_diagonal(sys.F) && is_diagonal(sys.B) && is_diagonal(sys.H) && is_diagonal(sys.Q) &&
         is_diagonal(sys.R) && is_diagonal(sigma0) && is_diagonal(sigma0_att);
}

inline void require_valid(const ScenarioConfig& config) {
  auto report = validate(config);
  if (!report.ok()) throw ConfigError("invalid configuration: " + report.joined());
}

inline SpoofPlan plan_rows(const ConstraintRows& rows, const SeparationSpec& spec, bool diagonal,
                           const PlanOptions& opts) {
  return spec.p == Norm::L1 ? plan_l1_rows(rows, spec, opts) : plan_l2_rows(rows, spec, diagonal, opts);
}

inline ConstraintRows offline_rows(const ScenarioConfig& config) {
  const int T = config.spec.horizon;
  const auto obs = gain_schedule(config.init_observer.cov, config.system, T);
  const auto att = gain_schedule(config.init_attacker.cov, config.system, T);
  const auto terms = separation_terms(obs, att, config.system, T);
  return build_constraint_rows(terms, config.spec, config.planning_offset());
}

}  // namespace detail

/// Minimum sum gamma_t ||eps_t||_1 meeting ||m_t - m~_t||_1 >= d_t (known-init) or
/// ||E(m_t - m~_t)||_1 >= d_t (unknown-init / online).
inline SpoofPlan plan_offline_l1(const ScenarioConfig& config, const PlanOptions& opts = {}) {
  detail::require_valid(config);
  if (config.spec.p != Norm::L1) throw ConfigError("plan_offline_l1 needs p = 1");
  return detail::plan_l1_rows(detail::offline_rows(config), config.spec, opts);
}

inline SpoofPlan plan_offline_l2(const ScenarioConfig& config, const PlanOptions& opts = {}) {
  detail::require_valid(config);
  if (config.spec.p != Norm::L2) throw ConfigError("plan_offline_l2 needs p = 2");
  const bool diagonal =
      detail::diagonal_model(config.system, config.init_observer.cov, config.init_attacker.cov);
  return detail::plan_l2_rows(detail::offline_rows(config), config.spec, diagonal, opts);
}

inline SpoofPlan plan_offline(const ScenarioConfig& config, const PlanOptions& opts = {}) {
  return config.spec.p == Norm::L1 ? plan_offline_l1(config, opts) : plan_offline_l2(config, opts);
}

/// Receding-horizon step: plans eps over steps t_now..min(T, t_now + H) from the estimated
/// current difference m_{t_now-1} - m~_{t_now-1}, and returns eps_{t_now}.
inline Vector plan_online(const ScenarioConfig& config, int t_now, const Vector& current_diff_estimate,
                          const PlanOptions& opts = {}) {
  const int T = config.spec.horizon;
  if (config.horizon_online < 1) throw ConfigError("online horizon H must be >= 1");
  if (t_now < 1 || t_now > T) throw DimensionError("online step outside horizon");
  const auto& sys = config.system;
  detail::require_length(current_diff_estimate, sys.dim(), "current difference estimate");

  const int t_end = std::min(T, t_now + config.horizon_online);
  const int len = t_end - t_now + 1;

  SeparationSpec local;
  local.p = config.spec.p;
  local.horizon = len;
  for (const auto& [t, d] : config.spec.constraints)
    if (t >= t_now && t <= t_end) local.constraints.emplace(t - t_now + 1, d);
  for (const auto& [t, g] : config.spec.gamma)
    if (t >= t_now && t <= t_end) local.gamma.emplace(t - t_now + 1, g);
  if (local.constraints.empty()) return Vector::Zero(sys.dim());

  Matrix sigma_att = config.init_attacker.cov;
  Matrix sigma_obs = config.init_observer.cov;
  if (t_now > 1) {
    sigma_att = gain_schedule(config.init_attacker.cov, sys, t_now - 1).posterior(t_now - 1);
    sigma_obs = gain_schedule(config.init_observer.cov, sys, t_now - 1).posterior(t_now - 1);
  }
  const auto att = gain_schedule(sigma_att, sys, len);
  const auto obs = gain_schedule(sigma_obs, sys, len);
  const auto terms = separation_terms(obs, att, sys, len);
  const auto rows = build_constraint_rows(terms, local, current_diff_estimate);
  const bool diagonal = detail::diagonal_model(sys, config.init_observer.cov, config.init_attacker.cov);
  const auto plan = detail::plan_rows(rows, local, diagonal, opts);
  if (plan.status == PlanStatus::infeasible)
    throw InfeasibleError("online window starting at step " + std::to_string(t_now) + " is infeasible");
  return plan.epsilons.front();
}

}  // namespace kfspoof
