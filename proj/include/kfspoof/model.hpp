#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kfspoof/error.hpp"

namespace kfspoof {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace detail {

template <class A, class B>
bool same(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
}

}  // namespace detail

/// Linear-Gaussian target model.
///
///   x_{t+1} = F x_t + B u_t + w_t,   w_t ~ N(0, R)
///   z_t     = H x_t + v_t,           v_t ~ N(0, Q)
///
/// R is the process-noise covariance and Q the measurement-noise covariance.
struct LinearSystem {
  Matrix F;
  Matrix B;
  Matrix H;
  Matrix R;
  Matrix Q;

  [[nodiscard]] Eigen::Index dim() const { return F.rows(); }

  bool operator==(const LinearSystem& o) const {
    return detail::same(F, o.F) && detail::same(B, o.B) && detail::same(H, o.H) && detail::same(R, o.R) &&
           detail::same(Q, o.Q);
  }
};

struct GaussianBelief {
  Vector mean;
  Matrix cov;

  bool operator==(const GaussianBelief& o) const {
    return detail::same(mean, o.mean) && detail::same(cov, o.cov);
  }
};

enum class Norm { L1 = 1, L2 = 2 };

/// Required separations d_t keyed by 1-based step, plus objective weights.
struct SeparationSpec {
  std::map<int, double> constraints;
  Norm p = Norm::L1;
  std::map<int, double> gamma;  // missing steps weigh 1
  int horizon = 0;

  [[nodiscard]] double weight(int t) const {
    auto it = gamma.find(t);
    return it == gamma.end() ? 1.0 : it->second;
  }
  [[nodiscard]] int constrained_count() const { return static_cast<int>(constraints.size()); }
  [[nodiscard]] double required(int t) const {
    auto it = constraints.find(t);
    return it == constraints.end() ? 0.0 : it->second;
  }
  [[nodiscard]] int last_constrained_step() const {
    return constraints.empty() ? 0 : constraints.rbegin()->first;
  }

  bool operator==(const SeparationSpec&) const = default;
};

enum class PlanStatus { optimal, suboptimal_fallback, infeasible };

inline const char* to_string(PlanStatus s) {
  switch (s) {
    case PlanStatus::optimal: return "optimal";
    case PlanStatus::suboptimal_fallback: return "suboptimal-fallback";
    case PlanStatus::infeasible: return "infeasible";
  }
  return "unknown";
}

/// Spoofing sequence eps_1..eps_T (index t-1 holds eps_t).
struct SpoofPlan {
  std::vector<Vector> epsilons;
  double objective = 0.0;
  PlanStatus status = PlanStatus::optimal;
  int branches_solved = 0;

  [[nodiscard]] int horizon() const { return static_cast<int>(epsilons.size()); }
};

/// sum_t gamma_t ||eps_t||_p^p
inline double weighted_effort(const std::vector<Vector>& eps, const SeparationSpec& spec) {
  double total = 0.0;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    const double w = spec.weight(static_cast<int>(i) + 1);
    total += spec.p == Norm::L1 ? w * eps[i].lpNorm<1>() : w * eps[i].squaredNorm();
  }
  return total;
}

enum class Mode { known_init, unknown_init, online };

/// How the online attacker estimates m_{t-1} - m~_{t-1} before re-planning.
enum class OnlineFeedback {
  observed,  // realised difference of the two filters (M0 before the first step)
  expected   // open-loop expected-separation recursion seeded with M0
};

/// Control inputs u_0, u_1, ...; a single entry is broadcast to every step.
struct ControlSequence {
  std::vector<Vector> values;

  [[nodiscard]] const Vector& at(int k) const {
    if (values.empty()) throw DimensionError("control sequence is empty");
    if (values.size() == 1) return values.front();
    if (k < 0 || k >= static_cast<int>(values.size()))
      throw DimensionError("control index " + std::to_string(k) + " outside sequence of length " +
                           std::to_string(values.size()));
    return values[static_cast<std::size_t>(k)];
  }
  [[nodiscard]] bool covers(int steps) const {
    return values.size() == 1 || static_cast<int>(values.size()) >= steps;
  }

  bool operator==(const ControlSequence& o) const {
    if (values.size() != o.values.size()) return false;
    for (std::size_t i = 0; i < values.size(); ++i)
      if (!detail::same(values[i], o.values[i])) return false;
    return true;
  }
};

struct ScenarioConfig {
  LinearSystem system;
  ControlSequence controls;
  GaussianBelief init_observer;  // (m0, Sigma0)
  GaussianBelief init_attacker;  // (m~0, Sigma~0)
  Vector M0;                     // E(m0 - m~0)
  Matrix m0_cov;                 // spread of the observer's m0 across trials (unknown-init / online)
  SeparationSpec spec;
  Mode mode = Mode::known_init;
  int horizon_online = 15;
  int trials = 1;
  std::uint64_t seed = 0;
  OnlineFeedback feedback = OnlineFeedback::observed;
  double noise_scale = 1.0;  // multiplies sampled process/measurement noise

  /// Bias between the two filters' initial means as the planner sees it.
  [[nodiscard]] Vector planning_offset() const {
    if (mode == Mode::known_init) return Vector::Zero(system.dim());
    return M0;
  }

  bool operator==(const ScenarioConfig& o) const {
    return system == o.system && controls == o.controls && init_observer == o.init_observer &&
           init_attacker == o.init_attacker && detail::same(M0, o.M0) && detail::same(m0_cov, o.m0_cov) &&
           spec == o.spec && mode == o.mode && horizon_online == o.horizon_online && trials == o.trials &&
           seed == o.seed && feedback == o.feedback && noise_scale == o.noise_scale;
  }
};

namespace detail {

inline bool is_symmetric(const Matrix& m, double tol = 1e-10) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

inline bool is_diagonal(const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      if (i != j && m(i, j) != 0.0) return false;
  return true;
}

}  // namespace detail

/// Symmetric with smallest eigenvalue above -1e-10.
inline bool is_symmetric_psd(const Matrix& m) {
  if (m.size() == 0 || !detail::is_symmetric(m)) return false;
  if (!m.allFinite()) return false;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff() >= -1e-10;
}

struct ValidationReport {
  std::vector<std::string> violations;

  [[nodiscard]] bool ok() const { return violations.empty(); }
  [[nodiscard]] std::string joined() const {
    std::string out;
    for (const auto& v : violations) {
      if (!out.empty()) out += "; ";
      out += v;
    }
    return out;
  }
};

/// Collects every problem with the configuration; never throws.
inline ValidationReport validate(const ScenarioConfig& c) {
  ValidationReport r;
  auto bad = [&r](std::string msg) { r.violations.push_back(std::move(msg)); };

  const Eigen::Index n = c.system.F.rows();
  if (n < 1) {
    bad("dimension mismatch: F is empty");
    return r;
  }
  auto square = [&](const Matrix& m, const char* name) {
    if (m.rows() != n || m.cols() != n) {
      bad(std::string("dimension mismatch: ") + name + " is " + std::to_string(m.rows()) + "x" +
          std::to_string(m.cols()) + ", expected " + std::to_string(n) + "x" + std::to_string(n));
      return false;
    }
    return true;
  };
  auto vec = [&](const Vector& v, const char* name) {
    if (v.size() != n) {
      bad(std::string("dimension mismatch: ") + name + " has length " + std::to_string(v.size()) +
          ", expected " + std::to_string(n));
      return false;
    }
    return true;
  };
  auto psd = [&](const Matrix& m, const char* name) {
    if (square(m, name) && !is_symmetric_psd(m)) bad(std::string(name) + " not symmetric PSD");
  };

  square(c.system.F, "F");
  square(c.system.B, "B");
  square(c.system.H, "H");
  psd(c.system.R, "R");
  psd(c.system.Q, "Q");
  vec(c.init_observer.mean, "m0");
  psd(c.init_observer.cov, "Sigma0");
  vec(c.init_attacker.mean, "m0_tilde");
  psd(c.init_attacker.cov, "Sigma0_tilde");
  if (c.mode != Mode::known_init) vec(c.M0, "M0");
  if (c.m0_cov.size() != 0) psd(c.m0_cov, "m0_distribution");

  const auto& s = c.spec;
  if (s.horizon < 1) bad("horizon T must be >= 1");
  for (const auto& [t, d] : s.constraints) {
    if (t < 1 || t > s.horizon)
      bad("constraint step " + std::to_string(t) + " out of range [1, " + std::to_string(s.horizon) + "]");
    if (!(d > 0.0)) bad("non-positive separation at step " + std::to_string(t));
  }
  for (const auto& [t, g] : s.gamma) {
    if (t < 1 || t > s.horizon) bad("gamma step " + std::to_string(t) + " out of range");
    if (!(g > 0.0)) bad("non-positive gamma at step " + std::to_string(t));
  }

  if (c.controls.values.empty()) {
    bad("no control inputs");
  } else {
    for (const auto& u : c.controls.values)
      if (u.size() != n) {
        bad("dimension mismatch: control vector length " + std::to_string(u.size()));
        break;
      }
    if (!c.controls.covers(s.horizon)) bad("control sequence shorter than horizon T");
  }

  if (c.mode == Mode::known_init && c.init_attacker.mean.size() == n && c.init_observer.mean.size() == n &&
      !(c.init_attacker == c.init_observer))
    bad("known-init mode requires attacker initial belief equal to observer's");
  if (c.mode == Mode::online && c.horizon_online < 1) bad("online horizon H must be >= 1");
  if (c.trials < 1) bad("trials must be >= 1");
  if (!(c.noise_scale >= 0.0)) bad("noise_scale must be >= 0");
  return r;
}

}  // namespace kfspoof
