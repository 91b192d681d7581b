#pragma once

#include <vector>

#include "kfspoof/kalman.hpp"

namespace kfspoof {

/// Closed-form pieces of the recursion
///
///   m_t - m~_t = A_t (m_{t-1} - m~_{t-1}) + B_t - K~_t eps_t,   A_t = F - K~_t H F,
///
/// unrolled over t = 1..T. Products are ordered A_t A_{t-1} ... (later steps on the left).
class SeparationTerms {
 public:
  SeparationTerms(std::vector<Matrix> observer_gains, std::vector<Matrix> attacker_gains, const Matrix& F,
                  const Matrix& H)
      : observer_gains_(std::move(observer_gains)), attacker_gains_(std::move(attacker_gains)) {
    const auto steps = attacker_gains_.size();
    const auto n = F.rows();
    transition_.reserve(steps);
    for (const auto& K : attacker_gains_) transition_.push_back(F - K * H * F);

    // propagator_[t-1][i] = A_t ... A_{i+1}, i = 0..t
    propagator_.resize(steps);
    influence_.resize(steps);
    for (std::size_t t = 1; t <= steps; ++t) {
      auto& row = propagator_[t - 1];
      row.resize(t + 1);
      row[t] = Matrix::Identity(n, n);
      for (std::size_t i = t; i-- > 0;) row[i] = row[i + 1] * transition_[i];
      auto& phi = influence_[t - 1];
      phi.reserve(t);
      for (std::size_t i = 1; i <= t; ++i) phi.push_back(-row[i] * attacker_gains_[i - 1]);
    }
  }

  [[nodiscard]] int horizon() const { return static_cast<int>(transition_.size()); }
  [[nodiscard]] Eigen::Index dim() const { return transition_.empty() ? 0 : transition_.front().rows(); }

  /// A_t
  [[nodiscard]] const Matrix& transition(int t) const { return transition_.at(idx(t)); }
  /// A_t ... A_{i+1}; identity when i == t.
  [[nodiscard]] const Matrix& propagator(int t, int i) const {
    check(t);
    if (i < 0 || i > t) throw DimensionError("propagator index out of range");
    return propagator_[idx(t)][static_cast<std::size_t>(i)];
  }
  /// P_t = A_t ... A_1, the map applied to the initial mean difference.
  [[nodiscard]] const Matrix& initial_propagator(int t) const { return propagator(t, 0); }
  /// Phi_{t,i}: how eps_i moves m_t - m~_t. Zero for i > t.
  [[nodiscard]] Matrix influence(int t, int i) const {
    check(t);
    if (i < 1) throw DimensionError("influence index must be >= 1");
    if (i > t) return Matrix::Zero(dim(), dim());
    return influence_[idx(t)][static_cast<std::size_t>(i - 1)];
  }
  [[nodiscard]] const Matrix& observer_gain(int t) const { return observer_gains_.at(idx(t)); }
  [[nodiscard]] const Matrix& attacker_gain(int t) const { return attacker_gains_.at(idx(t)); }

 private:
  static std::size_t idx(int t) { return static_cast<std::size_t>(t - 1); }
  void check(int t) const {
    if (t < 1 || t > horizon())
      throw DimensionError("step " + std::to_string(t) + " outside separation horizon " +
                           std::to_string(horizon()));
  }

  std::vector<Matrix> observer_gains_;
  std::vector<Matrix> attacker_gains_;
  std::vector<Matrix> transition_;
  std::vector<std::vector<Matrix>> propagator_;
  std::vector<std::vector<Matrix>> influence_;
};

/// Builds the terms from the observer (K_t) and attacker (K~_t) gain schedules.
inline SeparationTerms separation_terms(const GainSchedule& schedule_obs, const GainSchedule& schedule_att,
                                        const LinearSystem& sys, int steps) {
  detail::check_system(sys);
  if (steps < 1) throw DimensionError("separation horizon must be >= 1");
  if (schedule_obs.length() < steps || schedule_att.length() < steps)
    throw DimensionError("gain schedules shorter than the separation horizon");
  const auto n = sys.dim();
  std::vector<Matrix> obs(schedule_obs.gains.begin(), schedule_obs.gains.begin() + steps);
  std::vector<Matrix> att(schedule_att.gains.begin(), schedule_att.gains.begin() + steps);
  for (int t = 0; t < steps; ++t) {
    detail::require_square(obs[static_cast<std::size_t>(t)], n, "observer gain");
    detail::require_square(att[static_cast<std::size_t>(t)], n, "attacker gain");
  }
  return SeparationTerms(std::move(obs), std::move(att), sys.F, sys.H);
}

/// m_t - m~_t = P_t d0 + sum_{i<=t} (A_t...A_{i+1}) B_i + sum_{i<=t} Phi_{t,i} eps_i.
/// `bias_terms` may be empty (all B_i = 0).
inline Vector exact_separation(const SeparationTerms& terms, const Vector& init_diff,
                               const std::vector<Vector>& bias_terms, const std::vector<Vector>& epsilons,
                               int t) {
  const auto n = terms.dim();
  detail::require_length(init_diff, n, "initial difference");
  if (static_cast<int>(epsilons.size()) < t) throw DimensionError("fewer spoofing vectors than steps");
  if (!bias_terms.empty() && static_cast<int>(bias_terms.size()) < t)
    throw DimensionError("fewer bias terms than steps");

  Vector out = terms.initial_propagator(t) * init_diff;
  for (int i = 1; i <= t; ++i) {
    const auto k = static_cast<std::size_t>(i - 1);
    detail::require_length(epsilons[k], n, "spoofing vector");
    out += terms.influence(t, i) * epsilons[k];
    if (!bias_terms.empty()) {
      detail::require_length(bias_terms[k], n, "bias term");
      out += terms.propagator(t, i) * bias_terms[k];
    }
  }
  return out;
}

/// E(m_t - m~_t) for t = 1..T: the bias terms average out, leaving P_t M0 + sum Phi_{t,i} eps_i.
inline std::vector<Vector> expected_separation(const SeparationTerms& terms, const Vector& M0,
                                               const std::vector<Vector>& epsilons) {
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(terms.horizon()));
  for (int t = 1; t <= terms.horizon(); ++t) out.push_back(exact_separation(terms, M0, {}, epsilons, t));
  return out;
}

/// B_t = (K_t - K~_t) [z_t - H(F m_{t-1} + B u_{t-1})], with m_t the unspoofed filter mean.
/// measurements[t-1] holds z_t.
inline std::vector<Vector> bias_terms(const SeparationTerms& terms, const LinearSystem& sys,
                                      const Vector& observer_mean0, const ControlSequence& controls,
                                      const std::vector<Vector>& measurements) {
  const int steps = std::min(terms.horizon(), static_cast<int>(measurements.size()));
  const auto n = sys.dim();
  detail::require_length(observer_mean0, n, "observer initial mean");
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(steps));
  Vector m = observer_mean0;
  for (int t = 1; t <= steps; ++t) {
    const Vector& z = measurements[static_cast<std::size_t>(t - 1)];
    detail::require_length(z, n, "measurement");
    const Vector predicted = sys.F * m + sys.B * controls.at(t - 1);
    const Vector innovation = z - sys.H * predicted;
    out.push_back((terms.observer_gain(t) - terms.attacker_gain(t)) * innovation);
    m = predicted + terms.observer_gain(t) * innovation;
  }
  return out;
}

}  // namespace kfspoof
