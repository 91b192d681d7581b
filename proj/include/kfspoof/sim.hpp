#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <map>
#include <numbers>
#include <thread>
#include <variant>
#include <vector>

#include "kfspoof/planner.hpp"

namespace kfspoof {

/// Counter-based SplitMix64 stream. Stream `i` of a master seed is independent of how many
/// other streams are drawn, which keeps trial i stable when the trial count changes.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) : key_(mix(seed ^ mix(stream + kGolden))) {}

  std::uint64_t next_u64() { return mix(key_ + (++counter_) * kGolden); }

  /// Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    const double theta = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  Vector normal_vector(Eigen::Index n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = normal();
    return v;
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Symmetric square root V sqrt(D) V^T of a PSD matrix (tiny negative eigenvalues clamped).
inline Matrix symmetric_sqrt(const Matrix& cov) {
  if (cov.size() == 0) return cov;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  const Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

struct Trajectory {
  std::vector<Vector> states;        // x_0 .. x_T
  std::vector<Vector> measurements;  // z_1 .. z_T (index t-1)
};

/// x_t = F x_{t-1} + B u_{t-1} + w, z_t = H x_t + v; noise scaled by `noise_scale`.
inline Trajectory simulate_truth(const LinearSystem& sys, const Vector& x0, const ControlSequence& controls,
                                 int steps, Rng& rng, double noise_scale = 1.0) {
  detail::check_system(sys);
  detail::require_length(x0, sys.dim(), "x0");
  const auto n = sys.dim();
  const Matrix proc = noise_scale * symmetric_sqrt(sys.R);
  const Matrix meas = noise_scale * symmetric_sqrt(sys.Q);
  Trajectory out;
  out.states.reserve(static_cast<std::size_t>(steps) + 1);
  out.measurements.reserve(static_cast<std::size_t>(steps));
  out.states.push_back(x0);
  for (int t = 1; t <= steps; ++t) {
    const Vector w = proc * rng.normal_vector(n);
    const Vector v = meas * rng.normal_vector(n);
    Vector x = sys.F * out.states.back() + sys.B * controls.at(t - 1) + w;
    out.measurements.push_back(sys.H * x + v);
    out.states.push_back(std::move(x));
  }
  return out;
}

struct StepRecord {
  Vector m;        // unspoofed estimate
  Vector m_tilde;  // spoofed estimate
  Vector eps;
  Vector z;
  double sep_l1 = 0.0;
  double sep_l2 = 0.0;
};

struct TrialResult {
  std::vector<StepRecord> steps;  // index t-1
  double injected_l1 = 0.0;       // sum ||eps_t||_1
  std::map<int, double> slack;    // achieved - desired (spec norm) per constrained step

  [[nodiscard]] double separation(int t, Norm p) const {
    const auto& s = steps.at(static_cast<std::size_t>(t - 1));
    return p == Norm::L1 ? s.sep_l1 : s.sep_l2;
  }
};

namespace detail {

// Two Kalman filters fed z_t and z_t + eps_t.
class DualFilter {
 public:
  DualFilter(const LinearSystem& sys, GaussianBelief unspoofed, GaussianBelief spoofed)
      : sys_(sys), a_(std::move(unspoofed)), b_(std::move(spoofed)) {}

  [[nodiscard]] Vector difference() const { return a_.mean - b_.mean; }

  StepRecord step(const Vector& u, const Vector& z, const Vector& eps) {
    a_ = update(predict(a_, sys_, u), sys_, z);
    b_ = update(predict(b_, sys_, u), sys_, z + eps);
    StepRecord r;
    r.m = a_.mean;
    r.m_tilde = b_.mean;
    r.eps = eps;
    r.z = z;
    const Vector d = a_.mean - b_.mean;
    r.sep_l1 = d.lpNorm<1>();
    r.sep_l2 = d.norm();
    return r;
  }

 private:
  const LinearSystem& sys_;
  GaussianBelief a_;
  GaussianBelief b_;
};

inline void fill_slack(TrialResult& r, const SeparationSpec* spec) {
  if (spec == nullptr) return;
  for (const auto& [t, d] : spec->constraints)
    if (t <= static_cast<int>(r.steps.size())) r.slack[t] = r.separation(t, spec->p) - d;
}

}  // namespace detail

/// Replays a plan: one filter consumes z_t, the other z_t + eps_t. Steps past the plan get eps = 0.
inline TrialResult run_dual_filters(const LinearSystem& sys, const std::vector<Vector>& epsilons,
                                    const std::vector<Vector>& measurements, const GaussianBelief& init_obs,
                                    const GaussianBelief& init_att, const ControlSequence& controls,
                                    const SeparationSpec* spec = nullptr) {
  if (epsilons.size() > measurements.size()) throw DimensionError("plan longer than measurement record");
  detail::DualFilter filters(sys, init_obs, init_att);
  TrialResult out;
  out.steps.reserve(measurements.size());
  const Vector zero = Vector::Zero(sys.dim());
  for (std::size_t k = 0; k < measurements.size(); ++k) {
    const Vector& eps = k < epsilons.size() ? epsilons[k] : zero;
    out.steps.push_back(filters.step(controls.at(static_cast<int>(k)), measurements[k], eps));
    out.injected_l1 += eps.lpNorm<1>();
  }
  detail::fill_slack(out, spec);
  return out;
}

inline TrialResult run_dual_filters(const LinearSystem& sys, const SpoofPlan& plan,
                                    const std::vector<Vector>& measurements, const GaussianBelief& init_obs,
                                    const GaussianBelief& init_att, const ControlSequence& controls,
                                    const SeparationSpec* spec = nullptr) {
  return run_dual_filters(sys, plan.epsilons, measurements, init_obs, init_att, controls, spec);
}

/// Everything random about one trial.
struct TrialDraw {
  GaussianBelief observer;
  GaussianBelief attacker;
  Trajectory truth;
};

/// In known-init mode both filters start from the configured belief. Otherwise the observer's
/// m0 is drawn from N(m0, m0_cov) while the attacker keeps m~0. The true x0 is drawn from
/// N(m0, Sigma0) so the observer's prior is calibrated.
inline TrialDraw draw_trial(const ScenarioConfig& config, std::uint64_t master_seed, std::uint64_t index) {
  Rng rng(master_seed, index);
  const auto n = config.system.dim();
  TrialDraw d;
  d.observer = config.init_observer;
  d.attacker = config.init_attacker;
  if (config.mode != Mode::known_init && config.m0_cov.size() != 0)
    d.observer.mean += symmetric_sqrt(config.m0_cov) * rng.normal_vector(n);
  const Vector x0 =
      d.observer.mean + config.noise_scale * symmetric_sqrt(config.init_observer.cov) * rng.normal_vector(n);
  d.truth = simulate_truth(config.system, x0, config.controls, config.spec.horizon, rng, config.noise_scale);
  return d;
}

/// Receding-horizon attack on one drawn trial.
inline TrialResult run_online(const ScenarioConfig& config, const TrialDraw& draw, const PlanOptions& opts = {}) {
  const int T = config.spec.horizon;
  const auto& sys = config.system;
  const auto att = gain_schedule(config.init_attacker.cov, sys, T);
  const auto obs = gain_schedule(config.init_observer.cov, sys, T);
  const auto terms = separation_terms(obs, att, sys, T);

  detail::DualFilter filters(sys, draw.observer, draw.attacker);
  Vector expected = config.planning_offset();
  TrialResult out;
  out.steps.reserve(static_cast<std::size_t>(T));
  for (int t = 1; t <= T; ++t) {
    const Vector estimate =
        (t == 1 || config.feedback == OnlineFeedback::expected) ? expected : filters.difference();
    const Vector eps = plan_online(config, t, estimate, opts);
    out.steps.push_back(
        filters.step(config.controls.at(t - 1), draw.truth.measurements[static_cast<std::size_t>(t - 1)], eps));
    out.injected_l1 += eps.lpNorm<1>();
    expected = terms.transition(t) * expected - terms.attacker_gain(t) * eps;
  }
  detail::fill_slack(out, &config.spec);
  return out;
}

struct OnlinePolicy {
  PlanOptions options;
};

/// Either a fixed offline plan or the receding-horizon policy.
using Strategy = std::variant<SpoofPlan, OnlinePolicy>;

struct StepStatistics {
  int step = 0;
  double desired = 0.0;
  double mean = 0.0;
  double stddev = 0.0;  // sample (n-1) standard deviation
  double min = 0.0;
  double max = 0.0;
  std::vector<double> samples;  // achieved separation per trial, trial order
};

struct MonteCarloSummary {
  std::vector<StepStatistics> steps;  // one per constrained step
  int trials = 0;
  std::uint64_t seed = 0;
  std::vector<TrialResult> results;
};

inline TrialResult run_trial(const ScenarioConfig& config, const Strategy& strategy, const TrialDraw& draw) {
  if (const auto* plan = std::get_if<SpoofPlan>(&strategy))
    return run_dual_filters(config.system, *plan, draw.truth.measurements, draw.observer, draw.attacker,
                            config.controls, &config.spec);
  return run_online(config, draw, std::get<OnlinePolicy>(strategy).options);
}

/// Independent trials with per-trial streams of `seed`; reduced in trial order.
inline MonteCarloSummary monte_carlo(const ScenarioConfig& config, const Strategy& strategy, int trials,
                                     std::uint64_t seed) {
  if (trials < 1) throw ConfigError("trials must be >= 1");
  MonteCarloSummary out;
  out.trials = trials;
  out.seed = seed;
  out.results.resize(static_cast<std::size_t>(trials));

  auto work = [&](int i) {
    const auto draw = draw_trial(config, seed, static_cast<std::uint64_t>(i));
    out.results[static_cast<std::size_t>(i)] = run_trial(config, strategy, draw);
  };
  const unsigned workers = std::min<unsigned>(std::max(1u, std::thread::hardware_concurrency()),
                                              static_cast<unsigned>(trials));
  if (workers <= 1) {
    for (int i = 0; i < trials; ++i) work(i);
  } else {
    std::vector<std::future<void>> jobs;
    for (unsigned w = 0; w < workers; ++w)
      jobs.push_back(std::async(std::launch::async, [&, w] {
        for (int i = static_cast<int>(w); i < trials; i += static_cast<int>(workers)) work(i);
      }));
    for (auto& j : jobs) j.get();
  }

  for (const auto& [t, d] : config.spec.constraints) {
    StepStatistics s;
    s.step = t;
    s.desired = d;
    s.samples.reserve(static_cast<std::size_t>(trials));
    for (const auto& r : out.results) s.samples.push_back(r.separation(t, config.spec.p));
    double sum = 0.0;
    for (double v : s.samples) sum += v;
    s.mean = sum / trials;
    double ss = 0.0;
    for (double v : s.samples) ss += (v - s.mean) * (v - s.mean);
    s.stddev = trials > 1 ? std::sqrt(ss / (trials - 1)) : 0.0;
    s.min = *std::min_element(s.samples.begin(), s.samples.end());
    s.max = *std::max_element(s.samples.begin(), s.samples.end());
    out.steps.push_back(std::move(s));
  }
  return out;
}

struct OnlineComparison {
  TrialResult offline;
  TrialResult online;
  std::vector<double> divergence_offline;  // ||m_t - m~_t|| - d_t, every step (d_t = 0 if unconstrained)
  std::vector<double> divergence_online;
  double energy_offline = 0.0;  // sum ||eps||_1
  double energy_online = 0.0;
  double mean_abs_divergence_offline = 0.0;  // over constrained steps
  double mean_abs_divergence_online = 0.0;
};

/// Offline plan vs receding-horizon policy on the same noise realisation (trial 0 of `seed`).
inline OnlineComparison compare_online_offline(const ScenarioConfig& config, std::uint64_t seed,
                                               const PlanOptions& opts = {}) {
  const auto plan = plan_offline(config, opts);
  if (plan.status == PlanStatus::infeasible) throw InfeasibleError("offline plan infeasible");
  const auto draw = draw_trial(config, seed, 0);

  OnlineComparison c;
  c.offline = run_trial(config, plan, draw);
  c.online = run_online(config, draw, opts);
  c.energy_offline = c.offline.injected_l1;
  c.energy_online = c.online.injected_l1;
  const int T = config.spec.horizon;
  for (int t = 1; t <= T; ++t) {
    const double d = config.spec.required(t);
    c.divergence_offline.push_back(c.offline.separation(t, config.spec.p) - d);
    c.divergence_online.push_back(c.online.separation(t, config.spec.p) - d);
  }
  const int k = config.spec.constrained_count();
  if (k > 0) {
    for (const auto& [t, d] : config.spec.constraints) {
      c.mean_abs_divergence_offline += std::abs(c.divergence_offline[static_cast<std::size_t>(t - 1)]);
      c.mean_abs_divergence_online += std::abs(c.divergence_online[static_cast<std::size_t>(t - 1)]);
    }
    c.mean_abs_divergence_offline /= k;
    c.mean_abs_divergence_online /= k;
  }
  return c;
}

}  // namespace kfspoof
