#include <gtest/gtest.h>

#include <random>

#include "corpus.hpp"
#include "kfspoof/separation.hpp"
#include "kfspoof/sim.hpp"
#include "oracles.hpp"

using namespace kfspoof;

namespace {

const Matrix I2 = Matrix::Identity(2, 2);

LinearSystem section4_system() { return {I2, I2, I2, 0.5 * I2, 0.5 * I2}; }

SeparationTerms terms_for(const LinearSystem& sys, const Matrix& s_obs, const Matrix& s_att, int T) {
  return separation_terms(gain_schedule(s_obs, sys, T), gain_schedule(s_att, sys, T), sys, T);
}

Vector randn(std::mt19937_64& g, Eigen::Index n, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = nd(g);
  return v;
}

oracle::System as_oracle(const LinearSystem& s) { return {s.F, s.B, s.H, s.R, s.Q}; }

}  // namespace

TEST(Terms, SectionFourFirstStep) {
  const auto terms = terms_for(section4_system(), I2, I2, 3);
  EXPECT_TRUE(terms.transition(1).isApprox(0.25 * I2));
  EXPECT_TRUE(terms.influence(1, 1).isApprox(-0.75 * I2));
  EXPECT_TRUE(terms.initial_propagator(1).isApprox(0.25 * I2));
}

TEST(Terms, SecondStepInfluence) {
  const auto sys = section4_system();
  const auto terms = terms_for(sys, I2, I2, 2);
  // Sigma_1 = 0.375, prior 0.875, K_2 = 0.875 / 1.375
  const double k2 = 0.875 / 1.375;
  EXPECT_NEAR((terms.influence(2, 1) - (1.0 - k2) * (-0.75) * I2).cwiseAbs().maxCoeff(), 0.0, 1e-15);
  EXPECT_NEAR((terms.influence(2, 2) + k2 * I2).cwiseAbs().maxCoeff(), 0.0, 1e-15);
  EXPECT_EQ(terms.influence(1, 2).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Terms, ZeroDynamicsHaveNoMemory) {
  auto sys = section4_system();
  sys.F.setZero();
  const auto terms = terms_for(sys, I2, I2, 6);
  for (int t = 1; t <= 6; ++t) {
    EXPECT_EQ(terms.transition(t).cwiseAbs().maxCoeff(), 0.0);
    for (int i = 1; i < t; ++i) EXPECT_EQ(terms.influence(t, i).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_GT(terms.influence(t, t).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Terms, InfluenceStructure) {
  std::mt19937_64 g(3);
  LinearSystem sys{corpus::random_matrix(g, 3, -1, 1), I2.Identity(3, 3), corpus::random_matrix(g, 3, -1, 1),
                   corpus::random_psd(g, 3, 0.1), corpus::random_psd(g, 3, 0.1)};
  const auto terms = terms_for(sys, corpus::random_psd(g, 3, 0.1), corpus::random_psd(g, 3, 0.1), 8);
  for (int t = 1; t <= 8; ++t) {
    EXPECT_TRUE(terms.influence(t, t).isApprox(-terms.attacker_gain(t)));
    Matrix prod = Matrix::Identity(3, 3);
    for (int i = t; i >= 1; --i) {
      EXPECT_LT((terms.influence(t, i) - prod * -terms.attacker_gain(i)).cwiseAbs().maxCoeff(), 1e-12);
      prod = prod * terms.transition(i);
    }
    EXPECT_LT((terms.initial_propagator(t) - prod).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Exact, SingleSpoofOnOneAxis) {
  const auto terms = terms_for(section4_system(), I2, I2, 1);
  const Vector sep = exact_separation(terms, Vector::Zero(2), {}, {Vector{{-4.0 / 3.0, 0.0}}}, 1);
  EXPECT_NEAR(sep(0), 1.0, 1e-15);
  EXPECT_EQ(sep(1), 0.0);
}

TEST(Exact, AllZero) {
  const auto terms = terms_for(section4_system(), I2, I2, 5);
  std::vector<Vector> eps(5, Vector::Zero(2));
  for (int t = 1; t <= 5; ++t) EXPECT_EQ(exact_separation(terms, Vector::Zero(2), {}, eps, t).norm(), 0.0);
}

TEST(Expected, UnknownInitOffset) {
  const auto terms = terms_for(section4_system(), I2, 1.5 * I2, 4);
  std::vector<Vector> eps(4, Vector::Zero(2));
  const auto e = expected_separation(terms, Vector::Ones(2), eps);
  EXPECT_NEAR((e[0] - 0.2 * Vector::Ones(2)).cwiseAbs().maxCoeff(), 0.0, 1e-15);
}

TEST(Expected, ReducesToExactWithoutOffset) {
  const auto terms = terms_for(section4_system(), I2, I2, 4);
  std::mt19937_64 g(1);
  std::vector<Vector> eps;
  for (int t = 0; t < 4; ++t) eps.push_back(randn(g, 2));
  const auto e = expected_separation(terms, Vector::Zero(2), eps);
  for (int t = 1; t <= 4; ++t) EXPECT_TRUE(e[static_cast<std::size_t>(t - 1)] == exact_separation(terms, Vector::Zero(2), {}, eps, t));
}

// Closed form vs two filters run side by side, random everything, t <= 50.
TEST(Exact, MatchesDualFilterOracle) {
  std::mt19937_64 g(2718);
  double worst = 0.0;
  for (int trial = 0; trial < 60; ++trial) {
    const Eigen::Index n = 1 + trial % 3;
    const int T = 50;
    LinearSystem sys{corpus::random_matrix(g, n, -1.0, 1.0), corpus::random_matrix(g, n, -1.0, 1.0),
                     corpus::random_matrix(g, n, -1.0, 1.0) + Matrix::Identity(n, n),
                     corpus::random_psd(g, n, 0.05), corpus::random_psd(g, n, 0.05)};
    const GaussianBelief obs{randn(g, n), corpus::random_psd(g, n, 0.05)};
    const GaussianBelief att{randn(g, n), corpus::random_psd(g, n, 0.05)};
    std::vector<Vector> u, z, eps;
    for (int t = 0; t < T; ++t) {
      u.push_back(randn(g, n));
      z.push_back(randn(g, n, 3.0));
      eps.push_back(randn(g, n));
    }
    const ControlSequence controls{u};
    const auto terms = terms_for(sys, obs.cov, att.cov, T);
    const auto bias = bias_terms(terms, sys, obs.mean, controls, z);
    const auto ref = oracle::dual_difference(as_oracle(sys), {obs.mean, obs.cov}, {att.mean, att.cov}, u, z, eps);
    for (int t = 1; t <= T; ++t) {
      const Vector ours = exact_separation(terms, obs.mean - att.mean, bias, eps, t);
      const double err = (ours - ref[static_cast<std::size_t>(t - 1)]).cwiseAbs().maxCoeff();
      const double scale = std::max(1.0, ref[static_cast<std::size_t>(t - 1)].cwiseAbs().maxCoeff());
      worst = std::max(worst, err / scale);
    }
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(Exact, KnownInitIsMeasurementIndependent) {
  const auto sys = section4_system();
  const auto terms = terms_for(sys, I2, I2, 10);
  std::mt19937_64 g(8);
  std::vector<Vector> eps;
  for (int t = 0; t < 10; ++t) eps.push_back(randn(g, 2));
  const ControlSequence u{{Vector::Ones(2)}};
  std::vector<Vector> first;
  for (int rep = 0; rep < 5; ++rep) {
    std::vector<Vector> z;
    for (int t = 0; t < 10; ++t) z.push_back(randn(g, 2, 5.0));
    const auto bias = bias_terms(terms, sys, Vector::Zero(2), u, z);
    for (const auto& b : bias) EXPECT_EQ(b.cwiseAbs().maxCoeff(), 0.0);
    const auto run = run_dual_filters(sys, eps, z, {Vector::Zero(2), I2}, {Vector::Zero(2), I2}, u);
    for (int t = 1; t <= 10; ++t) {
      const Vector d = run.steps[static_cast<std::size_t>(t - 1)].m - run.steps[static_cast<std::size_t>(t - 1)].m_tilde;
      if (rep == 0) first.push_back(d);
      EXPECT_LT((d - first[static_cast<std::size_t>(t - 1)]).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(Exact, Linearity) {
  std::mt19937_64 g(44);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 1 + trial % 3;
    LinearSystem sys{corpus::random_matrix(g, n, -1, 1), Matrix::Identity(n, n), corpus::random_matrix(g, n, -1, 1),
                     corpus::random_psd(g, n, 0.1), corpus::random_psd(g, n, 0.1)};
    const int T = 12;
    const auto terms = terms_for(sys, corpus::random_psd(g, n, 0.1), corpus::random_psd(g, n, 0.1), T);
    std::vector<Vector> e1, e2, mix;
    const double a = 0.7, b = -1.3;
    for (int t = 0; t < T; ++t) {
      e1.push_back(randn(g, n));
      e2.push_back(randn(g, n));
      mix.push_back(a * e1.back() + b * e2.back());
    }
    const Vector d1 = randn(g, n), d2 = randn(g, n);
    for (int t = 1; t <= T; ++t) {
      const Vector lhs = exact_separation(terms, a * d1 + b * d2, {}, mix, t);
      const Vector rhs = a * exact_separation(terms, d1, {}, e1, t) + b * exact_separation(terms, d2, {}, e2, t);
      EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-10);
    }
  }
}

TEST(Bias, ZeroMeanOverNoise) {
  // Unknown-init draw: m0 ~ N(1, I), x0 ~ N(m0, Sigma0); B_t averages to zero.
  ScenarioConfig c = corpus::section4_unknown(3, {{1, 2.0}});
  const auto terms = terms_for(c.system, c.init_observer.cov, c.init_attacker.cov, 3);
  const int draws = 100000;
  std::vector<Vector> sum(3, Vector::Zero(2)), sq(3, Vector::Zero(2));
  for (int i = 0; i < draws; ++i) {
    const auto d = draw_trial(c, 77, static_cast<std::uint64_t>(i));
    const auto b = bias_terms(terms, c.system, d.observer.mean, c.controls, d.truth.measurements);
    for (std::size_t t = 0; t < 3; ++t) {
      sum[t] += b[t];
      sq[t] += b[t].cwiseAbs2();
    }
  }
  for (std::size_t t = 0; t < 3; ++t)
    for (Eigen::Index j = 0; j < 2; ++j) {
      const double mean = sum[t](j) / draws;
      const double var = sq[t](j) / draws - mean * mean;
      const double se = std::sqrt(var / draws);
      EXPECT_GT(se, 0.0);
      EXPECT_LT(std::abs(mean), 4.0 * se) << "t=" << t + 1 << " j=" << j;
    }
}

TEST(Expected, MonteCarloMeanMatches) {
  ScenarioConfig c = corpus::section4_unknown(4, {{1, 2.0}});
  const auto terms = terms_for(c.system, c.init_observer.cov, c.init_attacker.cov, 4);
  std::mt19937_64 g(12);
  std::vector<Vector> eps;
  for (int t = 0; t < 4; ++t) eps.push_back(randn(g, 2));
  const auto expect = expected_separation(terms, c.M0, eps);
  const int trials = 10000;
  std::vector<Vector> sum(4, Vector::Zero(2)), sq(4, Vector::Zero(2));
  for (int i = 0; i < trials; ++i) {
    const auto d = draw_trial(c, 5, static_cast<std::uint64_t>(i));
    const auto r = run_dual_filters(c.system, eps, d.truth.measurements, d.observer, d.attacker, c.controls);
    for (std::size_t t = 0; t < 4; ++t) {
      const Vector diff = r.steps[t].m - r.steps[t].m_tilde;
      sum[t] += diff;
      sq[t] += diff.cwiseAbs2();
    }
  }
  for (std::size_t t = 0; t < 4; ++t)
    for (Eigen::Index j = 0; j < 2; ++j) {
      const double mean = sum[t](j) / trials;
      const double se = std::sqrt((sq[t](j) / trials - mean * mean) / trials);
      EXPECT_LT(std::abs(mean - expect[t](j)), 3.0 * se) << "t=" << t + 1;
    }
}

TEST(Terms, RejectsShortSchedules) {
  const auto sys = section4_system();
  EXPECT_THROW(separation_terms(gain_schedule(I2, sys, 2), gain_schedule(I2, sys, 3), sys, 3), DimensionError);
  const auto terms = terms_for(sys, I2, I2, 2);
  EXPECT_THROW((void)terms.influence(3, 1), DimensionError);
}
