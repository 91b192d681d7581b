#include <gtest/gtest.h>

#include <random>

#include "corpus.hpp"
#include "kfspoof/kalman.hpp"
#include "oracles.hpp"

using namespace kfspoof;

namespace {

const Matrix I2 = Matrix::Identity(2, 2);

LinearSystem section4_system() { return {I2, I2, I2, 0.5 * I2, 0.5 * I2}; }

LinearSystem scalar(double F, double B, double H, double R, double Q) {
  auto m = [](double v) { return Matrix::Constant(1, 1, v); };
  return {m(F), m(B), m(H), m(R), m(Q)};
}

}  // namespace

TEST(Predict, SectionFourStep) {
  const auto b = predict({Vector::Zero(2), I2}, section4_system(), Vector::Ones(2));
  EXPECT_TRUE(b.mean.isApprox(Vector::Ones(2)));
  EXPECT_TRUE(b.cov.isApprox(1.5 * I2));
}

TEST(Predict, IdentityWithoutNoiseOrControl) {
  auto sys = section4_system();
  sys.R.setZero();
  const GaussianBelief in{Vector{{0.3, -2.0}}, Matrix{{2.0, 0.1}, {0.1, 1.0}}};
  const auto out = predict(in, sys, Vector::Zero(2));
  EXPECT_TRUE(out == in);
}

TEST(Predict, ScalarHandValue) {
  const auto out = predict({Vector::Constant(1, 2.0), Matrix::Constant(1, 1, 1.0)}, scalar(0.5, 1, 1, 0.1, 1),
                           Vector::Zero(1));
  EXPECT_NEAR(out.mean(0), 1.0, 1e-15);
  EXPECT_NEAR(out.cov(0, 0), 0.35, 1e-15);
}

TEST(Predict, DimensionMismatch) {
  EXPECT_THROW(predict({Vector::Zero(2), I2}, section4_system(), Vector::Ones(3)), DimensionError);
}

TEST(Update, SectionFourStep) {
  const auto sys = section4_system();
  const GaussianBelief prior{Vector::Ones(2), 1.5 * I2};
  EXPECT_TRUE(kalman_gain(prior.cov, sys).isApprox(0.75 * I2));
  const auto post = update(prior, sys, Vector::Ones(2));
  EXPECT_TRUE(post.mean.isApprox(Vector::Ones(2)));
  EXPECT_NEAR((post.cov - 0.375 * I2).cwiseAbs().maxCoeff(), 0.0, 1e-15);
}

TEST(Update, HugeMeasurementNoiseIgnoresMeasurement) {
  auto sys = section4_system();
  sys.Q = 1e12 * I2;
  const GaussianBelief prior{Vector{{1.0, 2.0}}, I2};
  const auto post = update(prior, sys, Vector{{100.0, -100.0}});
  EXPECT_LT((post.mean - prior.mean).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Update, ZeroInnovationKeepsMean) {
  auto sys = section4_system();
  sys.H = Matrix{{1.0, 0.5}, {0.0, 2.0}};
  const GaussianBelief prior{Vector{{0.7, -1.1}}, Matrix{{2.0, 0.3}, {0.3, 1.0}}};
  const auto post = update(prior, sys, sys.H * prior.mean);
  EXPECT_LT((post.mean - prior.mean).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Update, SingularInnovation) {
  auto sys = section4_system();
  sys.Q.setZero();
  EXPECT_THROW(update({Vector::Zero(2), Matrix::Zero(2, 2)}, sys, Vector::Zero(2)), SingularMatrixError);
}

TEST(Schedule, FirstGainsAndLimit) {
  const auto sys = scalar(1, 1, 1, 0.5, 0.5);
  const auto s = gain_schedule(Matrix::Constant(1, 1, 1.0), sys, 200);
  EXPECT_NEAR(s.gain(1)(0, 0), 0.75, 1e-15);
  const double fixed = (0.5 + std::sqrt(0.25 + 1.0)) / 2.0;  // p^2 = 0.5 p + 0.25
  const double k_inf = fixed / (fixed + 0.5);
  EXPECT_NEAR(k_inf, 0.6180, 1e-4);
  EXPECT_NEAR(s.gain(200)(0, 0), k_inf, 1e-12);
  EXPECT_NEAR(s.gain(200)(0, 0), 0.6180, 1e-4);
}

TEST(Schedule, SectionFourConvergenceRate) {
  const auto s = gain_schedule(I2, section4_system(), 120);
  for (int t = 60; t < 120; ++t) EXPECT_LT((s.gain(t) - s.gain(t + 1)).cwiseAbs().maxCoeff(), 1e-9) << t;
}

TEST(Schedule, AttackerPriorDiffersThenConverges) {
  const auto sys = section4_system();
  const auto a = gain_schedule(I2, sys, 100);
  const auto b = gain_schedule(1.5 * I2, sys, 100);
  EXPECT_NEAR(a.gain(1)(0, 0), 0.75, 1e-15);
  EXPECT_NEAR(b.gain(1)(0, 0), 0.8, 1e-15);
  EXPECT_LT((a.gain(100) - b.gain(100)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Schedule, NoUncertaintyNoGain) {
  auto sys = section4_system();
  sys.R.setZero();
  const auto s = gain_schedule(Matrix::Zero(2, 2), sys, 10);
  for (int t = 1; t <= 10; ++t) {
    EXPECT_EQ(s.gain(t).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(s.posterior(t).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Schedule, PosteriorBelowPriorAndPsd) {
  std::mt19937_64 g(5);
  for (int trial = 0; trial < 25; ++trial) {
    const Eigen::Index n = 1 + trial % 3;
    LinearSystem sys{corpus::random_matrix(g, n, -1.2, 1.2), Matrix::Identity(n, n),
                     corpus::random_matrix(g, n, -1.0, 1.0), corpus::random_psd(g, n, 0.01),
                     corpus::random_psd(g, n, 0.05)};
    const auto s = gain_schedule(corpus::random_psd(g, n, 0.0), sys, 30);
    for (int t = 1; t <= 30; ++t) {
      EXPECT_TRUE(is_symmetric_psd(s.posterior(t)));
      EXPECT_TRUE(is_symmetric_psd(s.prior(t)));
      const Matrix gap = s.prior(t) - s.posterior(t);
      EXPECT_GE(Eigen::SelfAdjointEigenSolver<Matrix>(0.5 * (gap + gap.transpose())).eigenvalues().minCoeff(),
                -1e-9 * std::max(1.0, s.prior(t).norm()));
    }
  }
}

TEST(Schedule, MatchesFilterCovariancesExactly) {
  const auto sys = section4_system();
  const auto s = gain_schedule(I2, sys, 25);
  std::mt19937_64 g(9);
  std::normal_distribution<double> nd;
  GaussianBelief b{Vector::Zero(2), I2};
  for (int t = 1; t <= 25; ++t) {
    const Vector u{{nd(g), nd(g)}};
    const auto prior = predict(b, sys, u);
    EXPECT_TRUE(prior.cov == s.prior(t));
    EXPECT_TRUE(kalman_gain(prior.cov, sys) == s.gain(t));
    b = update(prior, sys, Vector{{nd(g), nd(g)}});
    EXPECT_TRUE(b.cov == s.posterior(t));
  }
}

TEST(Filter, PredictUpdateMatchesOneShotStep) {
  std::mt19937_64 g(17);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index n = 1 + trial % 3;
    LinearSystem sys{corpus::random_matrix(g, n, -1.0, 1.0), corpus::random_matrix(g, n, -1.0, 1.0),
                     corpus::random_matrix(g, n, -1.0, 1.0), corpus::random_psd(g, n, 0.01),
                     corpus::random_psd(g, n, 0.1)};
    Vector m(n), u(n), z(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      m(i) = nd(g);
      u(i) = nd(g);
      z(i) = nd(g);
    }
    const Matrix P = corpus::random_psd(g, n, 0.01);
    const auto ours = update(predict({m, P}, sys, u), sys, z);
    oracle::Filter ref{m, P};
    ref.step({sys.F, sys.B, sys.H, sys.R, sys.Q}, u, z);
    EXPECT_LT((ours.mean - ref.m).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((ours.cov - ref.P).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Schedule, RejectsBadInput) {
  EXPECT_THROW(gain_schedule(I2, section4_system(), 0), DimensionError);
  EXPECT_THROW(gain_schedule(Matrix::Identity(3, 3), section4_system(), 3), DimensionError);
}
