#pragma once

#include <vector>

#include "kfspoof/model.hpp"

namespace kfspoof {

/// Measurement-independent gains and covariances K_t, Sigma_{t|t}, Sigma_{t|t-1} for t = 1..T.
/// Element t-1 holds step t.
struct GainSchedule {
  std::vector<Matrix> gains;
  std::vector<Matrix> covs_post;
  std::vector<Matrix> covs_prior;

  [[nodiscard]] int length() const { return static_cast<int>(gains.size()); }
  [[nodiscard]] const Matrix& gain(int t) const { return gains.at(static_cast<std::size_t>(t - 1)); }
  [[nodiscard]] const Matrix& posterior(int t) const { return covs_post.at(static_cast<std::size_t>(t - 1)); }
  [[nodiscard]] const Matrix& prior(int t) const { return covs_prior.at(static_cast<std::size_t>(t - 1)); }
};

namespace detail {

inline void require_square(const Matrix& m, Eigen::Index n, const char* what) {
  if (m.rows() != n || m.cols() != n)
    throw DimensionError(std::string(what) + " must be " + std::to_string(n) + "x" + std::to_string(n));
}

inline void require_length(const Vector& v, Eigen::Index n, const char* what) {
  if (v.size() != n) throw DimensionError(std::string(what) + " must have length " + std::to_string(n));
}

inline void check_system(const LinearSystem& s) {
  const auto n = s.dim();
  if (n < 1) throw DimensionError("system dimension must be >= 1");
  require_square(s.F, n, "F");
  require_square(s.B, n, "B");
  require_square(s.H, n, "H");
  require_square(s.R, n, "R");
  require_square(s.Q, n, "Q");
}

inline Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

}  // namespace detail

/// K = P H^T (H P H^T + Q)^{-1}, via an LDL^T solve on the innovation covariance.
/// Throws SingularMatrixError when the smallest pivot falls below 1e-12 of the largest.
inline Matrix kalman_gain(const Matrix& prior_cov, const LinearSystem& sys) {
  const Matrix innovation = detail::symmetrized(sys.H * prior_cov * sys.H.transpose() + sys.Q);
  Eigen::LDLT<Matrix> ldlt(innovation);
  const Vector pivots = ldlt.vectorD().cwiseAbs();
  const double largest = pivots.maxCoeff();
  if (ldlt.info() != Eigen::Success || !(largest > 0.0) || pivots.minCoeff() < 1e-12 * largest)
    throw SingularMatrixError("innovation covariance H*Sigma*H' + Q is singular");
  // S is symmetric, so K^T = S^{-1} H P.
  return ldlt.solve(sys.H * prior_cov).transpose();
}

inline GaussianBelief predict(const GaussianBelief& belief, const LinearSystem& sys, const Vector& u) {
  detail::check_system(sys);
  const auto n = sys.dim();
  detail::require_length(belief.mean, n, "belief mean");
  detail::require_square(belief.cov, n, "belief covariance");
  detail::require_length(u, n, "control");
  return {sys.F * belief.mean + sys.B * u,
          detail::symmetrized(sys.F * belief.cov * sys.F.transpose() + sys.R)};
}

/// Measurement update of a predicted belief.
inline GaussianBelief update(const GaussianBelief& prior, const LinearSystem& sys, const Vector& z) {
  detail::check_system(sys);
  const auto n = sys.dim();
  detail::require_length(prior.mean, n, "belief mean");
  detail::require_square(prior.cov, n, "belief covariance");
  detail::require_length(z, n, "measurement");
  const Matrix K = kalman_gain(prior.cov, sys);
  const Matrix I = Matrix::Identity(n, n);
  return {prior.mean + K * (z - sys.H * prior.mean), detail::symmetrized((I - K * sys.H) * prior.cov)};
}

/// Riccati recursion from Sigma_0. Needs no controls or measurements.
inline GainSchedule gain_schedule(const Matrix& sigma0, const LinearSystem& sys, int steps) {
  detail::check_system(sys);
  const auto n = sys.dim();
  detail::require_square(sigma0, n, "Sigma0");
  if (steps < 1) throw DimensionError("gain schedule needs at least one step");

  GainSchedule out;
  out.gains.reserve(static_cast<std::size_t>(steps));
  out.covs_post.reserve(static_cast<std::size_t>(steps));
  out.covs_prior.reserve(static_cast<std::size_t>(steps));

  const Matrix I = Matrix::Identity(n, n);
  Matrix post = sigma0;
  for (int t = 1; t <= steps; ++t) {
    Matrix prior = detail::symmetrized(sys.F * post * sys.F.transpose() + sys.R);
    Matrix K = kalman_gain(prior, sys);
    post = detail::symmetrized((I - K * sys.H) * prior);
    out.covs_prior.push_back(std::move(prior));
    out.gains.push_back(std::move(K));
    out.covs_post.push_back(post);
  }
  return out;
}

}  // namespace kfspoof
