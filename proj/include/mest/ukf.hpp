#pragma once

#include <Eigen/LU>

#include <functional>
#include <optional>
#include <vector>

#include "mest/stats.hpp"

namespace mest {

struct SingularInnovation : Error {
  using Error::Error;
};

template <Manifold S>
struct Belief {
  using Cov = Eigen::Matrix<double, S::kDof, S::kDof>;
  S mean{};
  Cov cov = Cov::Zero();
};

namespace detail {

template <class Mat>
Mat symmetrized(const Mat& m) {
  return 0.5 * (m + m.transpose());
}

}  // namespace detail

/// The 2n+1 points mu, mu [+] sqrt(cov) columns, mu [+] -sqrt(cov) columns.
/// Throws if any column does not fit its component's half-chart; beyond that
/// even propagation through the identity shrinks the covariance.
template <Manifold S>
std::vector<S> generate_sigma_points(const Belief<S>& b) {
  const auto sqrt_cov = cholesky_sqrt(b.cov);
  std::vector<S> points;
  points.reserve(2 * S::kDof + 1);
  points.push_back(b.mean);
  for (int i = 0; i < S::kDof; ++i) {
    const typename S::Tangent col = sqrt_cov.col(i);
    if (!S::tangent_within(col, 0.5)) {
      throw ChartOverflow("sigma-point spread exceeds half chart");
    }
    points.push_back(b.mean.boxplus(col));
  }
  for (int i = 0; i < S::kDof; ++i) {
    points.push_back(b.mean.boxplus(sqrt_cov.col(i), -1.0));
  }
  return points;
}

/// Mean of a sigma-point set by fixed-point iteration started at point 0.
template <Manifold M>
M mean_of_sigma_points(const std::vector<M>& points, double tol = 1e-9,
                       int max_iter = 100) {
  WeightedPoints<M> set;
  set.points = points;
  set.weights.assign(points.size(), 1.0 / static_cast<double>(points.size()));
  return mean_of_points(set, points.front(), tol, max_iter).mean;
}

namespace detail {

/// 1/2 sum_i (p_i [-] mu)(p_i [-] mu)^T over a sigma-point set.
template <Manifold M>
Eigen::Matrix<double, M::kDof, M::kDof> sigma_covariance(
    const std::vector<M>& points, const M& mu) {
  Eigen::Matrix<double, M::kDof, M::kDof> cov =
      Eigen::Matrix<double, M::kDof, M::kDof>::Zero();
  for (const M& p : points) {
    const typename M::Tangent r = p.boxminus(mu);
    cov += r * r.transpose();
  }
  return 0.5 * cov;
}

}  // namespace detail

/// Prediction step: propagate sigma points through the process model,
/// recover mean and covariance, add process noise.
template <Manifold S, class Process>
Belief<S> ukf_predict(const Belief<S>& b, Process&& g,
                      const typename Belief<S>::Cov& process_noise) {
  std::vector<S> points = generate_sigma_points(b);
  for (S& p : points) p = g(p);
  Belief<S> out;
  out.mean = mean_of_sigma_points(points);
  out.cov = detail::symmetrized(
      (detail::sigma_covariance(points, out.mean) + process_noise).eval());
  return out;
}

/// Correction step, including the extra sigma-point propagation that
/// re-expresses the posterior covariance about the posterior mean: updating
/// the mean while keeping a covariance centered on the old mean would be
/// inconsistent, since mu [+] N(delta, Cov) != (mu [+] delta) [+] N(0, Cov).
template <Manifold S, Manifold M, class Measure>
Belief<S> ukf_update(const Belief<S>& b, const M& z, Measure&& h,
                     const Eigen::Matrix<double, M::kDof, M::kDof>& meas_noise,
                     std::vector<S>* recentered_points = nullptr) {
  using XCov = Eigen::Matrix<double, S::kDof, M::kDof>;
  using MCov = Eigen::Matrix<double, M::kDof, M::kDof>;

  const std::vector<S> points = generate_sigma_points(b);
  std::vector<M> meas;
  meas.reserve(points.size());
  for (const S& p : points) meas.push_back(h(p));

  const M z_hat = mean_of_sigma_points(meas);
  const MCov innovation_cov =
      detail::sigma_covariance(meas, z_hat) + meas_noise;

  XCov cross_cov = XCov::Zero();
  for (std::size_t i = 0; i < points.size(); ++i) {
    cross_cov += points[i].boxminus(b.mean) *
                 meas[i].boxminus(z_hat).transpose();
  }
  cross_cov *= 0.5;

  Eigen::FullPivLU<MCov> lu(innovation_cov);
  if (!lu.isInvertible()) {
    throw SingularInnovation("singular innovation covariance");
  }
  const XCov gain = lu.solve(cross_cov.transpose()).transpose();

  const typename S::Tangent delta = gain * z.boxminus(z_hat);
  const typename Belief<S>::Cov cov_about_old_mean = detail::symmetrized(
      (b.cov - gain * innovation_cov * gain.transpose()).eval());

  // Re-center: propagate mu [+] (delta +/- sqrt(cov) columns). The
  // factorization retries with 1e-12 jitter if rounding left the difference
  // indefinite.
  const auto sqrt_cov = cholesky_sqrt(cov_about_old_mean);
  std::vector<S> recentered;
  recentered.reserve(points.size());
  recentered.push_back(b.mean.boxplus(delta));
  for (int i = 0; i < S::kDof; ++i) {
    recentered.push_back(b.mean.boxplus(delta + sqrt_cov.col(i)));
  }
  for (int i = 0; i < S::kDof; ++i) {
    recentered.push_back(b.mean.boxplus(delta - sqrt_cov.col(i)));
  }

  Belief<S> out;
  out.mean = mean_of_sigma_points(recentered);
  out.cov =
      detail::symmetrized(detail::sigma_covariance(recentered, out.mean).eval());
  if (recentered_points) *recentered_points = std::move(recentered);
  return out;
}

/// Stateful wrapper. With reuse_sigma_points enabled, the sigma points
/// produced by an update's re-centering pass are fed to the next predict
/// instead of being regenerated from the belief.
template <Manifold S>
class Ukf {
 public:
  explicit Ukf(Belief<S> initial, bool reuse_sigma_points = false)
      : belief_(std::move(initial)), reuse_(reuse_sigma_points) {}

  const Belief<S>& belief() const { return belief_; }

  template <class Process>
  void predict(Process&& g, const typename Belief<S>::Cov& process_noise) {
    std::vector<S> points;
    if (reuse_ && cache_) {
      points = std::move(*cache_);
      cache_.reset();
    } else {
      points = generate_sigma_points(belief_);
    }
    for (S& p : points) p = g(p);
    belief_.mean = mean_of_sigma_points(points);
    belief_.cov = detail::symmetrized(
        (detail::sigma_covariance(points, belief_.mean) + process_noise)
            .eval());
  }

  template <Manifold M, class Measure>
  void update(const M& z, Measure&& h,
              const Eigen::Matrix<double, M::kDof, M::kDof>& meas_noise) {
    std::vector<S> recentered;
    belief_ = ukf_update(belief_, z, h, meas_noise,
                         reuse_ ? &recentered : nullptr);
    if (reuse_) cache_ = std::move(recentered);
  }

 private:
  Belief<S> belief_;
  bool reuse_ = false;
  std::optional<std::vector<S>> cache_;
};

}  // namespace mest
