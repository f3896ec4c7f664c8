#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <vector>

#include "mest/core.hpp"
#include "mest/random.hpp"

namespace mest {

struct ChartOverflow : Error {
  using Error::Error;
};

/// Lower-triangular L with L L^T = cov. A non-positive-definite input gets
/// one retry with 1e-12 jitter on the diagonal; an exactly zero matrix
/// factors to zero.
template <class Mat>
Mat cholesky_sqrt(const Mat& cov) {
  if (cov.isZero(0.0)) return Mat::Zero(cov.rows(), cov.cols());
  Eigen::LLT<Mat> llt(cov);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Mat jittered = cov;
  jittered.diagonal().array() += 1e-12;
  Eigen::LLT<Mat> retry(jittered);
  if (retry.info() == Eigen::Success) return retry.matrixL();
  throw Error("covariance not PD");
}

/// Gaussian on a manifold: mean [+] N(0, cov).
template <Manifold M>
struct Gaussian {
  using Cov = Eigen::Matrix<double, M::kDof, M::kDof>;
  M mean{};
  Cov cov = Cov::Zero();
};

/// Draws mean [+] L z with z standard normal, rejecting draws outside the
/// chart (the cut-off construction that keeps the parametrization unique).
template <Manifold M>
M sample(const Gaussian<M>& g, Rng& rng) {
  const auto sqrt_cov = cholesky_sqrt(g.cov);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    typename M::Tangent z;
    for (int i = 0; i < M::kDof; ++i) z[i] = n(rng);
    const typename M::Tangent step = sqrt_cov * z;
    if (M::tangent_within(step, 1.0)) return g.mean.boxplus(step);
  }
  throw ChartOverflow("distribution exceeds chart");
}

template <Manifold M>
struct WeightedPoints {
  std::vector<M> points;
  std::vector<double> weights;  // must sum to 1
};

template <Manifold M>
struct MeanResult {
  M mean{};
  int iterations = 0;
};

template <Manifold M>
struct MeanNotConverged : NotConverged {
  MeanNotConverged(M last, double res, int iters)
      : NotConverged("mean iteration: residual " + std::to_string(res) +
                     " after " + std::to_string(iters) + " iterations"),
        last_iterate(std::move(last)),
        residual(res) {}
  M last_iterate;
  double residual;
};

/// Iterative weighted mean: mu <- mu [+] sum_i w_i (p_i [-] mu) until the
/// summed error vector drops below tol. Requires the points to lie within
/// the chart around the initial guess; diverges otherwise.
template <Manifold M>
MeanResult<M> mean_of_points(const WeightedPoints<M>& set, const M& mu0,
                             double tol = 1e-9, int max_iter = 100) {
  if (set.points.size() != set.weights.size()) {
    throw ContractViolation("points/weights size mismatch");
  }
  M mu = mu0;
  double residual = 0.0;
  for (int it = 0; it <= max_iter; ++it) {
    typename M::Tangent update = M::Tangent::Zero();
    for (std::size_t i = 0; i < set.points.size(); ++i) {
      update += set.weights[i] * set.points[i].boxminus(mu);
    }
    residual = update.norm();
    if (residual <= tol) return {mu, it};
    mu = mu.boxplus(update);
  }
  throw MeanNotConverged<M>(mu, residual, max_iter);
}

/// Weighted covariance about a given mean: sum_i w_i (p_i [-] mu)(p_i [-] mu)^T.
template <Manifold M>
Eigen::Matrix<double, M::kDof, M::kDof> covariance_of_points(
    const WeightedPoints<M>& set, const M& mean) {
  Eigen::Matrix<double, M::kDof, M::kDof> cov =
      Eigen::Matrix<double, M::kDof, M::kDof>::Zero();
  for (std::size_t i = 0; i < set.points.size(); ++i) {
    const typename M::Tangent r = set.points[i].boxminus(mean);
    cov += set.weights[i] * r * r.transpose();
  }
  return cov;
}

}  // namespace mest
