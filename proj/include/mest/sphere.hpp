#pragma once

#include "mest/core.hpp"

namespace mest {

namespace detail {

/// Sphere exponential into R^{n+1}: (cos|d|; sinc|d| * d).
template <int N>
Eigen::Matrix<double, N + 1, 1> exp_sphere(const Eigen::Matrix<double, N, 1>& d) {
  Eigen::Matrix<double, N + 1, 1> out;
  const double theta = d.norm();
  out[0] = std::cos(theta);
  out.template tail<N>() = sinc(theta) * d;
  return out;
}

/// Sphere logarithm, |result| <= pi. The antipode of e1 maps to pi * e1.
template <int N>
Eigen::Matrix<double, N, 1> log_sphere(const Eigen::Matrix<double, N + 1, 1>& x) {
  const double w = x[0];
  const Eigen::Matrix<double, N, 1> v = x.template tail<N>();
  const double nv = v.norm();
  if (nv == 0.0) {
    Eigen::Matrix<double, N, 1> out = Eigen::Matrix<double, N, 1>::Zero();
    out[0] = std::atan2(0.0, w);  // 0 at e1, pi at the antipode
    return out;
  }
  return (std::atan2(nv, w) / nv) * v;
}

/// Sign-invariant variant used by the projective plane, |result| <= pi/2.
template <int N>
Eigen::Matrix<double, N, 1> olog_sphere(const Eigen::Matrix<double, N + 1, 1>& x) {
  const double w = x[0];
  Eigen::Matrix<double, N, 1> v = x.template tail<N>();
  const double nv = v.norm();
  if (nv == 0.0) return Eigen::Matrix<double, N, 1>::Zero();
  if (w == 0.0) return (kPi / 2.0 / nv) * v;
  if (nv < 1e-12) return v / w;
  return (std::atan(nv / w) / nv) * v;
}

}  // namespace detail

/// Rotation taking e1 to x: a Householder reflection times a reflection of
/// the second coordinate, hence determinant +1. Identity for x = e1.
template <int Dim>
Eigen::Matrix<double, Dim, Dim> householder_rx(
    const Eigen::Matrix<double, Dim, 1>& x) {
  using Mat = Eigen::Matrix<double, Dim, Dim>;
  Eigen::Matrix<double, Dim, 1> v = x;
  v[0] -= 1.0;
  const double vtv = v.squaredNorm();
  if (vtv == 0.0) return Mat::Identity();
  Mat r = Mat::Identity() - (2.0 / vtv) * v * v.transpose();
  r.col(1) = -r.col(1);
  return r;
}

/// Directions in R^{N+1} as unit vectors: the sphere S^N.
/// The chart is only smooth in the perturbation, not in the base point
/// (hairy-ball theorem), which the boxplus axioms do not require.
template <int N>
class UnitVector : public ManifoldBase<UnitVector<N>, N> {
 public:
  static constexpr double kChartRadius = kPi;
  using Tangent = typename ManifoldBase<UnitVector<N>, N>::Tangent;
  using Storage = Eigen::Matrix<double, N + 1, 1>;

  UnitVector() : x_(Storage::Unit(0)) {}
  explicit UnitVector(const Storage& x) : x_(x.normalized()) {}

  UnitVector boxplus(const Tangent& delta, double scale = 1.0) const {
    const Storage y = householder_rx<N + 1>(x_) *
                      detail::exp_sphere<N>((scale * delta).eval());
    return UnitVector(y);
  }

  Tangent boxminus(const UnitVector& other) const {
    const Storage rel = householder_rx<N + 1>(other.x_).transpose() * x_;
    return detail::log_sphere<N>(rel);
  }

  const Storage& value() const { return x_; }

 private:
  Storage x_;
};

using UnitComplex = UnitVector<1>;
using UnitSphere2 = UnitVector<2>;

/// The projective plane: unit 3-vectors with x and -x identified. Uses the
/// sign-invariant logarithm, so the chart radius shrinks to pi/2.
class ProjPlane : public ManifoldBase<ProjPlane, 2> {
 public:
  static constexpr double kChartRadius = kPi / 2.0;

  ProjPlane() : x_(Eigen::Vector3d::UnitX()) {}
  explicit ProjPlane(const Eigen::Vector3d& x) : x_(x.normalized()) {
    canonicalize();
  }

  ProjPlane boxplus(const Tangent& delta, double scale = 1.0) const {
    const Eigen::Vector3d y =
        householder_rx<3>(x_) * detail::exp_sphere<2>((scale * delta).eval());
    return ProjPlane(y);
  }

  Tangent boxminus(const ProjPlane& other) const {
    const Eigen::Vector3d rel = householder_rx<3>(other.x_).transpose() * x_;
    return detail::olog_sphere<2>(rel);
  }

  const Eigen::Vector3d& representative() const { return x_; }

 private:
  // Deterministic representative: first nonzero component positive.
  void canonicalize() {
    for (int i = 0; i < 3; ++i) {
      if (x_[i] != 0.0) {
        if (x_[i] < 0.0) x_ = -x_;
        return;
      }
    }
  }

  Eigen::Vector3d x_;
};

}  // namespace mest
