#pragma once

#include <Eigen/Geometry>

#include "mest/core.hpp"

namespace mest {

/// Quaternion exponential: exp(v) = (cos|v|; sinc|v| * v).
inline Eigen::Quaterniond exp_quat(const Eigen::Vector3d& v) {
  const double theta = v.norm();
  const Eigen::Vector3d im = sinc(theta) * v;
  return Eigen::Quaterniond(std::cos(theta), im.x(), im.y(), im.z());
}

/// Sign-invariant quaternion logarithm: olog(q) == olog(-q), |olog(q)| <= pi/2.
/// The w = 0 case fixes the + branch.
inline Eigen::Vector3d olog_quat(const Eigen::Quaterniond& q) {
  const Eigen::Vector3d v = q.vec();
  const double w = q.w();
  const double nv = v.norm();
  if (nv == 0.0) return Eigen::Vector3d::Zero();
  if (w == 0.0) return (kPi / 2.0 / nv) * v;
  if (nv < 1e-12) return v / w;
  return (std::atan(nv / w) / nv) * v;
}

/// 3D orientation as a unit quaternion, q and -q identified.
/// boxplus multiplies exp(delta/2) on the right; the factor 2 makes the
/// induced metric the rotation angle and the manifold isomorphic to the
/// rotation-matrix one.
class QuatRot : public ManifoldBase<QuatRot, 3> {
 public:
  static constexpr double kChartRadius = kPi;

  QuatRot() : q_(Eigen::Quaterniond::Identity()) {}
  explicit QuatRot(const Eigen::Quaterniond& q) : q_(q) { canonicalize(); }
  QuatRot(double w, double x, double y, double z) : q_(w, x, y, z) {
    canonicalize();
  }

  QuatRot boxplus(const Tangent& delta, double scale = 1.0) const {
    const Eigen::Vector3d half = 0.5 * scale * delta;
    return QuatRot(q_ * exp_quat(half));
  }

  Tangent boxminus(const QuatRot& other) const {
    return 2.0 * olog_quat(other.q_.conjugate() * q_);
  }

  const Eigen::Quaterniond& quaternion() const { return q_; }
  Eigen::Matrix3d matrix() const { return q_.toRotationMatrix(); }
  Eigen::Vector3d rotate(const Eigen::Vector3d& v) const { return q_ * v; }
  QuatRot inverse() const { return QuatRot(q_.conjugate()); }
  QuatRot operator*(const QuatRot& rhs) const { return QuatRot(q_ * rhs.q_); }

  static QuatRot from_matrix(const Eigen::Matrix3d& m) {
    return QuatRot(Eigen::Quaterniond(m));
  }

 private:
  // Unit norm, w >= 0; at w == 0 the first nonzero imaginary part is
  // made positive so equal orientations compare representative-equal.
  void canonicalize() {
    q_.normalize();
    double lead = q_.w();
    if (lead == 0.0) {
      for (int i = 0; i < 3 && lead == 0.0; ++i) lead = q_.vec()[i];
    }
    if (lead < 0.0) q_.coeffs() = -q_.coeffs();
  }

  Eigen::Quaterniond q_;
};

}  // namespace mest
