#pragma once

#include <Eigen/Geometry>

#include "mest/core.hpp"
#include "mest/quaternion.hpp"

namespace mest {

inline Eigen::Matrix3d hat3(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

inline Eigen::Vector3d vee3(const Eigen::Matrix3d& m) {
  return {m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1)};
}

/// Rodrigues formula: rotation by |delta| around axis delta.
inline Eigen::Matrix3d exp_so3(const Eigen::Vector3d& delta) {
  const double theta = delta.norm();
  const Eigen::Matrix3d k = hat3(delta);
  return Eigen::Matrix3d::Identity() + sinc(theta) * k +
         one_minus_cos_over_sq(theta) * k * k;
}

/// Inverse of exp_so3, |result| <= pi. Near theta = pi the off-diagonal
/// formula divides by sin(theta); that region is routed through the
/// quaternion logarithm instead. At theta == pi the sign is fixed by making
/// the first nonzero axis component positive.
inline Eigen::Vector3d log_so3(const Eigen::Matrix3d& m) {
  const double arg = std::clamp((m.trace() - 1.0) / 2.0, -1.0, 1.0);
  const double theta = std::acos(arg);
  if (theta < 1e-6) {
    return 0.5 * vee3(m);
  }
  if (theta > kPi - 1e-2) {
    const Eigen::Quaterniond q(m);
    Eigen::Vector3d r = 2.0 * olog_quat(q);
    if (std::abs(q.w()) < 1e-9) {
      for (int i = 0; i < 3; ++i) {
        if (std::abs(r[i]) > 1e-9) {
          if (r[i] < 0.0) r = -r;
          break;
        }
      }
    }
    return r;
  }
  return (theta / (2.0 * std::sin(theta))) * vee3(m);
}

/// 3D orientation as an orthonormal matrix with determinant 1.
class SO3Mat : public ManifoldBase<SO3Mat, 3> {
 public:
  static constexpr double kChartRadius = kPi;

  SO3Mat() : m_(Eigen::Matrix3d::Identity()) {}
  explicit SO3Mat(const Eigen::Matrix3d& m) : m_(m) { repair(); }

  SO3Mat boxplus(const Tangent& delta, double scale = 1.0) const {
    return SO3Mat(m_ * exp_so3(scale * delta));
  }

  Tangent boxminus(const SO3Mat& other) const {
    return log_so3(other.m_.transpose() * m_);
  }

  const Eigen::Matrix3d& matrix() const { return m_; }
  Eigen::Vector3d rotate(const Eigen::Vector3d& v) const { return m_ * v; }
  SO3Mat inverse() const { return SO3Mat(m_.transpose()); }
  SO3Mat operator*(const SO3Mat& rhs) const { return SO3Mat(m_ * rhs.m_); }

 private:
  // Re-orthonormalize when drift exceeds 1e-12 (long boxplus chains).
  void repair() {
    const Eigen::Matrix3d gram = m_.transpose() * m_;
    if ((gram - Eigen::Matrix3d::Identity()).norm() > 1e-12) {
      const Eigen::Quaterniond q(m_);
      m_ = q.normalized().toRotationMatrix();
    }
  }

  Eigen::Matrix3d m_;
};

/// The covering homomorphism from unit quaternions onto rotation matrices;
/// commutes with boxplus on both sides.
inline SO3Mat to_rotation_matrix(const QuatRot& q) { return SO3Mat(q.matrix()); }

}  // namespace mest
