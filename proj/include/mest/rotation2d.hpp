#pragma once

#include "mest/angle.hpp"
#include "mest/core.hpp"
#include "mest/sphere.hpp"

namespace mest {

inline Eigen::Matrix2d rot2(double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  Eigen::Matrix2d m;
  m << c, -s, s, c;
  return m;
}

/// 2D orientation as an orthonormal 2x2 matrix.
class SO2Mat : public ManifoldBase<SO2Mat, 1> {
 public:
  static constexpr double kChartRadius = kPi;

  SO2Mat() : m_(Eigen::Matrix2d::Identity()) {}
  explicit SO2Mat(const Eigen::Matrix2d& m) : m_(m) { repair(); }

  static SO2Mat from_angle(double angle) { return SO2Mat(rot2(angle)); }

  SO2Mat boxplus(const Tangent& delta, double scale = 1.0) const {
    return SO2Mat(m_ * rot2(scale * delta[0]));
  }

  Tangent boxminus(const SO2Mat& other) const {
    const Eigen::Matrix2d rel = other.m_.transpose() * m_;
    return Tangent{std::atan2(rel(1, 0), rel(0, 0))};
  }

  double angle() const { return std::atan2(m_(1, 0), m_(0, 0)); }
  const Eigen::Matrix2d& matrix() const { return m_; }

 private:
  void repair() {
    const Eigen::Matrix2d gram = m_.transpose() * m_;
    if ((gram - Eigen::Matrix2d::Identity()).norm() > 1e-12) {
      m_ = rot2(std::atan2(m_(1, 0), m_(0, 0)));
    }
  }

  Eigen::Matrix2d m_;
};

/// Isomorphisms between the three 2D-rotation representations.
inline SO2Mat to_so2(const Angle& a) { return SO2Mat::from_angle(a.radians()); }

inline SO2Mat to_so2(const UnitComplex& u) {
  Eigen::Matrix2d m;
  m << u.value()[0], -u.value()[1], u.value()[1], u.value()[0];
  return SO2Mat(m);
}

inline UnitComplex to_unit_complex(const Angle& a) {
  return UnitComplex(Eigen::Vector2d(std::cos(a.radians()), std::sin(a.radians())));
}

}  // namespace mest
