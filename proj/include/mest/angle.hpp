#pragma once

#include "mest/core.hpp"

namespace mest {

/// Planar rotation stored as an angle interpreted modulo 2*pi. The stored
/// value is never normalized; boxminus output always lies in [-pi, pi).
class Angle : public ManifoldBase<Angle, 1> {
 public:
  static constexpr double kChartRadius = kPi;

  Angle() : alpha_(0.0) {}
  explicit Angle(double alpha) : alpha_(alpha) {}

  Angle boxplus(const Tangent& delta, double scale = 1.0) const {
    return Angle(alpha_ + scale * delta[0]);
  }

  Tangent boxminus(const Angle& other) const {
    return Tangent{nu_pi(alpha_ - other.alpha_)};
  }

  double radians() const { return alpha_; }

 private:
  double alpha_;
};

}  // namespace mest
