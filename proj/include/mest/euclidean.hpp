#pragma once

#include "mest/core.hpp"

namespace mest {

/// R^n with plain vector addition and subtraction.
template <int N>
class Vec : public ManifoldBase<Vec<N>, N> {
 public:
  static constexpr double kChartRadius = kInf;
  using Tangent = typename ManifoldBase<Vec<N>, N>::Tangent;
  using Storage = Eigen::Matrix<double, N, 1>;

  Vec() : value_(Storage::Zero()) {}
  explicit Vec(const Storage& v) : value_(v) {}
  explicit Vec(double v) requires(N == 1) { value_[0] = v; }

  double operator[](int i) const { return value_[i]; }

  Vec boxplus(const Tangent& delta, double scale = 1.0) const {
    return Vec(value_ + scale * delta);
  }

  Tangent boxminus(const Vec& other) const { return value_ - other.value_; }

  const Storage& value() const { return value_; }
  Storage& value() { return value_; }

 private:
  Storage value_;
};

using Vec1 = Vec<1>;
using Vec2 = Vec<2>;
using Vec3 = Vec<3>;

}  // namespace mest
