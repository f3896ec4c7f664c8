#pragma once

#include <Eigen/Core>

#include <cmath>
#include <concepts>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace mest {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Precondition / dimension-mismatch style failures.
struct ContractViolation : Error {
  using Error::Error;
};

/// Iterative procedure stopped without reaching its tolerance.
struct NotConverged : Error {
  using Error::Error;
};

/// Normalizes an angle to [-pi, pi):  nu(d) = d - 2*pi*floor((d + pi)/(2*pi)).
inline double nu_pi(double delta) {
  return delta - 2.0 * kPi * std::floor((delta + kPi) / (2.0 * kPi));
}

/// sin(t)/t, series-evaluated near zero.
inline double sinc(double t) {
  if (std::abs(t) < 1e-4) {
    const double t2 = t * t;
    return 1.0 - t2 / 6.0 + t2 * t2 / 120.0;
  }
  return std::sin(t) / t;
}

/// (1 - cos(t))/t^2, series-evaluated near zero.
inline double one_minus_cos_over_sq(double t) {
  if (std::abs(t) < 1e-4) {
    const double t2 = t * t;
    return 0.5 - t2 / 24.0 + t2 * t2 / 720.0;
  }
  return (1.0 - std::cos(t)) / (t * t);
}

/// A displaceable state space: x boxplus delta walks from x along a flat
/// perturbation vector, y boxminus x recovers the vector leading from x to y.
/// kChartRadius is the radius of the ball around 0 on which the
/// parametrization delta -> x boxplus delta is injective.
template <class M>
concept Manifold = requires(const M x, const typename M::Tangent d, double s) {
  { M::kDof } -> std::convertible_to<int>;
  { M::kChartRadius } -> std::convertible_to<double>;
  { x.boxplus(d, s) } -> std::same_as<M>;
  { x.boxminus(x) } -> std::same_as<typename M::Tangent>;
};

/// CRTP helper supplying the tangent typedef and the default single-chart
/// containment test. Compounds override tangent_within per component.
template <class Derived, int Dof>
struct ManifoldBase {
  static constexpr int kDof = Dof;
  using Tangent = Eigen::Matrix<double, Dof, 1>;

  /// True if `t` lies strictly inside `fraction` times the chart ball.
  static bool tangent_within(const Tangent& t, double fraction) {
    return t.norm() < fraction * Derived::kChartRadius;
  }
};

/// Runtime view of a manifold's dimensions, mostly for reporting.
struct ManifoldDescriptor {
  int dof = 0;
  double v_radius = 0.0;
};

template <Manifold M>
constexpr ManifoldDescriptor describe() {
  return {M::kDof, M::kChartRadius};
}

/// Metric induced by boxminus: d(x, y) = |y boxminus x|.
template <Manifold M>
double distance(const M& x, const M& y) {
  return y.boxminus(x).norm();
}

}  // namespace mest
