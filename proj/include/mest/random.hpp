#pragma once

#include <random>

#include "mest/angle.hpp"
#include "mest/compound.hpp"
#include "mest/euclidean.hpp"
#include "mest/quaternion.hpp"
#include "mest/rotation2d.hpp"
#include "mest/so3.hpp"
#include "mest/sphere.hpp"

namespace mest {

using Rng = std::mt19937_64;

/// Standard-normal tangent vector scaled by sigma.
template <Manifold M>
typename M::Tangent random_tangent_normal(Rng& rng, double sigma) {
  std::normal_distribution<double> n(0.0, 1.0);
  typename M::Tangent t;
  for (int i = 0; i < M::kDof; ++i) t[i] = sigma * n(rng);
  return t;
}

/// Uniform draw from the ball of the given radius (uniform in volume).
template <Manifold M>
typename M::Tangent random_tangent_ball(Rng& rng, double radius) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  typename M::Tangent t;
  for (int i = 0; i < M::kDof; ++i) t[i] = n(rng);
  const double nt = t.norm();
  if (nt == 0.0) return t;
  return t * (radius * std::pow(u(rng), 1.0 / M::kDof) / nt);
}

template <Manifold M>
struct Sampler;

template <int N>
struct Sampler<Vec<N>> {
  static Vec<N> point(Rng& rng) {
    std::normal_distribution<double> n(0.0, 2.0);
    typename Vec<N>::Storage v;
    for (int i = 0; i < N; ++i) v[i] = n(rng);
    return Vec<N>(v);
  }
};

template <>
struct Sampler<Angle> {
  static Angle point(Rng& rng) {
    std::uniform_real_distribution<double> u(-kPi, kPi);
    return Angle(u(rng));
  }
};

template <>
struct Sampler<SO2Mat> {
  static SO2Mat point(Rng& rng) {
    std::uniform_real_distribution<double> u(-kPi, kPi);
    return SO2Mat::from_angle(u(rng));
  }
};

template <>
struct Sampler<QuatRot> {
  static QuatRot point(Rng& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    return QuatRot(n(rng), n(rng), n(rng), n(rng));
  }
};

template <>
struct Sampler<SO3Mat> {
  static SO3Mat point(Rng& rng) {
    return SO3Mat(Sampler<QuatRot>::point(rng).matrix());
  }
};

template <int N>
struct Sampler<UnitVector<N>> {
  static UnitVector<N> point(Rng& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    typename UnitVector<N>::Storage v;
    for (int i = 0; i < N + 1; ++i) v[i] = n(rng);
    if (v.norm() == 0.0) v[0] = 1.0;
    return UnitVector<N>(v);
  }
};

template <>
struct Sampler<ProjPlane> {
  static ProjPlane point(Rng& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::Vector3d v(n(rng), n(rng), n(rng));
    if (v.norm() == 0.0) v.x() = 1.0;
    return ProjPlane(v);
  }
};

template <Manifold... Parts>
struct Sampler<Compound<Parts...>> {
  static Compound<Parts...> point(Rng& rng) {
    // Comma-fold keeps the draw order deterministic.
    Compound<Parts...> c;
    [&]<std::size_t... Is>(std::index_sequence<Is...>) {
      ((c.template get<Is>() =
            Sampler<std::tuple_element_t<Is, std::tuple<Parts...>>>::point(rng)),
       ...);
    }(std::index_sequence_for<Parts...>{});
    return c;
  }
};

template <Manifold M>
M random_point(Rng& rng) {
  return Sampler<M>::point(rng);
}

}  // namespace mest
