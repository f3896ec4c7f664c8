#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mest/random.hpp"

namespace mest {

/// Worst-case residuals of randomized checks of the displacement axioms and
/// the induced metric. All residuals are "how far past the allowed bound".
struct AxiomReport {
  int trials = 0;
  double worst_identity = 0.0;       // d(x [+] 0, x)
  double worst_surjective = 0.0;     // d(x [+] (y [-] x), y)
  double worst_injective = 0.0;      // |((x [+] d) [-] x) - d|, |d| < radius
  double worst_lipschitz = 0.0;      // |(x[+]d1) [-] (x[+]d2)| - |d1 - d2|
  double worst_metric_symmetry = 0.0;
  double worst_metric_triangle = 0.0;

  bool pass(double tol = 1e-9, double lipschitz_slack = 1e-12) const {
    return worst_identity <= tol && worst_surjective <= tol &&
           worst_injective <= tol && worst_lipschitz <= lipschitz_slack &&
           worst_metric_symmetry <= tol && worst_metric_triangle <= tol;
  }

  /// Name of the first violated check, empty when all pass.
  std::string violation(double tol = 1e-9, double lipschitz_slack = 1e-12) const {
    if (worst_identity > tol) return "axiom (x [+] 0 = x)";
    if (worst_surjective > tol) return "axiom (x [+] (y [-] x) = y)";
    if (worst_injective > tol) return "axiom ((x [+] d) [-] x = d)";
    if (worst_lipschitz > lipschitz_slack) return "axiom (1-Lipschitz boxplus)";
    if (worst_metric_symmetry > tol) return "metric symmetry";
    if (worst_metric_triangle > tol) return "metric triangle inequality";
    return {};
  }
};

/// Runs `trials` seeded random checks of the four definition axioms plus the
/// induced-metric properties on manifold M.
template <Manifold M>
AxiomReport check_axioms(int trials, std::uint64_t seed) {
  Rng rng(seed);
  AxiomReport rep;
  rep.trials = trials;

  const double radius = std::min(M::kChartRadius, 10.0);
  const typename M::Tangent zero = M::Tangent::Zero();

  for (int t = 0; t < trials; ++t) {
    const M x = random_point<M>(rng);
    const M y = random_point<M>(rng);
    const M z = random_point<M>(rng);

    rep.worst_identity =
        std::max(rep.worst_identity, distance(x, x.boxplus(zero)));

    rep.worst_surjective =
        std::max(rep.worst_surjective, distance(x.boxplus(y.boxminus(x)), y));

    const auto d = random_tangent_ball<M>(rng, radius * (1.0 - 1e-6));
    rep.worst_injective =
        std::max(rep.worst_injective, (x.boxplus(d).boxminus(x) - d).norm());

    const auto d1 = random_tangent_normal<M>(rng, radius / 2.0);
    const auto d2 = random_tangent_normal<M>(rng, radius / 2.0);
    const double lhs = x.boxplus(d1).boxminus(x.boxplus(d2)).norm();
    rep.worst_lipschitz =
        std::max(rep.worst_lipschitz, lhs - (d1 - d2).norm());

    rep.worst_metric_symmetry =
        std::max(rep.worst_metric_symmetry,
                 std::abs(distance(x, y) - distance(y, x)));
    rep.worst_metric_triangle =
        std::max(rep.worst_metric_triangle,
                 distance(x, z) - (distance(x, y) + distance(y, z)));
  }
  return rep;
}

}  // namespace mest
