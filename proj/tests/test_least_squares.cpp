#include <catch2/catch_amalgamated.hpp>

#include "test_support.hpp"

using namespace mest;
using Catch::Matchers::WithinAbs;

namespace {

// Dense normal-equations oracle for a linear problem f(x) = A x + b, z given:
// x* = x0 - (A^T S^-1 A)^-1 A^T S^-1 (A x0 + b - z).
Eigen::VectorXd linear_gn_oracle(const Eigen::MatrixXd& a,
                                 const Eigen::VectorXd& b,
                                 const Eigen::VectorXd& z,
                                 const Eigen::MatrixXd& sigma,
                                 const Eigen::VectorXd& x0) {
  const Eigen::MatrixXd si = sigma.inverse();
  const Eigen::VectorXd r = a * x0 + b - z;
  return x0 - (a.transpose() * si * a).ldlt().solve(a.transpose() * si * r);
}

}  // namespace

TEST_CASE("numeric jacobian") {
  Rng rng(3);
  std::normal_distribution<double> n(0.0, 1.0);

  SECTION("linear map reproduces its matrix") {
    Eigen::Matrix3d a;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) a(r, c) = n(rng);
    }
    VariableSet vars;
    const VarId x = vars.add(Vec3(Eigen::Vector3d(0.4, -1.0, 0.7)));
    const Term term = make_term(
        {x},
        [&a, x](const VariableSet& v) { return Vec3(a * v.get<Vec3>(x).value()); },
        Vec3(Eigen::Vector3d(1, 2, 3)), Eigen::Matrix3d::Identity());
    const auto blocks = numeric_jacobian(term, vars);
    REQUIRE(blocks.size() == 1);
    CHECK((blocks[0] - a).norm() < 1e-6);
  }

  SECTION("identity measurement at its own value gives the identity block") {
    VariableSet vars;
    Rng rng2(5);
    const QuatRot q = random_point<QuatRot>(rng2);
    const VarId x = vars.add(q);
    const Term term = make_term(
        {x}, [x](const VariableSet& v) { return v.get<QuatRot>(x); }, q,
        Eigen::Matrix3d::Identity());
    const auto blocks = numeric_jacobian(term, vars);
    CHECK((blocks[0] - Eigen::Matrix3d::Identity()).norm() < 1e-6);
  }

  SECTION("constant measurement function has a zero jacobian") {
    VariableSet vars;
    const VarId x = vars.add(Vec2(Eigen::Vector2d(1, 1)));
    const Term term = make_term(
        {x}, [](const VariableSet&) { return Vec2(Eigen::Vector2d(5, 5)); },
        Vec2(), Eigen::Matrix2d::Identity());
    CHECK(numeric_jacobian(term, vars)[0].norm() == 0.0);
  }

  SECTION("probing restores variables bit-exact") {
    VariableSet vars;
    Rng rng2(7);
    const SO3Mat m = random_point<SO3Mat>(rng2);
    const VarId x = vars.add(m);
    const Term term = make_term(
        {x}, [x](const VariableSet& v) { return v.get<SO3Mat>(x); }, m,
        Eigen::Matrix3d::Identity());
    numeric_jacobian(term, vars);
    CHECK((vars.get<SO3Mat>(x).matrix() - m.matrix()).norm() == 0.0);
  }
}

TEST_CASE("gauss-newton") {
  SECTION("one step solves linear problems exactly") {
    Rng rng(11);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
      Eigen::MatrixXd a(4, 3);
      for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 3; ++c) a(r, c) = n(rng);
      }
      Eigen::VectorXd b(4), z(4), x0(3);
      for (int i = 0; i < 4; ++i) b[i] = n(rng);
      for (int i = 0; i < 4; ++i) z[i] = n(rng);
      for (int i = 0; i < 3; ++i) x0[i] = n(rng);
      Eigen::MatrixXd m(4, 4);
      for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) m(r, c) = n(rng);
      }
      const Eigen::MatrixXd sigma =
          m * m.transpose() + 0.5 * Eigen::MatrixXd::Identity(4, 4);

      VariableSet vars;
      const VarId x = vars.add(Vec3(Eigen::Vector3d(x0)));
      const std::vector<Term> terms{make_term(
          {x},
          [&, x](const VariableSet& v) {
            return Vec<4>(Eigen::Vector4d(a * v.get<Vec3>(x).value() + b));
          },
          Vec<4>(Eigen::Vector4d(z)), Eigen::Matrix4d(sigma))};

      // Central differences have no truncation error on a linear map, so a
      // larger probe step just suppresses cancellation noise.
      const auto step = gauss_newton_step(vars, terms, 1e-4);
      const Eigen::VectorXd expected = linear_gn_oracle(a, b, z, sigma, x0);
      CHECK((step.vars.get<Vec3>(x).value() - expected).norm() < 1e-9);
    }
  }

  SECTION("at a local optimum the step is negligible") {
    VariableSet vars;
    const VarId x = vars.add(Vec1(2.0));
    // Two consistent measurements of the same quantity; optimum at 2.
    Eigen::Matrix<double, 1, 1> s1;
    s1(0, 0) = 1.0;
    std::vector<Term> terms;
    for (double z : {1.0, 3.0}) {
      terms.push_back(make_term(
          {x}, [x](const VariableSet& v) { return v.get<Vec1>(x); }, Vec1(z),
          s1));
    }
    const auto step = gauss_newton_step(vars, terms);
    CHECK(step.step_norm <= 1e-9);
    CHECK_THAT(step.rss, WithinAbs(residual_sum_of_squares(vars, terms), 1e-12));
  }

  SECTION("two-pose rotation chain converges to zero residual") {
    Rng rng(13);
    const SO3Mat anchor = random_point<SO3Mat>(rng);
    const Eigen::Vector3d true_rel(0.4, -0.2, 0.3);
    const SO3Mat target = anchor.boxplus(true_rel);

    VariableSet vars;
    const VarId a = vars.add(anchor);
    const VarId b =
        vars.add(target.boxplus(random_tangent_ball<SO3Mat>(rng, 0.1)));
    vars.set_fixed(a, true);

    const std::vector<Term> terms{make_term(
        {a, b},
        [a, b](const VariableSet& v) {
          return SO3Mat(v.get<SO3Mat>(a).matrix().transpose() *
                        v.get<SO3Mat>(b).matrix());
        },
        SO3Mat(anchor.matrix().transpose() * target.matrix()),
        Eigen::Matrix3d(0.01 * Eigen::Matrix3d::Identity()))};

    OptimizeConfig cfg;
    cfg.max_iter = 5;
    const auto res = optimize(vars, terms, cfg);
    CHECK(res.rss_trace.back() < 1e-12);
  }

  SECTION("rank-deficient problems are reported") {
    VariableSet vars;
    const VarId x = vars.add(Vec2(Eigen::Vector2d(1, 1)));
    // Measures only the first component; the second is unconstrained.
    Eigen::Matrix<double, 1, 1> s1;
    s1(0, 0) = 1.0;
    const std::vector<Term> terms{make_term(
        {x},
        [x](const VariableSet& v) { return Vec1(v.get<Vec2>(x).value()[0]); },
        Vec1(0.0), s1)};
    CHECK_THROWS_AS(gauss_newton_step(vars, terms), RankDeficient);
  }
}

TEST_CASE("levenberg-marquardt") {
  SECTION("lambda = 0 equals a gauss-newton step") {
    VariableSet vars;
    const VarId x = vars.add(Vec2(Eigen::Vector2d(2.0, -1.0)));
    const std::vector<Term> terms{make_term(
        {x},
        [x](const VariableSet& v) {
          const Eigen::Vector2d p = v.get<Vec2>(x).value();
          return Vec2(Eigen::Vector2d(p[0] * p[0], p[1]));
        },
        Vec2(Eigen::Vector2d(1.0, 0.5)), Eigen::Matrix2d::Identity())};

    const auto gn = gauss_newton_step(vars, terms);
    const auto lm = levenberg_marquardt_step(vars, terms, 0.0);
    CHECK((lm.vars.get<Vec2>(x).value() - gn.vars.get<Vec2>(x).value()).norm() <
          1e-12);
  }

  SECTION("accepted steps never increase the rss") {
    Rng rng(19);
    VariableSet vars;
    const VarId x = vars.add(random_point<UnitSphere2>(rng));
    std::vector<Term> terms;
    for (int i = 0; i < 5; ++i) {
      terms.push_back(make_term(
          {x}, [x](const VariableSet& v) { return v.get<UnitSphere2>(x); },
          random_point<UnitSphere2>(rng),
          Eigen::Matrix2d(0.5 * Eigen::Matrix2d::Identity())));
    }
    OptimizeConfig cfg;
    cfg.method = Method::kLevenbergMarquardt;
    const auto res = optimize(vars, terms, cfg);
    for (std::size_t i = 1; i < res.rss_trace.size(); ++i) {
      CHECK(res.rss_trace[i] <= res.rss_trace[i - 1] + 1e-15);
    }
  }

  SECTION("stalls instead of looping when no descent exists") {
    VariableSet vars;
    const VarId x = vars.add(Vec1(0.0));
    // Residual already exactly zero: no strictly-decreasing step exists.
    Eigen::Matrix<double, 1, 1> s1;
    s1(0, 0) = 1.0;
    const std::vector<Term> terms{make_term(
        {x}, [x](const VariableSet& v) { return v.get<Vec1>(x); }, Vec1(0.0),
        s1)};
    CHECK_THROWS_AS(levenberg_marquardt_step(vars, terms, 1e-4), NotConverged);
  }
}

TEST_CASE("optimize") {
  SECTION("zero-noise problem keeps a ~zero trace") {
    Rng rng(23);
    const Vec3 truth = random_point<Vec3>(rng);
    VariableSet vars;
    const VarId x = vars.add(truth);
    const std::vector<Term> terms{make_term(
        {x}, [x](const VariableSet& v) { return v.get<Vec3>(x); }, truth,
        Eigen::Matrix3d::Identity())};
    const auto res = optimize(vars, terms);
    for (double rss : res.rss_trace) CHECK(rss < 1e-15);
  }

  SECTION("noisy pose chain lands in the chi-square band") {
    Rng rng(29);
    std::normal_distribution<double> n(0.0, 1.0);
    const double sigma = 0.05;
    const int count = 10;

    std::vector<Angle> truth;
    truth.push_back(Angle(0.0));
    for (int i = 1; i < count; ++i) {
      truth.push_back(truth.back().boxplus(Angle::Tangent{0.3}));
    }

    VariableSet vars;
    std::vector<VarId> ids;
    for (int i = 0; i < count; ++i) ids.push_back(vars.add(truth[i]));
    vars.set_fixed(ids[0], true);

    Eigen::Matrix<double, 1, 1> cov;
    cov(0, 0) = sigma * sigma;
    std::vector<Term> terms;
    int m_dims = 0;
    for (int i = 0; i + 1 < count; ++i) {
      const Angle z =
          Angle(truth[i + 1].boxminus(truth[i])[0] + sigma * n(rng));
      terms.push_back(make_term(
          {ids[i], ids[i + 1]},
          [a = ids[i], b = ids[i + 1]](const VariableSet& v) {
            return Angle(v.get<Angle>(b).boxminus(v.get<Angle>(a))[0]);
          },
          z, cov));
      ++m_dims;
    }
    // Direct priors close the loop and make the chain overdetermined.
    for (int i : {3, 6, count - 1}) {
      terms.push_back(make_term(
          {ids[i]},
          [a = ids[i]](const VariableSet& v) { return v.get<Angle>(a); },
          Angle(truth[i].radians() + sigma * n(rng)), cov));
      ++m_dims;
    }

    const auto res = optimize(vars, terms);
    const double final_rss = res.rss_trace.back();
    CHECK(final_rss < 4.0 * m_dims / 2.0);
  }

  SECTION("maximum-likelihood equivalence on a single angle variable") {
    Rng rng(31);
    std::normal_distribution<double> n(0.0, 1.0);
    const Angle truth(2.4);
    const double sigma = 0.2;
    Eigen::Matrix<double, 1, 1> cov;
    cov(0, 0) = sigma * sigma;

    VariableSet vars;
    const VarId x = vars.add(Angle(2.0));
    std::vector<Term> terms;
    std::vector<double> zs;
    for (int i = 0; i < 7; ++i) {
      const double z = truth.radians() + sigma * n(rng);
      zs.push_back(z);
      terms.push_back(make_term(
          {x}, [x](const VariableSet& v) { return v.get<Angle>(x); }, Angle(z),
          cov));
    }
    const auto res = optimize(vars, terms);
    const double found = res.vars.get<Angle>(x).radians();

    // Brute-force negative log-likelihood grid.
    double best = 0.0;
    double best_nll = std::numeric_limits<double>::infinity();
    const int grid = 20000;
    for (int i = 0; i < grid; ++i) {
      const double cand = -kPi + 2.0 * kPi * i / grid;
      double nll = 0.0;
      for (double z : zs) {
        const double r = Angle(z).boxminus(Angle(cand))[0];
        nll += 0.5 * r * r / (sigma * sigma);
      }
      if (nll < best_nll) {
        best_nll = nll;
        best = cand;
      }
    }
    CHECK(std::abs(nu_pi(found - best)) < 2.0 * kPi / grid + 1e-9);
  }
}

TEST_CASE("sparse assembly equals the dense construction") {
  Rng rng(37);
  VariableSet vars;
  std::vector<VarId> ids;
  for (int i = 0; i < 6; ++i) {
    ids.push_back(vars.add(random_point<QuatRot>(rng)));
  }
  vars.set_fixed(ids[2], true);

  std::vector<Term> terms;
  for (int i = 0; i + 1 < 6; ++i) {
    terms.push_back(make_term(
        {ids[i], ids[i + 1]},
        [a = ids[i], b = ids[i + 1]](const VariableSet& v) {
          return QuatRot(v.get<QuatRot>(a).quaternion().conjugate() *
                         v.get<QuatRot>(b).quaternion());
        },
        random_point<QuatRot>(rng),
        Eigen::Matrix3d(0.1 * Eigen::Matrix3d::Identity())));
  }

  const auto dense = build_normal_equations(vars, terms, false);
  const auto sparse = build_normal_equations(vars, terms, true);
  CHECK((Eigen::MatrixXd(sparse.sparse) - dense.dense).norm() < 1e-12);
  CHECK((sparse.rhs - dense.rhs).norm() < 1e-12);
}
