#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "test_support.hpp"

using namespace mest;
using namespace mest::posegraph;
using Catch::Matchers::WithinAbs;

namespace {

PoseGraph three_pose_fixture() {
  std::istringstream in(
      "VERTEX_SE3:QUAT 0 0 0 0 0 0 0 1\n"
      "VERTEX_SE3:QUAT 1 1 0 0 0 0 0.7071067811865476 0.7071067811865476\n"
      "VERTEX_SE3:QUAT 2 1 1 0 0 0 1 0\n"
      "EDGE_SE3:QUAT 0 1 1 0 0 0 0 0.7071067811865476 0.7071067811865476 "
      "1 0 0 0 0 0 1 0 0 0 0 1 0 0 0 1 0 0 1 0 1\n"
      "EDGE_SE3:QUAT 1 2 1 0 0 0 0 0.7071067811865476 0.7071067811865476 "
      "2 0 0 0 0 0 2 0 0 0 0 2 0 0 0 2 0 0 2 0 2\n");
  return parse_g2o(in);
}

}  // namespace

TEST_CASE("g2o parsing") {
  SECTION("empty input gives an empty graph") {
    std::istringstream in("");
    const PoseGraph g = parse_g2o(in);
    CHECK(g.nodes.empty());
    CHECK(g.edges.empty());
  }

  SECTION("hand-written fixture parses to expected values") {
    const PoseGraph g = three_pose_fixture();
    REQUIRE(g.nodes.size() == 3);
    REQUIRE(g.edges.size() == 2);
    CHECK(g.gauge == 0);
    CHECK((g.nodes.at(1).t - Eigen::Vector3d(1, 0, 0)).norm() < 1e-15);
    CHECK_THAT(g.nodes.at(1).q.w(), WithinAbs(std::sqrt(0.5), 1e-12));
    CHECK_THAT(g.edges[1].info(0, 0), WithinAbs(2.0, 1e-15));
    CHECK_THAT(g.edges[1].info(5, 5), WithinAbs(2.0, 1e-15));
  }

  SECTION("malformed lines carry the line number") {
    std::istringstream in("VERTEX_SE3:QUAT 0 0 0 0 0 0 0 1\nEDGE_SE3:QUAT 0\n");
    try {
      parse_g2o(in);
      FAIL("expected parse error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
  }

  SECTION("non-unit quaternions are rejected") {
    std::istringstream in("VERTEX_SE3:QUAT 0 0 0 0 0 0 0 2\n");
    CHECK_THROWS_AS(parse_g2o(in), Error);
  }

  SECTION("indefinite information matrices warn and clamp") {
    std::istringstream in(
        "VERTEX_SE3:QUAT 0 0 0 0 0 0 0 1\n"
        "VERTEX_SE3:QUAT 1 1 0 0 0 0 0 1\n"
        "EDGE_SE3:QUAT 0 1 1 0 0 0 0 0 1 "
        "-1 0 0 0 0 0 1 0 0 0 0 1 0 0 0 1 0 0 1 0 1\n");
    std::vector<std::string> warnings;
    const PoseGraph g = parse_g2o(in, &warnings);
    REQUIRE(warnings.size() == 1);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> eig(
        g.edges[0].info);
    CHECK(eig.eigenvalues().minCoeff() >= 1e-9 - 1e-15);
  }

  SECTION("serialize/parse round-trips bit-exactly") {
    const PoseGraph g = three_pose_fixture();
    std::ostringstream out;
    serialize_g2o(g, out);
    std::istringstream in(out.str());
    const PoseGraph g2 = parse_g2o(in);
    std::ostringstream out2;
    serialize_g2o(g2, out2);
    CHECK(out.str() == out2.str());
    for (const auto& [id, n] : g.nodes) {
      CHECK((n.t - g2.nodes.at(id).t).norm() == 0.0);
      CHECK((n.q.coeffs() - g2.nodes.at(id).q.coeffs()).norm() == 0.0);
    }
  }
}

TEST_CASE("edge residual") {
  SECTION("consistent chain has zero residual") {
    const PoseGraph g = three_pose_fixture();
    for (const auto& e : g.edges) {
      CHECK(edge_residual(g, e).norm() < 1e-12);
    }
  }

  SECTION("pure translation offset lands in the translation slice") {
    PoseGraph g = three_pose_fixture();
    const Eigen::Vector3d d(0.5, -0.25, 0.125);
    // In edge 0's residual the mismatch is expressed in node-0's frame,
    // which is the world frame for this fixture.
    g.nodes[1].t += d;
    const auto r = edge_residual(g, g.edges[0]);
    CHECK((r.head<3>() - d).norm() < 1e-12);
    CHECK(r.tail<3>().norm() < 1e-12);
  }

  SECTION("pure rotation offset lands in the rotation slice") {
    PoseGraph g = three_pose_fixture();
    const Eigen::Vector3d d(0.2, 0.1, -0.3);
    const QuatRot rot(g.nodes[1].q);
    g.nodes[1].q = rot.boxplus(d).quaternion();
    const auto r = edge_residual(g, g.edges[0]);
    CHECK(r.head<3>().norm() < 1e-12);
    CHECK((r.tail<3>() - d).norm() < 1e-9);
  }
}

TEST_CASE("odometry initialization") {
  SECTION("zero-noise chain reproduces ground truth") {
    SphereGraphConfig cfg;
    cfg.n_poses = 40;
    cfg.sigma_trans = 0.0;
    cfg.sigma_rot = 0.0;
    const auto [truth, noisy] = generate_sphere_graph(cfg);
    const PoseGraph init = init_from_odometry(noisy);
    for (const auto& [id, n] : truth.nodes) {
      CHECK((n.t - init.nodes.at(id).t).norm() < 1e-9);
      CHECK(distance(QuatRot(n.q), QuatRot(init.nodes.at(id).q)) < 1e-9);
    }
  }

  SECTION("noise leaves loop closures inconsistent before optimization") {
    SphereGraphConfig cfg;
    cfg.n_poses = 60;
    cfg.sigma_trans = 0.05;
    cfg.sigma_rot = 0.05;
    const auto [truth, noisy] = generate_sphere_graph(cfg);
    const PoseGraph init = init_from_odometry(noisy);
    double worst = 0.0;
    for (const auto& e : init.edges) {
      worst = std::max(worst, edge_residual(init, e).norm());
    }
    CHECK(worst > 0.05);
  }

  SECTION("disconnected graphs report the unreachable nodes") {
    PoseGraph g = three_pose_fixture();
    g.nodes[99] = NodePose{};
    try {
      init_from_odometry(g);
      FAIL("expected disconnect error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("99") != std::string::npos);
    }
  }
}

TEST_CASE("sphere graph generation") {
  SphereGraphConfig cfg;
  cfg.n_poses = 120;
  const auto [truth, noisy] = generate_sphere_graph(cfg);
  CHECK(truth.nodes.size() == 120);
  CHECK(truth.edges.size() > 119);  // closures exist
  CHECK(noisy.edges.size() == truth.edges.size());
  for (const auto& e : truth.edges) {
    CHECK(edge_residual(truth, e).norm() < 1e-9);
  }
}

TEST_CASE("graph optimization") {
  SECTION("zero-noise graph converges immediately") {
    SphereGraphConfig cfg;
    cfg.n_poses = 30;
    cfg.sigma_trans = 0.0;
    cfg.sigma_rot = 0.0;
    const auto [truth, noisy] = generate_sphere_graph(cfg);
    OptimizeConfig ocfg;
    ocfg.max_iter = 2;
    const auto res = optimize_graph<QuatRot>(truth, ocfg);
    CHECK(res.rss_trace.back() < 1e-12);
  }

  SECTION("noisy loop: monotone LM trace ending in the chi-square band") {
    SphereGraphConfig cfg;
    cfg.n_poses = 60;
    cfg.sigma_trans = 0.02;
    cfg.sigma_rot = 0.02;
    cfg.seed = 5;
    const auto [truth, noisy] = generate_sphere_graph(cfg);
    const PoseGraph init = init_from_odometry(noisy);

    OptimizeConfig ocfg;
    ocfg.method = Method::kLevenbergMarquardt;
    ocfg.rss_tol = 1e-9;
    const auto res = optimize_graph<QuatRot>(init, ocfg);
    for (std::size_t i = 1; i < res.rss_trace.size(); ++i) {
      CHECK(res.rss_trace[i] <= res.rss_trace[i - 1] + 1e-12);
    }
    // chi-square per degree of freedom of the whitened residuals (the rss
    // carries a factor 1/2).
    const int residual_dof = static_cast<int>(noisy.edges.size()) * 6 -
                             6 * (cfg.n_poses - 1);
    const double chi2_per_dof = 2.0 * res.rss_trace.back() / residual_dof;
    CHECK(chi2_per_dof > 0.5);
    CHECK(chi2_per_dof < 2.0);
  }

  SECTION("gauge freedom: a rigidly transformed start reaches the same rss") {
    SphereGraphConfig cfg;
    cfg.n_poses = 40;
    cfg.sigma_trans = 0.01;
    cfg.sigma_rot = 0.01;
    const auto [truth, noisy] = generate_sphere_graph(cfg);
    PoseGraph init = init_from_odometry(noisy);

    OptimizeConfig ocfg;
    ocfg.method = Method::kLevenbergMarquardt;
    ocfg.rss_tol = 1e-10;
    const auto base = optimize_graph<QuatRot>(init, ocfg);

    const auto offset = to_pose<QuatRot>(
        NodePose{Eigen::Vector3d(10, -4, 2),
                 Eigen::Quaterniond(Eigen::AngleAxisd(
                     0.7, Eigen::Vector3d(1, 2, -1).normalized()))});
    PoseGraph moved = init;
    for (auto& [id, n] : moved.nodes) {
      n = from_pose(compose(offset, to_pose<QuatRot>(n)));
    }
    const auto shifted = optimize_graph<QuatRot>(moved, ocfg);
    CHECK_THAT(shifted.rss_trace.back(),
               WithinAbs(base.rss_trace.back(),
                         1e-6 * std::max(1.0, base.rss_trace.back())));
  }

  SECTION("quaternion and matrix backends agree") {
    SphereGraphConfig cfg;
    cfg.n_poses = 40;
    cfg.sigma_trans = 0.01;
    cfg.sigma_rot = 0.01;
    const auto [truth, noisy] = generate_sphere_graph(cfg);
    const PoseGraph init = init_from_odometry(noisy);

    OptimizeConfig ocfg;
    ocfg.method = Method::kLevenbergMarquardt;
    ocfg.rss_tol = 1e-9;
    const auto quat = optimize_graph<QuatRot>(init, ocfg);
    const auto mat = optimize_graph<SO3Mat>(init, ocfg);
    REQUIRE(quat.rss_trace.size() == mat.rss_trace.size());
    for (std::size_t i = 0; i < quat.rss_trace.size(); ++i) {
      CHECK_THAT(mat.rss_trace[i],
                 WithinAbs(quat.rss_trace[i],
                           1e-6 * std::max(1.0, quat.rss_trace[i])));
    }
  }
}

TEST_CASE("plain-quaternion baseline") {
  SphereGraphConfig cfg;
  cfg.n_poses = 25;
  cfg.sigma_trans = 0.01;
  cfg.sigma_rot = 0.01;
  const auto [truth, noisy] = generate_sphere_graph(cfg);
  const PoseGraph init = init_from_odometry(noisy);

  auto [mvars, mterms] = build_problem<QuatRot>(init);
  auto [qvars, qterms] = build_quaternion_baseline(init);

  SECTION("the 4d formulation needs a strictly larger system") {
    CHECK(qvars.total_free_dof() == 7 * (cfg.n_poses - 1));
    CHECK(mvars.total_free_dof() == 6 * (cfg.n_poses - 1));
    CHECK(qvars.total_free_dof() > mvars.total_free_dof());
  }

  SECTION("with the unit pseudo-measurement it still converges under LM") {
    OptimizeConfig ocfg;
    ocfg.method = Method::kLevenbergMarquardt;
    ocfg.rss_tol = 1e-9;
    const auto base = optimize(mvars, mterms, ocfg);
    const auto res = optimize(qvars, qterms, ocfg);
    // Comparable quality: within 20% of the manifold optimum.
    CHECK(res.rss_trace.back() < 1.2 * base.rss_trace.back() + 1e-9);
  }
}
