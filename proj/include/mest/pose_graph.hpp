#pragma once

#include <Eigen/Eigenvalues>

#include <cstdio>
#include <deque>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mest/compound.hpp"
#include "mest/euclidean.hpp"
#include "mest/least_squares.hpp"
#include "mest/quaternion.hpp"
#include "mest/random.hpp"
#include "mest/so3.hpp"

namespace mest::posegraph {

/// Rigid 3D pose over a pluggable rotation backend (quaternion or matrix).
/// Tangent layout: translation first, then rotation.
template <Manifold Rot>
using Pose = Compound<Vec3, Rot>;

template <Manifold Rot>
Pose<Rot> compose(const Pose<Rot>& a, const Pose<Rot>& b) {
  return Pose<Rot>(
      Vec3(a.template get<0>().value() +
           a.template get<1>().rotate(b.template get<0>().value())),
      a.template get<1>() * b.template get<1>());
}

template <Manifold Rot>
Pose<Rot> inverse(const Pose<Rot>& a) {
  const Rot rot_inv = a.template get<1>().inverse();
  return Pose<Rot>(Vec3(-rot_inv.rotate(a.template get<0>().value())), rot_inv);
}

/// Canonical node/edge storage (quaternion-backed, converted on demand).
struct NodePose {
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
  Eigen::Quaterniond q = Eigen::Quaterniond::Identity();
};

struct PoseEdge {
  int from = 0;
  int to = 0;
  NodePose z;
  Eigen::Matrix<double, 6, 6> info = Eigen::Matrix<double, 6, 6>::Identity();
};

struct PoseGraph {
  std::map<int, NodePose> nodes;
  std::vector<PoseEdge> edges;
  int gauge = 0;
};

template <Manifold Rot>
Pose<Rot> to_pose(const NodePose& n);

template <>
inline Pose<QuatRot> to_pose<QuatRot>(const NodePose& n) {
  return Pose<QuatRot>(Vec3(n.t), QuatRot(n.q));
}

template <>
inline Pose<SO3Mat> to_pose<SO3Mat>(const NodePose& n) {
  return Pose<SO3Mat>(Vec3(n.t), SO3Mat(n.q.toRotationMatrix()));
}

template <Manifold Rot>
NodePose from_pose(const Pose<Rot>& p);

template <>
inline NodePose from_pose<QuatRot>(const Pose<QuatRot>& p) {
  return {p.get<0>().value(), p.get<1>().quaternion()};
}

template <>
inline NodePose from_pose<SO3Mat>(const Pose<SO3Mat>& p) {
  return {p.get<0>().value(), Eigen::Quaterniond(p.get<1>().matrix())};
}

/// (pose_from^-1 o pose_to) [-] z: the 6-vector mismatch of one edge.
inline Eigen::Matrix<double, 6, 1> edge_residual(const PoseGraph& graph,
                                                 const PoseEdge& edge) {
  const auto it_from = graph.nodes.find(edge.from);
  const auto it_to = graph.nodes.find(edge.to);
  if (it_from == graph.nodes.end() || it_to == graph.nodes.end()) {
    throw ContractViolation("edge references unknown node");
  }
  const auto rel = compose(inverse(to_pose<QuatRot>(it_from->second)),
                           to_pose<QuatRot>(it_to->second));
  return rel.boxminus(to_pose<QuatRot>(edge.z));
}

/// Parses the VERTEX_SE3:QUAT / EDGE_SE3:QUAT text format. Info matrices are
/// read as the upper triangle in row-major order, symmetrized, and clamped
/// to eigenvalues >= 1e-9 with a warning when indefinite.
inline PoseGraph parse_g2o(std::istream& in,
                           std::vector<std::string>* warnings = nullptr) {
  PoseGraph graph;
  std::string line;
  int line_no = 0;
  bool have_gauge = false;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag.empty() || tag[0] == '#') continue;
    const auto fail = [&](const std::string& what) {
      throw Error("g2o parse error at line " + std::to_string(line_no) + ": " +
                  what);
    };
    if (tag == "VERTEX_SE3:QUAT") {
      int id;
      double tx, ty, tz, qx, qy, qz, qw;
      if (!(ls >> id >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
        fail("malformed vertex");
      }
      Eigen::Quaterniond q(qw, qx, qy, qz);
      if (std::abs(q.norm() - 1.0) > 1e-6) fail("quaternion far from unit norm");
      q.normalize();
      graph.nodes[id] = {Eigen::Vector3d(tx, ty, tz), q};
      if (!have_gauge || id < graph.gauge) {
        graph.gauge = id;
        have_gauge = true;
      }
    } else if (tag == "EDGE_SE3:QUAT") {
      PoseEdge e;
      double tx, ty, tz, qx, qy, qz, qw;
      if (!(ls >> e.from >> e.to >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
        fail("malformed edge");
      }
      if (e.from == e.to) fail("self edge");
      Eigen::Quaterniond q(qw, qx, qy, qz);
      if (std::abs(q.norm() - 1.0) > 1e-6) fail("quaternion far from unit norm");
      q.normalize();
      e.z = {Eigen::Vector3d(tx, ty, tz), q};
      Eigen::Matrix<double, 6, 6> info;
      for (int r = 0; r < 6; ++r) {
        for (int c = r; c < 6; ++c) {
          double v;
          if (!(ls >> v)) fail("truncated information matrix");
          info(r, c) = v;
          info(c, r) = v;
        }
      }
      info = (0.5 * (info + info.transpose())).eval();
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> eig(info);
      if (eig.eigenvalues().minCoeff() < 0.0) {
        if (warnings) {
          warnings->push_back("line " + std::to_string(line_no) +
                              ": information matrix not PSD, clamping");
        }
        const auto clamped = eig.eigenvalues().cwiseMax(1e-9).asDiagonal();
        info = eig.eigenvectors() * clamped * eig.eigenvectors().transpose();
      }
      e.info = info;
      graph.edges.push_back(e);
    } else {
      fail("unknown tag '" + tag + "'");
    }
  }
  return graph;
}

inline void serialize_g2o(const PoseGraph& graph, std::ostream& out) {
  char buf[64];
  const auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const auto& [id, n] : graph.nodes) {
    out << "VERTEX_SE3:QUAT " << id << ' ' << num(n.t.x()) << ' '
        << num(n.t.y()) << ' ' << num(n.t.z()) << ' ' << num(n.q.x()) << ' '
        << num(n.q.y()) << ' ' << num(n.q.z()) << ' ' << num(n.q.w()) << '\n';
  }
  for (const auto& e : graph.edges) {
    out << "EDGE_SE3:QUAT " << e.from << ' ' << e.to << ' ' << num(e.z.t.x())
        << ' ' << num(e.z.t.y()) << ' ' << num(e.z.t.z()) << ' '
        << num(e.z.q.x()) << ' ' << num(e.z.q.y()) << ' ' << num(e.z.q.z())
        << ' ' << num(e.z.q.w());
    for (int r = 0; r < 6; ++r) {
      for (int c = r; c < 6; ++c) out << ' ' << num(e.info(r, c));
    }
    out << '\n';
  }
}

/// Re-initializes every node by composing edge measurements along a
/// breadth-first spanning tree rooted at the gauge node.
inline PoseGraph init_from_odometry(const PoseGraph& graph) {
  PoseGraph out = graph;
  std::map<int, std::vector<std::pair<int, const PoseEdge*>>> adjacency;
  for (const auto& e : graph.edges) {
    adjacency[e.from].push_back({e.to, &e});
    adjacency[e.to].push_back({e.from, &e});
  }
  std::map<int, bool> done;
  for (const auto& [id, n] : graph.nodes) done[id] = false;

  out.nodes[graph.gauge] = NodePose{};
  done[graph.gauge] = true;
  std::deque<int> queue{graph.gauge};
  while (!queue.empty()) {
    const int cur = queue.front();
    queue.pop_front();
    const auto cur_pose = to_pose<QuatRot>(out.nodes[cur]);
    for (const auto& [next, edge] : adjacency[cur]) {
      if (done[next]) continue;
      const auto z = to_pose<QuatRot>(edge->z);
      const auto next_pose =
          edge->from == cur ? compose(cur_pose, z) : compose(cur_pose, inverse(z));
      out.nodes[next] = from_pose(next_pose);
      done[next] = true;
      queue.push_back(next);
    }
  }

  std::string unreachable;
  for (const auto& [id, ok] : done) {
    if (!ok) unreachable += (unreachable.empty() ? "" : ", ") + std::to_string(id);
  }
  if (!unreachable.empty()) {
    throw Error("graph disconnected from gauge; unreachable nodes: " +
                unreachable);
  }
  return out;
}

/// Builds the least-squares problem for a rotation backend: one variable per
/// node (the gauge node hard-fixed) and one relative-pose term per edge.
template <Manifold Rot>
std::pair<VariableSet, std::vector<Term>> build_problem(const PoseGraph& graph) {
  VariableSet vars;
  std::map<int, VarId> ids;
  for (const auto& [id, n] : graph.nodes) {
    ids[id] = vars.add(to_pose<Rot>(n));
  }
  vars.set_fixed(ids.at(graph.gauge), true);

  std::vector<Term> terms;
  terms.reserve(graph.edges.size());
  for (const auto& e : graph.edges) {
    const VarId vi = ids.at(e.from);
    const VarId vj = ids.at(e.to);
    terms.push_back(make_term_info(
        {vi, vj},
        [vi, vj](const VariableSet& v) {
          return compose(inverse(v.get<Pose<Rot>>(vi)), v.get<Pose<Rot>>(vj));
        },
        to_pose<Rot>(e.z), e.info));
  }
  return {std::move(vars), std::move(terms)};
}

struct GraphOptimizeResult {
  PoseGraph graph;
  std::vector<double> rss_trace;
};

template <Manifold Rot>
GraphOptimizeResult optimize_graph(const PoseGraph& graph,
                                   const OptimizeConfig& config = {}) {
  auto [vars, terms] = build_problem<Rot>(graph);
  OptimizeResult res = optimize(vars, terms, config);

  GraphOptimizeResult out;
  out.graph = graph;
  out.rss_trace = std::move(res.rss_trace);
  int k = 0;
  for (auto& [id, n] : out.graph.nodes) {
    n = from_pose(res.vars.get<Pose<Rot>>(k++));
  }
  return out;
}

/// The ad-hoc 4D-quaternion formulation: each node carries a free R^4
/// quaternion vector (normalized inside the measurement function) plus a
/// |q| = 1 pseudo-measurement, for 7 tangent DOF per pose instead of 6.
inline std::pair<VariableSet, std::vector<Term>> build_quaternion_baseline(
    const PoseGraph& graph, double pseudo_sigma = 1e-3) {
  VariableSet vars;
  std::map<int, std::pair<VarId, VarId>> ids;  // node -> (t, q)
  for (const auto& [id, n] : graph.nodes) {
    const VarId t = vars.add(Vec3(n.t));
    const VarId q = vars.add(
        Vec<4>(Eigen::Vector4d(n.q.w(), n.q.x(), n.q.y(), n.q.z())));
    ids[id] = {t, q};
  }
  vars.set_fixed(ids.at(graph.gauge).first, true);
  vars.set_fixed(ids.at(graph.gauge).second, true);

  const auto read_pose = [](const VariableSet& v, VarId t, VarId q) {
    const Eigen::Vector4d qc = v.get<Vec<4>>(q).value();
    return Pose<QuatRot>(Vec3(v.get<Vec3>(t).value()),
                         QuatRot(qc[0], qc[1], qc[2], qc[3]));
  };

  std::vector<Term> terms;
  for (const auto& e : graph.edges) {
    const auto [ti, qi] = ids.at(e.from);
    const auto [tj, qj] = ids.at(e.to);
    terms.push_back(make_term_info(
        {ti, qi, tj, qj},
        [=](const VariableSet& v) {
          return compose(inverse(read_pose(v, ti, qi)), read_pose(v, tj, qj));
        },
        to_pose<QuatRot>(e.z), e.info));
  }
  Eigen::Matrix<double, 1, 1> pseudo_cov;
  pseudo_cov(0, 0) = pseudo_sigma * pseudo_sigma;
  for (const auto& [id, tq] : ids) {
    const VarId q = tq.second;
    terms.push_back(make_term(
        {q},
        [q](const VariableSet& v) {
          return Vec1(v.get<Vec<4>>(q).value().norm());
        },
        Vec1(1.0), pseudo_cov));
  }
  return {std::move(vars), std::move(terms)};
}

/// Synthetic stand-in for a sphere dataset: a spiral of poses on a sphere
/// with consecutive motion edges plus loop closures between nearby poses of
/// different winds. Returns ground truth and a noise-corrupted copy
/// (per-axis sigma on translation (m) and rotation tangent (rad)).
struct SphereGraphConfig {
  int n_poses = 400;
  double radius = 25.0;
  double winds = 7.0;
  double sigma_trans = 0.01;
  double sigma_rot = 0.01;
  std::uint64_t seed = 1;
  double closure_radius_factor = 1.2;  // times the gap between winds
};

inline std::pair<PoseGraph, PoseGraph> generate_sphere_graph(
    const SphereGraphConfig& cfg) {
  if (cfg.n_poses < 10) throw ContractViolation("need at least 10 poses");

  // Spiral positions, poles excluded.
  std::vector<Eigen::Vector3d> pts(cfg.n_poses);
  for (int i = 0; i < cfg.n_poses; ++i) {
    const double u = static_cast<double>(i) / (cfg.n_poses - 1);
    const double elevation = (u - 0.5) * 0.9 * kPi;
    const double azimuth = cfg.winds * 2.0 * kPi * u;
    pts[i] = cfg.radius * Eigen::Vector3d(std::cos(elevation) * std::cos(azimuth),
                                          std::cos(elevation) * std::sin(azimuth),
                                          std::sin(elevation));
  }

  // Frames: x forward along motion, z close to the outward normal.
  PoseGraph truth;
  for (int i = 0; i < cfg.n_poses; ++i) {
    const Eigen::Vector3d fwd =
        (i + 1 < cfg.n_poses ? pts[i + 1] - pts[i] : pts[i] - pts[i - 1])
            .normalized();
    const Eigen::Vector3d up_raw = pts[i].normalized();
    const Eigen::Vector3d up =
        (up_raw - up_raw.dot(fwd) * fwd).normalized();
    const Eigen::Vector3d left = up.cross(fwd);
    Eigen::Matrix3d rot;
    rot.col(0) = fwd;
    rot.col(1) = left;
    rot.col(2) = up;
    truth.nodes[i] = {pts[i], Eigen::Quaterniond(rot)};
  }

  // Anchor the first pose at the identity so the truth lives in the same
  // frame odometry initialization reconstructs (gauge at the origin).
  const auto base_inv = inverse(to_pose<QuatRot>(truth.nodes[0]));
  for (auto& [id, n] : truth.nodes) {
    n = from_pose(compose(base_inv, to_pose<QuatRot>(n)));
  }

  const double wind_gap = 0.9 * kPi * cfg.radius / cfg.winds;
  const double closure_radius = cfg.closure_radius_factor * wind_gap;
  const auto add_edge = [&](int i, int j) {
    PoseEdge e;
    e.from = i;
    e.to = j;
    e.z = from_pose(compose(inverse(to_pose<QuatRot>(truth.nodes[i])),
                                    to_pose<QuatRot>(truth.nodes[j])));
    truth.edges.push_back(e);
  };
  for (int i = 0; i + 1 < cfg.n_poses; ++i) add_edge(i, i + 1);
  // Closures pair poses of different winds; the separation guard keeps
  // near-consecutive poses out.
  const int min_separation =
      std::max(5, static_cast<int>(cfg.n_poses / (2.0 * cfg.winds)));
  for (int i = 0; i < cfg.n_poses; ++i) {
    for (int j = 0; j < i - min_separation; ++j) {
      if ((pts[i] - pts[j]).norm() < closure_radius) {
        add_edge(j, i);
        break;  // at most one closure per pose
      }
    }
  }

  // Noisy copy: corrupt measurements, set matching information matrices.
  PoseGraph noisy = truth;
  Rng rng(cfg.seed);
  Eigen::Matrix<double, 6, 6> info = Eigen::Matrix<double, 6, 6>::Identity();
  if (cfg.sigma_trans > 0.0) {
    info.topLeftCorner<3, 3>() /= cfg.sigma_trans * cfg.sigma_trans;
  }
  if (cfg.sigma_rot > 0.0) {
    info.bottomRightCorner<3, 3>() /= cfg.sigma_rot * cfg.sigma_rot;
  }
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& e : noisy.edges) {
    Eigen::Matrix<double, 6, 1> eta;
    for (int k = 0; k < 3; ++k) eta[k] = cfg.sigma_trans * n(rng);
    for (int k = 3; k < 6; ++k) eta[k] = cfg.sigma_rot * n(rng);
    e.z = from_pose(to_pose<QuatRot>(e.z).boxplus(eta));
    e.info = info;
  }
  return {std::move(truth), std::move(noisy)};
}

}  // namespace mest::posegraph
