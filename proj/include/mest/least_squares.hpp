#pragma once

#include <Eigen/Cholesky>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <functional>
#include <memory>
#include <vector>

#include "mest/core.hpp"
#include "mest/stats.hpp"

namespace mest {

struct RankDeficient : Error {
  using Error::Error;
};

using VarId = int;

namespace detail {

struct VarBase {
  virtual ~VarBase() = default;
  virtual int dof() const = 0;
  virtual void boxplus_from(const VarBase& base,
                            Eigen::Ref<const Eigen::VectorXd> delta,
                            double scale) = 0;
  virtual std::unique_ptr<VarBase> clone() const = 0;
};

template <Manifold M>
struct VarHolder final : VarBase {
  explicit VarHolder(M v) : value(std::move(v)) {}
  int dof() const override { return M::kDof; }
  void boxplus_from(const VarBase& base, Eigen::Ref<const Eigen::VectorXd> delta,
                    double scale) override {
    value = static_cast<const VarHolder&>(base).value.boxplus(delta, scale);
  }
  std::unique_ptr<VarBase> clone() const override {
    return std::make_unique<VarHolder>(value);
  }
  M value;
};

}  // namespace detail

/// Ordered set of manifold-valued optimization variables. Fixed variables
/// keep their value but get no tangent slice in the stacked step vector.
class VariableSet {
 public:
  VariableSet() = default;
  VariableSet(const VariableSet& other) { *this = other; }
  VariableSet& operator=(const VariableSet& other) {
    slots_.clear();
    slots_.reserve(other.slots_.size());
    for (const auto& s : other.slots_) slots_.push_back({s.var->clone(), s.fixed});
    return *this;
  }
  VariableSet(VariableSet&&) = default;
  VariableSet& operator=(VariableSet&&) = default;

  template <Manifold M>
  VarId add(M value) {
    slots_.push_back({std::make_unique<detail::VarHolder<M>>(std::move(value)), false});
    return static_cast<VarId>(slots_.size() - 1);
  }

  template <Manifold M>
  const M& get(VarId id) const {
    return static_cast<const detail::VarHolder<M>&>(*slots_.at(id).var).value;
  }

  template <Manifold M>
  void set(VarId id, M value) {
    static_cast<detail::VarHolder<M>&>(*slots_.at(id).var).value = std::move(value);
  }

  void set_fixed(VarId id, bool fixed) { slots_.at(id).fixed = fixed; }
  bool is_fixed(VarId id) const { return slots_.at(id).fixed; }
  int size() const { return static_cast<int>(slots_.size()); }
  int dof(VarId id) const { return slots_.at(id).var->dof(); }

  /// Tangent offset of a free variable, -1 for fixed ones.
  std::vector<int> offsets() const {
    std::vector<int> offs(slots_.size(), -1);
    int acc = 0;
    for (std::size_t i = 0; i < slots_.size(); ++i) {
      if (slots_[i].fixed) continue;
      offs[i] = acc;
      acc += slots_[i].var->dof();
    }
    return offs;
  }

  int total_free_dof() const {
    int acc = 0;
    for (const auto& s : slots_) {
      if (!s.fixed) acc += s.var->dof();
    }
    return acc;
  }

  /// x <- x [+] slice for every free variable.
  void apply_step(const Eigen::VectorXd& step, double scale = 1.0) {
    if (step.size() != total_free_dof()) {
      throw ContractViolation("step size does not match total free DOF");
    }
    const std::vector<int> offs = offsets();
    for (std::size_t i = 0; i < slots_.size(); ++i) {
      if (offs[i] < 0) continue;
      auto& var = *slots_[i].var;
      var.boxplus_from(var, step.segment(offs[i], var.dof()), scale);
    }
  }

  /// Replaces variable `id` with base-variable [+] scale * delta; used for
  /// finite-difference probes.
  void perturb_from(VarId id, const detail::VarBase& base,
                    Eigen::Ref<const Eigen::VectorXd> delta, double scale) {
    slots_.at(id).var->boxplus_from(base, delta, scale);
  }

  std::unique_ptr<detail::VarBase> snapshot(VarId id) const {
    return slots_.at(id).var->clone();
  }

  /// Puts a snapshot back, bit-exact.
  void restore(VarId id, std::unique_ptr<detail::VarBase> saved) {
    slots_.at(id).var = std::move(saved);
  }

 private:
  struct Slot {
    std::unique_ptr<detail::VarBase> var;
    bool fixed = false;
  };
  std::vector<Slot> slots_;
};

/// One measurement: a residual function f(X) [-] z with covariance Sigma,
/// depending on a known subset of the variables. The stored whitener W
/// satisfies r^T Sigma^-1 r = |W r|^2.
struct Term {
  std::vector<VarId> deps;
  int dim = 0;
  Eigen::MatrixXd sqrt_weight;
  std::function<Eigen::VectorXd(const VariableSet&)> residual;
};

/// Builds a term from a measurement function f (variables -> point on M),
/// a measured value z, and the measurement covariance.
template <Manifold M, class F>
Term make_term(std::vector<VarId> deps, F f, M z,
               const Eigen::Matrix<double, M::kDof, M::kDof>& sigma) {
  if (deps.empty()) throw ContractViolation("term without dependencies");
  Term term;
  term.deps = std::move(deps);
  term.dim = M::kDof;
  using Cov = Eigen::Matrix<double, M::kDof, M::kDof>;
  const Cov lower = cholesky_sqrt(sigma);
  term.sqrt_weight = lower.template triangularView<Eigen::Lower>().solve(
      Cov::Identity());
  term.residual = [f = std::move(f), z = std::move(z)](const VariableSet& vars) {
    return Eigen::VectorXd(f(vars).boxminus(z));
  };
  return term;
}

/// Same, but weighting by an information matrix (inverse covariance).
template <Manifold M, class F>
Term make_term_info(std::vector<VarId> deps, F f, M z,
                    const Eigen::Matrix<double, M::kDof, M::kDof>& info) {
  using Cov = Eigen::Matrix<double, M::kDof, M::kDof>;
  const Cov lower = cholesky_sqrt(info);
  Term term = make_term(std::move(deps), std::move(f), std::move(z),
                        Cov::Identity());
  term.sqrt_weight = lower.transpose();
  return term;
}

/// 0.5 * sum_t |W_t r_t|^2.
inline double residual_sum_of_squares(const VariableSet& vars,
                                      const std::vector<Term>& terms) {
  double rss = 0.0;
  for (const Term& t : terms) {
    rss += 0.5 * (t.sqrt_weight * t.residual(vars)).squaredNorm();
  }
  return rss;
}

/// Central-difference Jacobian of delta -> f(x [+] delta) [-] z for one term,
/// one dense block per dependency. The [-] z inside matters: on a manifold
/// measurement space it does not cancel out of the difference quotient.
inline std::vector<Eigen::MatrixXd> numeric_jacobian(const Term& term,
                                                     VariableSet& vars,
                                                     double eps = 1e-6) {
  std::vector<Eigen::MatrixXd> blocks;
  blocks.reserve(term.deps.size());
  for (VarId dep : term.deps) {
    const int d = vars.dof(dep);
    Eigen::MatrixXd block(term.dim, d);
    auto saved = vars.snapshot(dep);
    Eigen::VectorXd unit = Eigen::VectorXd::Zero(d);
    for (int k = 0; k < d; ++k) {
      unit[k] = eps;
      vars.perturb_from(dep, *saved, unit, 1.0);
      const Eigen::VectorXd plus = term.residual(vars);
      vars.perturb_from(dep, *saved, unit, -1.0);
      const Eigen::VectorXd minus = term.residual(vars);
      block.col(k) = (plus - minus) / (2.0 * eps);
      unit[k] = 0.0;
    }
    vars.restore(dep, std::move(saved));
    blocks.push_back(std::move(block));
  }
  return blocks;
}

struct NormalEquations {
  Eigen::MatrixXd dense;          // filled when built dense
  Eigen::SparseMatrix<double> sparse;  // filled when built sparse
  Eigen::VectorXd rhs;            // -J^T Sigma^-1 r
  bool is_sparse = false;
};

/// Assembles J^T Sigma^-1 J and -J^T Sigma^-1 r from whitened term blocks.
/// Sparse assembly touches only dependency blocks.
inline NormalEquations build_normal_equations(VariableSet& vars,
                                              const std::vector<Term>& terms,
                                              bool sparse, double eps = 1e-6) {
  const int n = vars.total_free_dof();
  const std::vector<int> offsets = vars.offsets();

  NormalEquations ne;
  ne.is_sparse = sparse;
  ne.rhs = Eigen::VectorXd::Zero(n);
  std::vector<Eigen::Triplet<double>> triplets;
  if (sparse) {
    ne.sparse.resize(n, n);
  } else {
    ne.dense = Eigen::MatrixXd::Zero(n, n);
  }

  for (const Term& term : terms) {
    std::vector<Eigen::MatrixXd> blocks = numeric_jacobian(term, vars, eps);
    const Eigen::VectorXd wr = term.sqrt_weight * term.residual(vars);
    for (auto& b : blocks) b = term.sqrt_weight * b;

    for (std::size_t i = 0; i < term.deps.size(); ++i) {
      const int oi = offsets[term.deps[i]];
      if (oi < 0) continue;
      ne.rhs.segment(oi, blocks[i].cols()) -= blocks[i].transpose() * wr;
      for (std::size_t j = 0; j < term.deps.size(); ++j) {
        const int oj = offsets[term.deps[j]];
        if (oj < 0) continue;
        const Eigen::MatrixXd prod = blocks[i].transpose() * blocks[j];
        if (sparse) {
          for (int c = 0; c < prod.cols(); ++c) {
            for (int r = 0; r < prod.rows(); ++r) {
              triplets.emplace_back(oi + r, oj + c, prod(r, c));
            }
          }
        } else {
          ne.dense.block(oi, oj, prod.rows(), prod.cols()) += prod;
        }
      }
    }
  }
  if (sparse) ne.sparse.setFromTriplets(triplets.begin(), triplets.end());
  return ne;
}

namespace detail {

// Dense problems up to this size use a dense factorization; larger ones go
// through the sparse block path.
inline constexpr int kDenseDofLimit = 2000;

inline Eigen::VectorXd solve_normal_equations(const NormalEquations& ne) {
  Eigen::VectorXd step;
  if (ne.is_sparse) {
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(ne.sparse);
    if (solver.info() != Eigen::Success) {
      throw RankDeficient("rank-deficient problem");
    }
    const Eigen::VectorXd d = solver.vectorD();
    if (d.size() > 0 &&
        d.cwiseAbs().minCoeff() <= 1e-12 * d.cwiseAbs().maxCoeff()) {
      throw RankDeficient("rank-deficient problem");
    }
    step = solver.solve(ne.rhs);
  } else {
    Eigen::LDLT<Eigen::MatrixXd> solver(ne.dense);
    const Eigen::VectorXd d = solver.vectorD();
    if (solver.info() != Eigen::Success ||
        (d.size() > 0 &&
         d.cwiseAbs().minCoeff() <= 1e-12 * d.cwiseAbs().maxCoeff())) {
      throw RankDeficient("rank-deficient problem");
    }
    step = solver.solve(ne.rhs);
  }
  if (!step.allFinite()) throw RankDeficient("rank-deficient problem");
  return step;
}

}  // namespace detail

struct StepResult {
  VariableSet vars;
  double rss = 0.0;
  double step_norm = 0.0;
  double lambda = 0.0;  // updated damping (LM only)
};

/// One Gauss-Newton iteration: x [+] -(J^T S^-1 J)^-1 J^T S^-1 (f(x) [-] z).
/// The refinement accumulates on the manifold, not in R^n.
inline StepResult gauss_newton_step(const VariableSet& vars,
                                    const std::vector<Term>& terms,
                                    double eps = 1e-6) {
  VariableSet work = vars;
  const bool sparse = work.total_free_dof() > detail::kDenseDofLimit;
  const NormalEquations ne = build_normal_equations(work, terms, sparse, eps);
  const Eigen::VectorXd step = detail::solve_normal_equations(ne);
  work.apply_step(step);
  const double rss = residual_sum_of_squares(work, terms);
  return {std::move(work), rss, step.norm(), 0.0};
}

/// One accepted Levenberg-Marquardt iteration. Solves with lambda-scaled
/// diagonal damping, retries with lambda * 10 until the RSS decreases, and
/// rewards an accepted step with lambda / 10.
inline StepResult levenberg_marquardt_step(const VariableSet& vars,
                                           const std::vector<Term>& terms,
                                           double lambda, double eps = 1e-6) {
  VariableSet work = vars;
  const double rss_before = residual_sum_of_squares(work, terms);
  const bool sparse = work.total_free_dof() > detail::kDenseDofLimit;
  NormalEquations ne = build_normal_equations(work, terms, sparse, eps);

  const Eigen::VectorXd diag =
      ne.is_sparse ? Eigen::VectorXd(ne.sparse.diagonal())
                   : Eigen::VectorXd(ne.dense.diagonal());
  while (true) {
    if (lambda > 1e12) throw NotConverged("LM stalled");
    NormalEquations damped = ne;
    const Eigen::VectorXd damping =
        lambda * diag.cwiseMax(1e-12);
    if (damped.is_sparse) {
      Eigen::SparseMatrix<double> d(damping.size(), damping.size());
      d.setIdentity();
      for (int i = 0; i < damping.size(); ++i) d.coeffRef(i, i) = damping[i];
      damped.sparse = ne.sparse + d;
    } else {
      damped.dense.diagonal() += damping;
    }
    Eigen::VectorXd step;
    try {
      step = detail::solve_normal_equations(damped);
    } catch (const RankDeficient&) {
      lambda *= 10.0;
      continue;
    }
    VariableSet trial = vars;
    trial.apply_step(step);
    const double rss_trial = residual_sum_of_squares(trial, terms);
    if (rss_trial < rss_before) {
      return {std::move(trial), rss_trial, step.norm(),
              std::max(lambda / 10.0, 1e-15)};
    }
    lambda *= 10.0;
  }
}

enum class Method { kGaussNewton, kLevenbergMarquardt };

struct OptimizeConfig {
  Method method = Method::kGaussNewton;
  int max_iter = 50;
  double step_tol = 1e-9;
  double rss_tol = 1e-12;  // relative RSS change
  double initial_lambda = 1e-4;
  double jacobian_eps = 1e-6;
};

struct OptimizeResult {
  VariableSet vars;
  std::vector<double> rss_trace;  // initial RSS, then one entry per iteration
};

inline OptimizeResult optimize(const VariableSet& initial,
                               const std::vector<Term>& terms,
                               const OptimizeConfig& config = {}) {
  OptimizeResult result;
  result.vars = initial;
  double rss = residual_sum_of_squares(result.vars, terms);
  result.rss_trace.push_back(rss);
  double lambda = config.initial_lambda;

  for (int it = 0; it < config.max_iter; ++it) {
    StepResult step;
    try {
      step = config.method == Method::kGaussNewton
                 ? gauss_newton_step(result.vars, terms, config.jacobian_eps)
                 : levenberg_marquardt_step(result.vars, terms, lambda,
                                            config.jacobian_eps);
    } catch (const Error& e) {
      throw Error("iteration " + std::to_string(it) + ": " + e.what());
    }
    lambda = step.lambda;
    result.vars = std::move(step.vars);
    result.rss_trace.push_back(step.rss);

    const double change = std::abs(rss - step.rss);
    const bool rss_converged = change <= config.rss_tol * std::max(rss, 1.0);
    rss = step.rss;
    if (step.step_norm < config.step_tol || rss_converged) break;
  }
  return result;
}

}  // namespace mest
