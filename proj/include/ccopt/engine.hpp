#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "ccopt/graph.hpp"
#include "ccopt/local_solver.hpp"
#include "ccopt/metrics.hpp"
#include "ccopt/parallel.hpp"
#include "ccopt/problem.hpp"

namespace ccopt {

class EngineInvariantError : public std::logic_error {
 public:
  explicit EngineInvariantError(const std::string& what) : std::logic_error(what) {}
};

/// Horizon-indexed step sizes for the accelerated engine:
///   alpha_k = 2/(k+1)   averaging weight
///   theta_k = rho*N/k   consensus-penalty weight
///   beta_k  = rho*k/N   multiplier step
///   eta_k   = (2 l_g + rho*N*||W||)/k   proximal weight
/// theta_k * beta_k == rho^2 for every k; eta is decreasing; alpha_1 == 1.
struct Schedule {
  double rho = 0.0;
  int horizon = 0;
  double l_g = 0.0;
  double norm_w = 0.0;

  Schedule(double rho, int horizon, double l_g, double norm_w)
      : rho(rho), horizon(horizon), l_g(l_g), norm_w(norm_w) {
    if (!(rho > 0.0)) throw std::invalid_argument("schedule: rho must be > 0");
    if (horizon < 1) throw std::invalid_argument("schedule: horizon must be >= 1");
    if (l_g < 0.0) throw std::invalid_argument("schedule: l_g must be >= 0");
    if (!(norm_w > 0.0)) throw std::invalid_argument("schedule: ||W|| must be > 0");
    for (int k : {1, std::max(1, horizon / 2), horizon}) {
      if (std::abs(theta(k) * beta(k) - rho * rho) > 1e-12 * rho * rho)
        throw EngineInvariantError("schedule: theta_k * beta_k != rho^2");
      if (std::abs(alpha(k) * (k + 1) - 2.0) > 1e-12 * 2.0)
        throw EngineInvariantError("schedule: alpha_k * (k+1) != 2");
      if (k < horizon && !(eta(k + 1) < eta(k)))
        throw EngineInvariantError("schedule: eta must be decreasing");
    }
    if (alpha(1) != 1.0) throw EngineInvariantError("schedule: alpha_1 != 1");
  }

  double alpha(int k) const { return 2.0 / (k + 1.0); }
  double theta(int k) const { return rho * horizon / k; }
  double beta(int k) const { return rho * k / horizon; }
  double eta(int k) const { return (2.0 * l_g + rho * horizon * norm_w) / k; }
};

inline double default_rho(const SpectralData& spec, int horizon) {
  return 1.0 / (spec.norm_w * horizon);
}

// Inner solves tighten quadratically with the outer iteration unless a
// fixed override is given.
inline double inner_tolerance(int k, double override_tol) {
  if (override_tol > 0.0) return override_tol;
  return std::min(1e-8, 1e-4 / (static_cast<double>(k) * k));
}

struct RunOptions {
  double rho = 0.0;
  int horizon = 0;
  int workers = 1;
  bool literal_lambda_update = false;  // reuse the pre-step disagreement in the multiplier update
  double inner_tol_override = 0.0;
  double f_star = std::numeric_limits<double>::quiet_NaN();
  bool collect_timing = false;  // false keeps wall_ns at 0 so traces are byte-stable
  std::function<void(const TraceRecord&)> on_iteration;
};

struct RunResult {
  Vector x_final;  // stacked, length n*p
  std::vector<TraceRecord> trace;
  std::vector<Vector> y;       // per-agent multipliers after the last step
  std::vector<Vector> y_hat;   // per-agent averaged multipliers
  std::vector<Vector> lambda;  // per-agent consensus multipliers
};

/// Distributed accelerated dual ascent on the consensus reformulation of
///   min sum_i f_i(x_i)  s.t.  sum_i B_i x_i = sum_i b_i,  sum_i h_i(x_i) <= 0.
/// Each agent keeps a multiplier copy y_i; one synchronous round runs
///   ytilde = (1-alpha_k) yhat + alpha_k y
///   x_i    = argmin_x L_i(x, ytilde_i)                     (in parallel)
///   y+     = P( y - (grad + theta_k W y - lambda) / eta_k )
///   yhat+  = (1-alpha_k) yhat + alpha_k y+
///   lambda+= lambda - beta_k W y+
/// where grad_i = -[B_i x_i - b_i; h_i(x_i)] and W acts blockwise through
/// the graph Laplacian (two neighbor exchanges per round; the literal
/// variant reuses W y and needs only one).
class AcceleratedEngine {
 public:
  AcceleratedEngine(const ProblemInstance& inst, const Network& net, RunOptions options)
      : inst_(inst),
        net_(net),
        opt_(std::move(options)),
        spec_(spectral(net)),
        sched_(opt_.rho, opt_.horizon, inst.constants.l_g, spec_.norm_w),
        q_(inst.d + inst.m) {
    if (net.n != inst.n)
      throw std::invalid_argument("engine: network and instance disagree on n");
    if (opt_.workers < 1) throw std::invalid_argument("engine: workers must be >= 1");
    y_.assign(static_cast<std::size_t>(inst.n), Vector::Zero(q_));
    y_hat_ = y_;
    lambda_ = y_;
    y_tilde_ = y_;
    y_next_ = y_;
    grad_.assign(static_cast<std::size_t>(inst.n), Vector::Zero(q_));
    t_ = grad_;
    t2_ = grad_;
    x_.assign(static_cast<std::size_t>(inst.n), Vector::Zero(inst.p));
    inner_residual_.assign(static_cast<std::size_t>(inst.n), 0.0);
    inner_iterations_.assign(static_cast<std::size_t>(inst.n), 0);
    solvers_.reserve(static_cast<std::size_t>(inst.n));
    recovery_.reserve(static_cast<std::size_t>(inst.n));
    for (const AgentData& a : inst.agents) {
      solvers_.emplace_back(a, inst.d);
      recovery_.emplace_back(a, inst.d);
    }
  }

  int k() const { return k_; }
  const Schedule& schedule() const { return sched_; }
  const std::vector<Vector>& y() const { return y_; }
  const std::vector<Vector>& y_hat() const { return y_hat_; }
  const std::vector<Vector>& lambda() const { return lambda_; }
  const std::vector<Vector>& subproblem_solutions() const { return x_; }

  /// One synchronous round at the current iteration index.
  void step() {
    const int k = k_;
    if (k > sched_.horizon) throw std::logic_error("engine: stepping past the horizon");
    const double a = sched_.alpha(k);
    const double eta = sched_.eta(k);
    const double th = sched_.theta(k);
    const double be = sched_.beta(k);
    const double tol = inner_tolerance(k, opt_.inner_tol_override);

    for (std::size_t i = 0; i < y_.size(); ++i)
      y_tilde_[i] = (1.0 - a) * y_hat_[i] + a * y_[i];

    parallel_for(inst_.n, opt_.workers, [&](int i) {
      const auto ui = static_cast<std::size_t>(i);
      const DualPoint yp = DualPoint::split(y_tilde_[ui], inst_.d, inst_.m);
      const InnerSolveReport rep = solvers_[ui].solve(yp, tol);
      x_[ui] = rep.x;
      grad_[ui] = solvers_[ui].dual_gradient(rep.x);
      inner_residual_[ui] = rep.residual;
      inner_iterations_[ui] = rep.iterations;
    });

    laplacian_into(y_, t_);  // first exchange: disagreement at the current iterate
    for (std::size_t i = 0; i < y_.size(); ++i) {
      // grad + theta*(W y) is the linearized consensus-penalized dual
      // gradient; lambda is subtracted as the running constraint multiplier.
      y_next_[i] = project_dual_cone(
          y_[i] - (grad_[i] - lambda_[i] + th * t_[i]) / eta, inst_.m);
      y_hat_[i] = (1.0 - a) * y_hat_[i] + a * y_next_[i];
    }

    if (opt_.literal_lambda_update) {
      for (std::size_t i = 0; i < y_.size(); ++i) lambda_[i] -= be * t_[i];
    } else {
      laplacian_into(y_next_, t2_);  // second exchange: disagreement after the step
      for (std::size_t i = 0; i < y_.size(); ++i) lambda_[i] -= be * t2_[i];
    }
    y_.swap(y_next_);
    ++k_;
    check_invariants();
  }

  /// Per-agent subproblem solutions at the averaged multipliers, stacked.
  /// Uses a solver bank separate from the one driving the iteration so the
  /// recovered iterates never perturb warm starts on the main path.
  Vector recover_primal(double tol) {
    Vector x(static_cast<Eigen::Index>(inst_.n) * inst_.p);
    parallel_for(inst_.n, opt_.workers, [&](int i) {
      const auto ui = static_cast<std::size_t>(i);
      const DualPoint yp = DualPoint::split(y_hat_[ui], inst_.d, inst_.m);
      const InnerSolveReport rep = recovery_[ui].solve(yp, tol);
      x.segment(i * inst_.p, inst_.p) = rep.x;
      inner_residual_[ui] = std::max(inner_residual_[ui], rep.residual);
      inner_iterations_[ui] = std::max(inner_iterations_[ui], rep.iterations);
    });
    return x;
  }

  /// Runs the full horizon, tracing the metrics of the would-be output
  /// after every round. Row k holds the recovered iterate at yhat_{k+1},
  /// i.e. exactly what a horizon-k run would return.
  RunResult run() {
    static constexpr double kRecoveryTol = 1e-10;
    RunResult out;
    out.trace.reserve(static_cast<std::size_t>(sched_.horizon));

    Vector x = recover_primal(kRecoveryTol);
    const double f1 = inst_.objective_value(x);
    const double gap1 = f1 - opt_.f_star;

    for (int k = 1; k <= sched_.horizon; ++k) {
      const auto start = std::chrono::steady_clock::now();
      std::fill(inner_residual_.begin(), inner_residual_.end(), 0.0);
      std::fill(inner_iterations_.begin(), inner_iterations_.end(), 0L);
      step();
      x = recover_primal(kRecoveryTol);

      TraceRecord rec;
      rec.k = k;
      rec.f_value = inst_.objective_value(x);
      const double gap = rec.f_value - opt_.f_star;
      rec.rel_primal_error =
          gap1 != 0.0 ? (gap / gap1) * (gap / gap1)
                      : (gap == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
      rec.feas_residual = feasibility_residual(inst_, x);
      rec.consensus_error = consensus_error(y_);
      if (opt_.collect_timing)
        rec.wall_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                          std::chrono::steady_clock::now() - start)
                          .count();
      for (std::size_t i = 0; i < inner_residual_.size(); ++i) {
        rec.max_inner_residual = std::max(rec.max_inner_residual, inner_residual_[i]);
        rec.max_inner_iterations = std::max(rec.max_inner_iterations, inner_iterations_[i]);
      }
      if (opt_.on_iteration) opt_.on_iteration(rec);
      out.trace.push_back(rec);
    }

    out.x_final = std::move(x);
    out.y = y_;
    out.y_hat = y_hat_;
    out.lambda = lambda_;
    return out;
  }

 private:
  void laplacian_into(const std::vector<Vector>& src, std::vector<Vector>& dst) {
    for (Vector& v : dst) v.setZero();
    for (const Edge& e : net_.edges) {
      const auto ui = static_cast<std::size_t>(e.i);
      const auto uj = static_cast<std::size_t>(e.j);
      diff_ = src[ui] - src[uj];
      dst[ui] += e.weight * diff_;
      dst[uj] -= e.weight * diff_;
    }
  }

  // Cheap structural checks after every round: the consensus multipliers
  // must sum to (floating-point) zero and every projected copy must keep
  // its inequality block nonnegative.
  void check_invariants() const {
    Vector sum = Vector::Zero(q_);
    double scale = 1.0;
    for (const Vector& l : lambda_) {
      sum += l;
      scale = std::max(scale, l.lpNorm<Eigen::Infinity>());
    }
    if (sum.lpNorm<Eigen::Infinity>() > 1e-9 * scale)
      throw EngineInvariantError("engine: consensus multipliers no longer sum to zero");
    if (inst_.m > 0) {
      for (std::size_t i = 0; i < y_.size(); ++i) {
        if (y_[i].tail(inst_.m).minCoeff() < 0.0 ||
            y_hat_[i].tail(inst_.m).minCoeff() < 0.0)
          throw EngineInvariantError("engine: negative inequality multiplier");
      }
    }
  }

  const ProblemInstance& inst_;
  const Network& net_;
  RunOptions opt_;
  SpectralData spec_;
  Schedule sched_;
  int q_;
  int k_ = 1;
  std::vector<Vector> y_, y_hat_, lambda_, y_tilde_, y_next_, grad_, t_, t2_;
  std::vector<Vector> x_;
  Vector diff_;
  std::vector<double> inner_residual_;
  std::vector<long> inner_iterations_;
  std::vector<AgentSolver> solvers_;
  std::vector<AgentSolver> recovery_;
};

inline RunResult run_accelerated(const ProblemInstance& inst, const Network& net,
                                 RunOptions options) {
  return AcceleratedEngine(inst, net, std::move(options)).run();
}

/// Symmetric doubly stochastic mixing weights: 1/(1 + max degree) on each
/// edge, remainder on the diagonal.
inline Matrix metropolis_weights(const Network& net) {
  const std::vector<int> deg = net.degrees();
  Matrix p = Matrix::Zero(net.n, net.n);
  for (const Edge& e : net.edges) {
    const double w =
        1.0 / (1.0 + std::max(deg[static_cast<std::size_t>(e.i)],
                              deg[static_cast<std::size_t>(e.j)]));
    p(e.i, e.j) = w;
    p(e.j, e.i) = w;
  }
  for (int i = 0; i < net.n; ++i) p(i, i) = 1.0 - p.row(i).sum();
  return p;
}

struct SubgradientOptions {
  double step_c = 1.0;  // diminishing step c/sqrt(k)
  int horizon = 0;
  int workers = 1;
  double inner_tol_override = 0.0;
  double f_star = std::numeric_limits<double>::quiet_NaN();
  bool collect_timing = false;
  std::function<void(const TraceRecord&)> on_iteration;
};

/// Distributed dual subgradient baseline: Metropolis mixing of the
/// multiplier copies followed by a projected step along the local dual
/// gradient, with the running average of the subproblem solutions as the
/// primal output. Shares the initialization (y = 0) and the trace schema
/// with the accelerated engine.
inline RunResult run_subgradient(const ProblemInstance& inst, const Network& net,
                                 SubgradientOptions opt) {
  if (net.n != inst.n)
    throw std::invalid_argument("subgradient: network and instance disagree on n");
  if (opt.horizon < 1) throw std::invalid_argument("subgradient: horizon must be >= 1");
  if (!(opt.step_c > 0.0)) throw std::invalid_argument("subgradient: step_c must be > 0");
  if (opt.workers < 1) throw std::invalid_argument("subgradient: workers must be >= 1");

  const int q = inst.d + inst.m;
  const Matrix mix = metropolis_weights(net);
  std::vector<AgentSolver> solvers;
  solvers.reserve(static_cast<std::size_t>(inst.n));
  for (const AgentData& a : inst.agents) solvers.emplace_back(a, inst.d);

  std::vector<Vector> y(static_cast<std::size_t>(inst.n), Vector::Zero(q));
  std::vector<Vector> ymix = y;
  std::vector<Vector> grad(static_cast<std::size_t>(inst.n), Vector::Zero(q));
  std::vector<Vector> xk(static_cast<std::size_t>(inst.n), Vector::Zero(inst.p));
  std::vector<Vector> xbar = xk;
  std::vector<double> inner_residual(static_cast<std::size_t>(inst.n), 0.0);
  std::vector<long> inner_iterations(static_cast<std::size_t>(inst.n), 0);

  // Normalization iterate: the common y = 0 start, solved tightly.
  double f1;
  {
    std::vector<AgentSolver> init = solvers;
    Vector x0(static_cast<Eigen::Index>(inst.n) * inst.p);
    const DualPoint zero = DualPoint::split(Vector::Zero(q), inst.d, inst.m);
    for (int i = 0; i < inst.n; ++i)
      x0.segment(i * inst.p, inst.p) = init[static_cast<std::size_t>(i)].solve(zero, 1e-10).x;
    f1 = inst.objective_value(x0);
  }
  const double gap1 = f1 - opt.f_star;

  RunResult out;
  out.trace.reserve(static_cast<std::size_t>(opt.horizon));
  Vector xbar_stacked(static_cast<Eigen::Index>(inst.n) * inst.p);

  for (int k = 1; k <= opt.horizon; ++k) {
    const auto start = std::chrono::steady_clock::now();
    const double tol = inner_tolerance(k, opt.inner_tol_override);
    parallel_for(inst.n, opt.workers, [&](int i) {
      const auto ui = static_cast<std::size_t>(i);
      const DualPoint yp = DualPoint::split(y[ui], inst.d, inst.m);
      const InnerSolveReport rep = solvers[ui].solve(yp, tol);
      xk[ui] = rep.x;
      grad[ui] = solvers[ui].dual_gradient(rep.x);
      inner_residual[ui] = rep.residual;
      inner_iterations[ui] = rep.iterations;
    });

    for (std::size_t i = 0; i < xbar.size(); ++i)
      xbar[i] = (static_cast<double>(k - 1) * xbar[i] + xk[i]) / static_cast<double>(k);

    for (int i = 0; i < inst.n; ++i) {
      ymix[static_cast<std::size_t>(i)].setZero();
      for (int j = 0; j < inst.n; ++j) {
        const double w = mix(i, j);
        if (w != 0.0) ymix[static_cast<std::size_t>(i)] += w * y[static_cast<std::size_t>(j)];
      }
    }
    const double step = opt.step_c / std::sqrt(static_cast<double>(k));
    for (std::size_t i = 0; i < y.size(); ++i)
      y[i] = project_dual_cone(ymix[i] - step * grad[i], inst.m);

    for (int i = 0; i < inst.n; ++i) xbar_stacked.segment(i * inst.p, inst.p) = xbar[static_cast<std::size_t>(i)];
    TraceRecord rec;
    rec.k = k;
    rec.f_value = inst.objective_value(xbar_stacked);
    const double gap = rec.f_value - opt.f_star;
    rec.rel_primal_error =
        gap1 != 0.0 ? (gap / gap1) * (gap / gap1)
                    : (gap == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
    rec.feas_residual = feasibility_residual(inst, xbar_stacked);
    rec.consensus_error = consensus_error(y);
    if (opt.collect_timing)
      rec.wall_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                        std::chrono::steady_clock::now() - start)
                        .count();
    for (std::size_t i = 0; i < inner_residual.size(); ++i) {
      rec.max_inner_residual = std::max(rec.max_inner_residual, inner_residual[i]);
      rec.max_inner_iterations = std::max(rec.max_inner_iterations, inner_iterations[i]);
    }
    if (opt.on_iteration) opt.on_iteration(rec);
    out.trace.push_back(rec);
  }

  out.x_final = xbar_stacked;
  out.y = y;
  out.y_hat = y;
  out.lambda.assign(static_cast<std::size_t>(inst.n), Vector::Zero(q));
  return out;
}

}  // namespace ccopt
