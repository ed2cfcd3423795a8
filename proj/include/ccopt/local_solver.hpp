#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "ccopt/problem.hpp"

namespace ccopt {

class SolveError : public std::runtime_error {
 public:
  SolveError(const std::string& what, double residual, long iterations)
      : std::runtime_error(what), residual(residual), iterations(iterations) {}
  double residual;
  long iterations;
};

/// Multiplier pair (mu for the equality rows, delta >= 0 for the
/// inequality rows), stored stacked as [mu; delta] where convenient.
struct DualPoint {
  Vector mu;
  Vector delta;

  int dim() const { return static_cast<int>(mu.size() + delta.size()); }

  Vector stacked() const {
    Vector v(dim());
    v << mu, delta;
    return v;
  }

  static DualPoint split(const Vector& v, int d, int m) {
    if (v.size() != d + m)
      throw std::invalid_argument("dual point: stacked length must be d + m");
    DualPoint y;
    y.mu = v.head(d);
    y.delta = v.tail(m);
    return y;
  }

  bool delta_nonnegative() const { return delta.size() == 0 || delta.minCoeff() >= 0.0; }
};

/// Euclidean projection onto the multiplier cone R^d x R+^m for a stacked
/// [mu; delta] vector: clamps the trailing m entries at zero.
inline Vector project_dual_cone(Vector v, int m) {
  if (m > 0) v.tail(m) = v.tail(m).cwiseMax(0.0);
  return v;
}

/// Exact minimizer over [lo, hi] of
///   (z - v)^2 / (2 t) + w1 |z| + w2 |z - r|.
/// The objective is 1-D convex piecewise quadratic, so the constrained
/// minimizer is the clamped unconstrained one; that sits either at a kink
/// (0 or r) or at a stationary point of one linear-sign regime.
inline double scalar_prox(double v, double t, double w1, double w2, double r,
                          double lo, double hi) {
  if (!(t > 0.0)) throw std::invalid_argument("scalar_prox: t must be > 0");
  if (w1 < 0.0 || w2 < 0.0) throw std::invalid_argument("scalar_prox: weights must be >= 0");
  if (lo > hi) throw std::invalid_argument("scalar_prox: empty interval");

  const auto q = [&](double z) {
    return (z - v) * (z - v) / (2.0 * t) + w1 * std::abs(z) + w2 * std::abs(z - r);
  };
  const auto deriv = [&](double z, double side) {
    // side = -1 gives the left derivative, +1 the right derivative.
    double dv = (z - v) / t;
    dv += w1 * (z > 0.0 ? 1.0 : (z < 0.0 ? -1.0 : side));
    dv += w2 * (z > r ? 1.0 : (z < r ? -1.0 : side));
    return dv;
  };

  double best = std::numeric_limits<double>::quiet_NaN();
  double best_q = std::numeric_limits<double>::infinity();
  const auto consider = [&](double z) {
    const double c = std::clamp(z, lo, hi);
    const double qc = q(c);
    if (qc < best_q) {
      best_q = qc;
      best = c;
    }
  };

  if (w1 > 0.0 && deriv(0.0, -1.0) <= 0.0 && deriv(0.0, 1.0) >= 0.0) consider(0.0);
  if (w2 > 0.0 && deriv(r, -1.0) <= 0.0 && deriv(r, 1.0) >= 0.0) consider(r);
  for (double s1 : {-1.0, 1.0}) {
    for (double s2 : {-1.0, 1.0}) {
      const double z = v - t * (w1 * s1 + w2 * s2);
      const bool ok1 = w1 == 0.0 || (s1 > 0.0 ? z >= 0.0 : z <= 0.0);
      const bool ok2 = w2 == 0.0 || (s2 > 0.0 ? z >= r : z <= r);
      if (ok1 && ok2) consider(z);
    }
  }
  if (!std::isfinite(best)) consider(v);  // unreachable for valid inputs
  return best;
}

struct InnerSolveReport {
  Vector x;
  double residual = 0.0;
  long iterations = 0;
};

/// Solves the per-agent Lagrangian subproblem
///   min_x  x'Ax + c(y)'x + w1 ||x||_1 + delta ||x - r||_1   over the box,
/// with c(y) folding in the multiplier-weighted affine terms. Accelerated
/// proximal gradient with a function-value restart; the restart keeps the
/// composite objective non-increasing. Termination is on the proximal
/// fixed-point residual ||x - T(x)|| / tau <= tol.
class AgentSolver {
 public:
  AgentSolver(const AgentData& agent, int d)
      : agent_(agent), d_(d), m_(agent.inequality.rows()) {
    agent_.objective.validate();
    agent_.inequality.validate(agent_.objective.dim());
    agent_.coupling.validate(agent_.objective.dim());
    if (agent_.coupling.rows() != d)
      throw std::invalid_argument("agent solver: coupling rows mismatch");
    norm_a_ = spectral_norm(agent_.objective.quad);
    tau_ = 1.0 / (2.0 * norm_a_);
    warm_ = clamp_to_box(Vector::Zero(agent_.objective.dim()));
  }

  int primal_dim() const { return agent_.objective.dim(); }
  int dual_dim() const { return d_ + m_; }
  const AgentData& data() const { return agent_; }
  const Vector& warm_start() const { return warm_; }
  void reset_warm_start() { warm_ = clamp_to_box(Vector::Zero(primal_dim())); }

  // Warm-started: seeds from the previous solution and caches the result.
  InnerSolveReport solve(const DualPoint& y, double tol) {
    InnerSolveReport rep = solve_from(warm_, y, tol);
    warm_ = rep.x;
    return rep;
  }

  InnerSolveReport solve_from(const Vector& x0, const DualPoint& y, double tol) const {
    check_dual(y);
    if (!(tol > 0.0)) throw std::invalid_argument("agent solver: tol must be > 0");
    if (!y.delta_nonnegative())
      throw std::invalid_argument("agent solver: delta must be nonnegative");

    const Vector c = smooth_linear(y);
    double w2 = 0.0;
    const bool shifted = agent_.inequality.kind == InequalitySpec::Kind::ShiftedL1;
    if (shifted) w2 = y.delta(0);

    const auto& obj = agent_.objective;
    const auto grad = [&](const Vector& x) -> Vector {
      return 2.0 * (obj.quad * x) + c;
    };
    const auto value = [&](const Vector& x) {
      double val = x.dot(obj.quad * x) + c.dot(x) + obj.l1_weight * x.lpNorm<1>();
      if (shifted) val += w2 * (x - agent_.inequality.reference).lpNorm<1>();
      return val;
    };
    const auto prox_step = [&](const Vector& x) -> Vector {
      const Vector u = x - tau_ * grad(x);
      return prox(u, w2);
    };

    constexpr long kMaxIterations = 200000;
    Vector x = clamp_to_box(x0);
    double fx = value(x);
    Vector z = x;
    double momentum = 1.0;
    double res = std::numeric_limits<double>::infinity();

    for (long it = 1; it <= kMaxIterations; ++it) {
      Vector xn = prox(z - tau_ * grad(z), w2);
      double fn = value(xn);
      if (fn > fx) {  // accelerated step overshot: plain descent step from x
        xn = prox_step(x);
        fn = value(xn);
        momentum = 1.0;
      }
      res = (xn - prox_step(xn)).norm() / tau_;
      if (res <= tol) return {xn, res, it};

      const double next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
      z = xn + ((momentum - 1.0) / next) * (xn - x);
      momentum = next;
      x = std::move(xn);
      fx = fn;
    }
    throw SolveError("agent solver: iteration cap exceeded (residual " +
                         std::to_string(res) + ", tol " + std::to_string(tol) + ")",
                     res, kMaxIterations);
  }

  // -[B x - b; h(x)], the gradient of the local dual function at the
  // subproblem minimizer x.
  Vector dual_gradient(const Vector& x) const {
    Vector g(dual_dim());
    g.head(d_) = -agent_.coupling.residual(x);
    if (m_ > 0) g.tail(m_) = -agent_.inequality.value(x);
    return g;
  }

  double lagrangian(const Vector& x, const DualPoint& y) const {
    check_dual(y);
    double val = agent_.objective.value(x) + y.mu.dot(agent_.coupling.residual(x));
    if (m_ > 0) val += y.delta.dot(agent_.inequality.value(x));
    return val;
  }

  // g_i(y) = -min_x L_i(x, y), evaluated through the warm-started solve.
  double dual_value(const DualPoint& y, double tol) {
    const InnerSolveReport rep = solve(y, tol);
    return -lagrangian(rep.x, y);
  }

 private:
  void check_dual(const DualPoint& y) const {
    if (y.mu.size() != d_ || y.delta.size() != m_)
      throw std::invalid_argument("agent solver: dual point has wrong shape");
  }

  Vector smooth_linear(const DualPoint& y) const {
    Vector c = agent_.objective.linear + agent_.coupling.matrix.transpose() * y.mu;
    if (agent_.inequality.kind == InequalitySpec::Kind::Affine)
      c += agent_.inequality.matrix.transpose() * y.delta;
    return c;
  }

  Vector clamp_to_box(const Vector& x) const {
    return x.cwiseMax(agent_.objective.box_lower).cwiseMin(agent_.objective.box_upper);
  }

  Vector prox(const Vector& u, double w2) const {
    const auto& obj = agent_.objective;
    Vector out(u.size());
    for (Eigen::Index cidx = 0; cidx < u.size(); ++cidx) {
      const double r =
          agent_.inequality.kind == InequalitySpec::Kind::ShiftedL1
              ? agent_.inequality.reference(cidx)
              : 0.0;
      out(cidx) = scalar_prox(u(cidx), tau_, obj.l1_weight, w2, r, obj.box_lower(cidx),
                              obj.box_upper(cidx));
    }
    return out;
  }

  AgentData agent_;
  int d_;
  int m_;
  double norm_a_ = 0.0;
  double tau_ = 0.0;
  Vector warm_;
};

}  // namespace ccopt
