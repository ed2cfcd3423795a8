#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "ccopt/local_solver.hpp"
#include "ccopt/problem.hpp"

namespace ccopt {

/// Ground truth for one instance: the single-copy dual optimum, the primal
/// point it recovers, and the optimal value.
struct ReferenceSolution {
  Vector x_star;     // stacked, length n*p
  Vector y_star;     // single copy, length d+m
  double f_star = 0.0;
  double grad_norm_at_optimum = 0.0;  // norm of the stacked per-agent dual gradients at y*
  double tol = 0.0;
};

namespace detail {

struct DualEval {
  double value = 0.0;  // sum_i g_i(y)
  Vector gradient;     // sum_i grad g_i(y)
};

class SingleCopyDual {
 public:
  SingleCopyDual(const ProblemInstance& inst, double inner_tol)
      : inst_(inst), inner_tol_(inner_tol) {
    solvers_.reserve(static_cast<std::size_t>(inst.n));
    for (const AgentData& a : inst.agents) solvers_.emplace_back(a, inst.d);
  }

  DualEval eval(const Vector& y) {
    const DualPoint yp = DualPoint::split(y, inst_.d, inst_.m);
    DualEval out;
    out.gradient = Vector::Zero(inst_.d + inst_.m);
    for (AgentSolver& s : solvers_) {
      const InnerSolveReport rep = s.solve(yp, inner_tol_);
      out.value += -s.lagrangian(rep.x, yp);
      out.gradient += s.dual_gradient(rep.x);
    }
    return out;
  }

  // Per-agent minimizers at y, stacked.
  Vector recover(const Vector& y, double tol) {
    const DualPoint yp = DualPoint::split(y, inst_.d, inst_.m);
    Vector x(static_cast<Eigen::Index>(inst_.n) * inst_.p);
    for (int i = 0; i < inst_.n; ++i)
      x.segment(i * inst_.p, inst_.p) = solvers_[static_cast<std::size_t>(i)].solve(yp, tol).x;
    return x;
  }

  // Stacked per-agent dual gradients at y (n blocks of d+m).
  Vector stacked_gradients(const Vector& y, double tol) {
    const DualPoint yp = DualPoint::split(y, inst_.d, inst_.m);
    Vector g(static_cast<Eigen::Index>(inst_.n) * (inst_.d + inst_.m));
    for (int i = 0; i < inst_.n; ++i) {
      AgentSolver& s = solvers_[static_cast<std::size_t>(i)];
      g.segment(i * (inst_.d + inst_.m), inst_.d + inst_.m) =
          s.dual_gradient(s.solve(yp, tol).x);
    }
    return g;
  }

 private:
  const ProblemInstance& inst_;
  double inner_tol_;
  std::vector<AgentSolver> solvers_;
};

}  // namespace detail

/// Minimizes the single-copy dual sum_i g_i(y) over R^d x R+^m with an
/// accelerated projected-gradient loop (function-value restarts, step
/// 1/(n*l_g)) and recovers the primal point from the optimal multipliers.
/// Terminates on the projected-gradient residual; throws SolveError if the
/// iteration cap is hit first.
inline ReferenceSolution solve_reference(const ProblemInstance& inst, double tol,
                                         long max_iterations = 200000) {
  if (!(tol > 0.0)) throw std::invalid_argument("solve_reference: tol must be > 0");
  const double l_g = inst.constants.l_g;
  const double inner_tol = std::max(1e-13, std::min(1e-10, 0.01 * tol));
  detail::SingleCopyDual dual(inst, inner_tol);
  const int q = inst.d + inst.m;

  const double step = l_g > 0.0 ? 1.0 / (inst.n * l_g) : 1.0;
  const auto project = [&](Vector v) { return project_dual_cone(std::move(v), inst.m); };
  const auto residual_at = [&](const Vector& y, const Vector& grad) {
    return (y - project(y - step * grad)).norm() / step;
  };

  Vector y = Vector::Zero(q);
  detail::DualEval cur = dual.eval(y);
  double res = residual_at(y, cur.gradient);
  Vector z = y;
  double momentum = 1.0;

  long it = 0;
  while (res > tol) {
    if (++it > max_iterations)
      throw SolveError("solve_reference: iteration cap exceeded (residual " +
                           std::to_string(res) + ")",
                       res, max_iterations);
    const detail::DualEval at_z = dual.eval(z);
    Vector yn = project(z - step * at_z.gradient);
    detail::DualEval next = dual.eval(yn);
    if (next.value > cur.value) {  // restart from the last accepted point
      yn = project(y - step * cur.gradient);
      next = dual.eval(yn);
      momentum = 1.0;
    }
    res = residual_at(yn, next.gradient);
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
    z = project(yn + ((momentum - 1.0) / tn) * (yn - y));
    momentum = tn;
    y = std::move(yn);
    cur = next;
  }

  ReferenceSolution ref;
  ref.y_star = y;
  ref.tol = tol;
  ref.x_star = dual.recover(y, std::max(1e-13, std::min(1e-11, 0.1 * inner_tol)));
  ref.f_star = inst.objective_value(ref.x_star);
  ref.grad_norm_at_optimum = dual.stacked_gradients(y, inner_tol).norm();

  // Strong duality at the recovered pair; a large gap means the dual loop
  // stopped short or the recovery is inconsistent.
  const double gap = std::abs(dual.eval(y).value + ref.f_star);
  if (gap > 1e-4 * (1.0 + std::abs(ref.f_star)))
    throw SolveError("solve_reference: duality gap " + std::to_string(gap), gap, it);
  return ref;
}

/// Derivative-free cross-check for tiny instances (n*p <= 6): adaptive
/// full-factorial grid refinement over the box, recentering on the
/// incumbent and shrinking each round. Lattice points are projected onto
/// the affine equality manifold before evaluation (a norm penalty on the
/// equality would carve a two-sided valley the lattice cannot track), so
/// only the one-sided terms are penalized: f(x) + penalty*(||[ineq]+|| +
/// box excursion). Each round ends with 1-D grid line searches along an
/// orthonormal kernel basis of the stacked coupling map, which keeps the
/// incumbent from lagging in ill-conditioned directions. The penalty is
/// exact once it dominates the multiplier norms, so the optimal penalized
/// value equals f*.
struct GridOracleResult {
  Vector x;
  double objective = 0.0;      // f(x)
  double penalized = 0.0;      // f(x) + penalty * feasibility residual
  double feas_residual = 0.0;
};

inline GridOracleResult grid_reference(const ProblemInstance& inst, double penalty = 1000.0,
                                       int points_per_dim = 7, int rounds = 48,
                                       double shrink = 0.5) {
  const int dims = inst.n * inst.p;
  if (dims > 6)
    throw std::invalid_argument("grid_reference: limited to n*p <= 6");
  if (points_per_dim < 3 || points_per_dim % 2 == 0)
    throw std::invalid_argument("grid_reference: points_per_dim must be odd and >= 3");

  // Flatten agent data once so the point loop below does raw arithmetic
  // with no Eigen temporaries.
  const int n = inst.n, p = inst.p, d = inst.d, m = inst.m;
  std::vector<double> lo(static_cast<std::size_t>(dims)), hi(static_cast<std::size_t>(dims));
  std::vector<double> quad, lin, w1, cpl, cofs, hmat, hrhs, href, hofs;
  for (int i = 0; i < n; ++i) {
    const AgentData& a = inst.agents[static_cast<std::size_t>(i)];
    for (int c = 0; c < p; ++c) {
      lo[static_cast<std::size_t>(i * p + c)] = a.objective.box_lower(c);
      hi[static_cast<std::size_t>(i * p + c)] = a.objective.box_upper(c);
      lin.push_back(a.objective.linear(c));
    }
    for (int r = 0; r < p; ++r)
      for (int c = 0; c < p; ++c) quad.push_back(a.objective.quad(r, c));
    w1.push_back(a.objective.l1_weight);
    for (int r = 0; r < d; ++r) {
      for (int c = 0; c < p; ++c) cpl.push_back(a.coupling.matrix(r, c));
      cofs.push_back(a.coupling.offset(r));
    }
    if (a.inequality.kind == InequalitySpec::Kind::ShiftedL1) {
      for (int c = 0; c < p; ++c) href.push_back(a.inequality.reference(c));
      hofs.push_back(a.inequality.offset);
    } else if (a.inequality.kind == InequalitySpec::Kind::Affine) {
      for (int r = 0; r < m; ++r) {
        for (int c = 0; c < p; ++c) hmat.push_back(a.inequality.matrix(r, c));
        hrhs.push_back(a.inequality.rhs(r));
      }
    }
  }
  const auto kind = inst.agents.front().inequality.kind;

  Vector x(dims);
  std::vector<double> eq(static_cast<std::size_t>(d)), iq(static_cast<std::size_t>(m));
  const auto evaluate = [&](const Vector& pt) {
    double f = 0.0;
    std::fill(eq.begin(), eq.end(), 0.0);
    std::fill(iq.begin(), iq.end(), 0.0);
    for (int i = 0; i < n; ++i) {
      const double* xi = pt.data() + i * p;
      const double* q = quad.data() + static_cast<std::ptrdiff_t>(i) * p * p;
      for (int r = 0; r < p; ++r) {
        double row = 0.0;
        for (int c = 0; c < p; ++c) row += q[r * p + c] * xi[c];
        f += xi[r] * row + lin[static_cast<std::size_t>(i * p + r)] * xi[r] +
             w1[static_cast<std::size_t>(i)] * std::abs(xi[r]);
      }
      const double* b = cpl.data() + static_cast<std::ptrdiff_t>(i) * d * p;
      for (int r = 0; r < d; ++r) {
        double row = -cofs[static_cast<std::size_t>(i * d + r)];
        for (int c = 0; c < p; ++c) row += b[r * p + c] * xi[c];
        eq[static_cast<std::size_t>(r)] += row;
      }
      if (kind == InequalitySpec::Kind::ShiftedL1) {
        double h = -hofs[static_cast<std::size_t>(i)];
        for (int c = 0; c < p; ++c)
          h += std::abs(xi[c] - href[static_cast<std::size_t>(i * p + c)]);
        iq[0] += h;
      } else if (kind == InequalitySpec::Kind::Affine) {
        const double* g = hmat.data() + static_cast<std::ptrdiff_t>(i) * m * p;
        for (int r = 0; r < m; ++r) {
          double row = -hrhs[static_cast<std::size_t>(i * m + r)];
          for (int c = 0; c < p; ++c) row += g[r * p + c] * xi[c];
          iq[static_cast<std::size_t>(r)] += row;
        }
      }
    }
    double eq_sq = 0.0, iq_sq = 0.0, box = 0.0;
    for (double v : eq) eq_sq += v * v;
    for (double v : iq) iq_sq += std::max(0.0, v) * std::max(0.0, v);
    for (int c = 0; c < dims; ++c)
      box += std::max(0.0, lo[static_cast<std::size_t>(c)] - pt(c)) +
             std::max(0.0, pt(c) - hi[static_cast<std::size_t>(c)]);
    const double feas = std::sqrt(eq_sq) + std::sqrt(iq_sq);
    return std::pair<double, double>(f + penalty * (feas + box), feas);
  };

  // Projector onto the equality manifold {x : sum_i C_i x_i = sum_i c_i} and
  // an orthonormal basis of its direction space, both rank-safe.
  Matrix cstack = Matrix::Zero(d, dims);
  Vector ctot = Vector::Zero(d);
  for (int i = 0; i < n; ++i) {
    cstack.block(0, i * p, d, p) = inst.agents[static_cast<std::size_t>(i)].coupling.matrix;
    ctot += inst.agents[static_cast<std::size_t>(i)].coupling.offset;
  }
  Eigen::JacobiSVD<Matrix> svd(cstack, Eigen::ComputeFullU | Eigen::ComputeFullV);
  svd.setThreshold(1e-12);
  const auto rank = svd.rank();
  Matrix pinv = Matrix::Zero(dims, d);
  for (Eigen::Index r = 0; r < rank; ++r)
    pinv += svd.matrixV().col(r) * svd.matrixU().col(r).transpose() / svd.singularValues()(r);
  const Matrix proj = Matrix::Identity(dims, dims) -
                      svd.matrixV().leftCols(rank) * svd.matrixV().leftCols(rank).transpose();
  const Matrix kernel = svd.matrixV().rightCols(dims - rank);
  const Vector shift = pinv * ctot;

  Vector center(dims), halfw(dims);
  for (int c = 0; c < dims; ++c) {
    center(c) = 0.5 * (lo[static_cast<std::size_t>(c)] + hi[static_cast<std::size_t>(c)]);
    halfw(c) = 0.5 * (hi[static_cast<std::size_t>(c)] - lo[static_cast<std::size_t>(c)]);
  }

  GridOracleResult best;
  best.x = center;
  best.penalized = std::numeric_limits<double>::infinity();

  Vector probe(dims);
  const auto consider = [&](const Vector& pt) {
    const auto [pen, feas] = evaluate(pt);
    if (pen < best.penalized) {
      best.penalized = pen;
      best.feas_residual = feas;
      best.x = pt;
    }
  };

  // 1-D adaptive grid refinement along an on-manifold direction.
  const auto line_search = [&](const Vector& dir, double scale) {
    const Vector base = best.x;
    double t0 = 0.0;
    for (double s = scale; s > 1e-14 * (1.0 + scale); s *= 0.4) {
      double tbest = t0;
      for (int k = 0; k <= 10; ++k) {
        const double t = t0 + s * (-1.0 + 0.2 * k);
        probe = base + t * dir;
        const double before = best.penalized;
        consider(probe);
        if (best.penalized < before) tbest = t;
      }
      t0 = tbest;
    }
  };

  std::vector<std::vector<double>> axis(static_cast<std::size_t>(dims));
  std::vector<int> idx(static_cast<std::size_t>(dims));
  for (int round = 0; round < rounds; ++round) {
    for (int c = 0; c < dims; ++c) {
      auto& ax = axis[static_cast<std::size_t>(c)];
      ax.assign(static_cast<std::size_t>(points_per_dim), 0.0);
      for (int k = 0; k < points_per_dim; ++k) {
        const double frac = -1.0 + 2.0 * k / (points_per_dim - 1);
        ax[static_cast<std::size_t>(k)] = std::clamp(center(c) + frac * halfw(c),
                                                     lo[static_cast<std::size_t>(c)],
                                                     hi[static_cast<std::size_t>(c)]);
      }
    }
    std::fill(idx.begin(), idx.end(), 0);
    for (;;) {
      for (int c = 0; c < dims; ++c) x(c) = axis[static_cast<std::size_t>(c)][static_cast<std::size_t>(idx[static_cast<std::size_t>(c)])];
      probe.noalias() = proj * x;
      probe += shift;
      consider(probe);
      int c = 0;
      while (c < dims && ++idx[static_cast<std::size_t>(c)] == points_per_dim) {
        idx[static_cast<std::size_t>(c)] = 0;
        ++c;
      }
      if (c == dims) break;
    }
    // Coordinate sweeps along a fixed basis stall in diagonal valleys, so the
    // polish also searches pairwise diagonals and repeats while it improves.
    std::vector<Vector> dirs;
    for (Eigen::Index c = 0; c < kernel.cols(); ++c) dirs.push_back(kernel.col(c));
    for (Eigen::Index a = 0; a < kernel.cols(); ++a)
      for (Eigen::Index b = a + 1; b < kernel.cols(); ++b) {
        dirs.push_back((kernel.col(a) + kernel.col(b)).normalized());
        dirs.push_back((kernel.col(a) - kernel.col(b)).normalized());
      }
    const double scale = 2.0 * halfw.maxCoeff();
    for (int pass = 0; pass < 6; ++pass) {
      const double before = best.penalized;
      for (const Vector& dir : dirs) line_search(dir, scale);
      if (!(best.penalized < before - 1e-15 * (1.0 + std::abs(before)))) break;
    }
    center = best.x;
    halfw *= shrink;
  }
  best.objective = inst.objective_value(best.x);
  return best;
}

}  // namespace ccopt
