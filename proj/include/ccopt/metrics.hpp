#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ccopt/graph.hpp"
#include "ccopt/local_solver.hpp"
#include "ccopt/problem.hpp"
#include "ccopt/reference.hpp"

namespace ccopt {

struct TraceRecord {
  int k = 0;
  double rel_primal_error = 0.0;  // ((f(x_k) - f*) / (f(x_1) - f*))^2
  double feas_residual = 0.0;
  double consensus_error = 0.0;
  std::int64_t wall_ns = 0;
  // Debug-only extras; not part of the standard CSV schema.
  double f_value = 0.0;
  double max_inner_residual = 0.0;
  long max_inner_iterations = 0;
};

/// || sum_i (B_i x_i - b_i) || + || [sum_i h_i(x_i)]_+ ||
inline double feasibility_residual(const ProblemInstance& inst, const Vector& x) {
  double r = inst.equality_gap(x).norm();
  if (inst.m > 0) r += inst.inequality_sum(x).cwiseMax(0.0).norm();
  return r;
}

/// max_i || y_i - mean(y) ||
inline double consensus_error(const std::vector<Vector>& ys) {
  if (ys.empty()) throw std::invalid_argument("consensus_error: empty list");
  Vector mean = Vector::Zero(ys.front().size());
  for (const Vector& y : ys) {
    if (y.size() != mean.size())
      throw std::invalid_argument("consensus_error: mismatched block sizes");
    mean += y;
  }
  mean /= static_cast<double>(ys.size());
  double worst = 0.0;
  for (const Vector& y : ys) worst = std::max(worst, (y - mean).norm());
  return worst;
}

/// A-priori accuracy guarantees for a run of the accelerated engine with
/// penalty scale rho and horizon N, evaluated from the reference optimum.
struct BoundReport {
  double eps_c = 0.0;        // consensus-constraint violation bound
  double eps_p_lower = 0.0;  // bound on f* - f(x_{N+1})
  double eps_p_upper = 0.0;  // bound on f(x_{N+1}) - f*
  double xi = 0.0;           // reporting constant: 2 ||stacked dual gradients at y*||
  // Ingredients, kept for the run summary.
  double rho = 0.0;
  int horizon = 0;
  double l_g = 0.0;
  double norm_w = 0.0;
  double lambda2_w = 0.0;
  double dist_y1 = 0.0;        // || y_1 - y* || over the stacked copies
  double grad_norm = 0.0;      // || stacked dual gradients at y* ||
  double grad_wdag_norm = 0.0; // same gradients in the Laplacian-pseudoinverse seminorm
  double y_star_norm = 0.0;    // || y* || over the stacked copies
};

inline BoundReport evaluate_bounds(const ProblemInstance& inst, const Network& net,
                                   const ReferenceSolution& ref, double rho, int horizon,
                                   const Vector& y1) {
  if (!(rho > 0.0)) throw std::invalid_argument("evaluate_bounds: rho must be > 0");
  if (horizon < 1) throw std::invalid_argument("evaluate_bounds: horizon must be >= 1");
  if (inst.constants.l_g <= 0.0)
    throw std::invalid_argument("evaluate_bounds: needs l_g > 0");
  const int q = inst.d + inst.m;
  if (ref.y_star.size() != q)
    throw std::invalid_argument("evaluate_bounds: reference has wrong dual dimension");
  if (y1.size() != static_cast<Eigen::Index>(net.n) * q)
    throw std::invalid_argument("evaluate_bounds: y1 must stack n dual blocks");

  const SpectralData spec = spectral(net);

  Vector y_star_stacked(static_cast<Eigen::Index>(net.n) * q);
  for (int i = 0; i < net.n; ++i) y_star_stacked.segment(i * q, q) = ref.y_star;

  // Per-agent dual gradients at the consensus optimum.
  const double grad_tol = 1e-11;
  Vector grads(static_cast<Eigen::Index>(net.n) * q);
  {
    const DualPoint yp = DualPoint::split(ref.y_star, inst.d, inst.m);
    for (int i = 0; i < net.n; ++i) {
      AgentSolver solver(inst.agents[static_cast<std::size_t>(i)], inst.d);
      grads.segment(i * q, q) = solver.dual_gradient(solver.solve(yp, grad_tol).x);
    }
  }

  BoundReport rep;
  rep.rho = rho;
  rep.horizon = horizon;
  rep.l_g = inst.constants.l_g;
  rep.norm_w = spec.norm_w;
  rep.lambda2_w = spec.lambda2_w;
  rep.dist_y1 = (y1 - y_star_stacked).norm();
  rep.grad_norm = grads.norm();
  rep.y_star_norm = y_star_stacked.norm();
  rep.xi = 2.0 * rep.grad_norm;

  // Blockwise pseudoinverse seminorm: sum over dual coordinates c of
  // a_c' pinv(H) a_c with a_c the vector of agent gradients in coordinate c.
  double wdag_sq = 0.0;
  for (int c = 0; c < q; ++c) {
    Vector a(net.n);
    for (int i = 0; i < net.n; ++i) a(i) = grads(i * q + c);
    wdag_sq += a.dot(spec.pinv * a);
  }
  rep.grad_wdag_norm = std::sqrt(std::max(0.0, wdag_sq));

  const double nn1 = static_cast<double>(horizon) * (horizon + 1);
  const double n1 = static_cast<double>(horizon) + 1.0;
  const double dist_sq = rep.dist_y1 * rep.dist_y1;
  const double lead = (2.0 * rep.l_g / nn1 + rho * rep.norm_w / n1) * dist_sq;

  rep.eps_c = lead + 1.0 / (rho * n1 * rep.lambda2_w);
  rep.eps_p_lower =
      lead + rep.grad_wdag_norm * rep.grad_wdag_norm / (rho * n1) + rep.y_star_norm * rep.eps_c;
  rep.eps_p_upper =
      ((rep.grad_norm + rep.l_g * rep.y_star_norm) * rep.eps_c + rep.eps_c * rep.eps_c) /
      rep.l_g;
  return rep;
}

/// Least-squares slope of log(value) against log(horizon); the empirical
/// decay rate of a metric across a horizon sweep.
inline double fit_rate(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 3)
    throw std::invalid_argument("fit_rate: need at least three points");
  double sx = 0.0, sy = 0.0;
  for (const auto& [h, v] : points) {
    if (!(h > 0.0) || !(v > 0.0))
      throw std::invalid_argument("fit_rate: horizons and values must be positive");
    sx += std::log(h);
    sy += std::log(v);
  }
  const double mx = sx / static_cast<double>(points.size());
  const double my = sy / static_cast<double>(points.size());
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [h, v] : points) {
    const double dx = std::log(h) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(v) - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("fit_rate: horizons must not be identical");
  return sxy / sxx;
}

/// Fixed-schema trace: k,rel_primal_error,feas_residual,consensus_error,wall_ns
/// plus inner-solver columns in debug mode. %.17g keeps doubles bit-exact
/// on round-trip, so identical runs produce identical bytes.
inline void write_trace_csv(std::ostream& os, const std::vector<TraceRecord>& trace,
                            bool debug_columns = false) {
  os << "k,rel_primal_error,feas_residual,consensus_error,wall_ns";
  if (debug_columns) os << ",f_value,max_inner_residual,max_inner_iterations";
  os << "\n";
  char buf[256];
  for (const TraceRecord& r : trace) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%lld", r.k, r.rel_primal_error,
                  r.feas_residual, r.consensus_error, static_cast<long long>(r.wall_ns));
    os << buf;
    if (debug_columns) {
      std::snprintf(buf, sizeof(buf), ",%.17g,%.17g,%ld", r.f_value, r.max_inner_residual,
                    r.max_inner_iterations);
      os << buf;
    }
    os << "\n";
  }
}

}  // namespace ccopt
