#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "ccopt/rng.hpp"

namespace ccopt {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Largest singular value; matrices here are small and dense.
inline double spectral_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  return Eigen::JacobiSVD<Matrix>(a).singularValues()(0);
}

inline double min_eigenvalue_sym(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

/// Strongly convex separable term
///   f_i(x) = x' quad x + linear' x + l1_weight * ||x||_1
/// minimized over the box [box_lower, box_upper].
struct LocalObjective {
  Matrix quad;
  Vector linear;
  double l1_weight = 0.0;
  Vector box_lower;
  Vector box_upper;

  int dim() const { return static_cast<int>(linear.size()); }

  double value(const Vector& x) const {
    return x.dot(quad * x) + linear.dot(x) + l1_weight * x.lpNorm<1>();
  }

  void validate() const {
    const int p = dim();
    if (p < 1) throw std::invalid_argument("objective: empty dimension");
    if (quad.rows() != p || quad.cols() != p)
      throw std::invalid_argument("objective: quad must be p x p");
    const double scale = std::max(1.0, quad.cwiseAbs().maxCoeff());
    if ((quad - quad.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
      throw std::invalid_argument("objective: quad must be symmetric");
    if (min_eigenvalue_sym(quad) <= 0.0)
      throw std::invalid_argument("objective: quad must be positive definite");
    if (l1_weight < 0.0) throw std::invalid_argument("objective: l1_weight must be >= 0");
    if (box_lower.size() != p || box_upper.size() != p)
      throw std::invalid_argument("objective: box bounds must have length p");
    for (int c = 0; c < p; ++c) {
      if (!std::isfinite(box_lower(c)) || !std::isfinite(box_upper(c)) ||
          box_lower(c) > box_upper(c))
        throw std::invalid_argument("objective: box bounds must be finite and ordered");
    }
  }
};

/// Convex inequality block h_i : R^p -> R^m.
struct InequalitySpec {
  enum class Kind { None, ShiftedL1, Affine };

  Kind kind = Kind::None;
  // ShiftedL1: h(x) = ||x - reference||_1 - offset  (m = 1)
  Vector reference;
  double offset = 0.0;
  // Affine: h(x) = matrix * x - rhs  (m = rows of matrix)
  Matrix matrix;
  Vector rhs;

  int rows() const {
    switch (kind) {
      case Kind::None: return 0;
      case Kind::ShiftedL1: return 1;
      case Kind::Affine: return static_cast<int>(matrix.rows());
    }
    return 0;
  }

  Vector value(const Vector& x) const {
    switch (kind) {
      case Kind::None: return Vector(0);
      case Kind::ShiftedL1: {
        Vector h(1);
        h(0) = (x - reference).lpNorm<1>() - offset;
        return h;
      }
      case Kind::Affine: return matrix * x - rhs;
    }
    return Vector(0);
  }

  // Lipschitz constant of h in the Euclidean norm.
  double lipschitz(int p) const {
    switch (kind) {
      case Kind::None: return 0.0;
      case Kind::ShiftedL1: return std::sqrt(static_cast<double>(p));
      case Kind::Affine: return spectral_norm(matrix);
    }
    return 0.0;
  }

  void validate(int p) const {
    switch (kind) {
      case Kind::None: return;
      case Kind::ShiftedL1:
        if (reference.size() != p)
          throw std::invalid_argument("inequality: reference must have length p");
        return;
      case Kind::Affine:
        if (matrix.rows() < 1 || matrix.cols() != p)
          throw std::invalid_argument("inequality: matrix must be m x p with m >= 1");
        if (rhs.size() != matrix.rows())
          throw std::invalid_argument("inequality: rhs must have length m");
        return;
    }
  }
};

/// Affine share of the global equality constraint: B_i x_i - b_i.
struct CouplingSpec {
  Matrix matrix;  // d x p
  Vector offset;  // d

  int rows() const { return static_cast<int>(matrix.rows()); }

  Vector residual(const Vector& x) const { return matrix * x - offset; }

  void validate(int p) const {
    if (matrix.rows() < 1 || matrix.cols() != p)
      throw std::invalid_argument("coupling: matrix must be d x p with d >= 1");
    if (offset.size() != matrix.rows())
      throw std::invalid_argument("coupling: offset must have length d");
  }
};

struct AgentData {
  LocalObjective objective;
  InequalitySpec inequality;
  CouplingSpec coupling;
};

struct Constants {
  double mu_f = 0.0;  // strong convexity modulus of the f_i
  double l_h = 0.0;   // Lipschitz constant of the inequality maps
  double l_g = 0.0;   // smoothness constant of each local dual function
};

inline Constants derive_constants(const std::vector<AgentData>& agents) {
  if (agents.empty()) throw std::invalid_argument("derive_constants: no agents");
  const int p = agents.front().objective.dim();
  double min_eig = std::numeric_limits<double>::infinity();
  double norm_b = 0.0;
  double l_h = 0.0;
  for (const AgentData& a : agents) {
    min_eig = std::min(min_eig, min_eigenvalue_sym(a.objective.quad));
    norm_b = std::max(norm_b, spectral_norm(a.coupling.matrix));
    l_h = std::max(l_h, a.inequality.lipschitz(p));
  }
  if (min_eig <= 0.0)
    throw std::invalid_argument("derive_constants: objectives must be strongly convex");
  Constants c;
  c.mu_f = 2.0 * min_eig;  // f has Hessian 2*quad on its smooth part
  c.l_h = l_h;
  const double sq = norm_b * norm_b + l_h * l_h;
  c.l_g = std::sqrt(2.0 / (c.mu_f * c.mu_f) * sq * std::max(norm_b * norm_b, l_h * l_h));
  return c;
}

struct ProblemInstance {
  std::vector<AgentData> agents;
  int n = 0;  // agents
  int p = 0;  // primal dimension per agent
  int d = 0;  // equality rows
  int m = 0;  // inequality rows
  Constants constants;

  // Global objective at a stacked primal point (n blocks of size p).
  double objective_value(const Vector& x) const {
    check_stacked(x);
    double f = 0.0;
    for (int i = 0; i < n; ++i) f += agents[i].objective.value(x.segment(i * p, p));
    return f;
  }

  // sum_i (B_i x_i - b_i)
  Vector equality_gap(const Vector& x) const {
    check_stacked(x);
    Vector g = Vector::Zero(d);
    for (int i = 0; i < n; ++i) g += agents[i].coupling.residual(x.segment(i * p, p));
    return g;
  }

  // sum_i h_i(x_i)
  Vector inequality_sum(const Vector& x) const {
    check_stacked(x);
    Vector h = Vector::Zero(m);
    for (int i = 0; i < n; ++i) h += agents[i].inequality.value(x.segment(i * p, p));
    return h;
  }

  void check_stacked(const Vector& x) const {
    if (x.size() != static_cast<Eigen::Index>(n) * p)
      throw std::invalid_argument("instance: stacked vector must have length n*p");
  }

  static ProblemInstance assemble(std::vector<AgentData> agents) {
    if (agents.empty()) throw std::invalid_argument("instance: no agents");
    ProblemInstance inst;
    inst.n = static_cast<int>(agents.size());
    inst.p = agents.front().objective.dim();
    inst.d = agents.front().coupling.rows();
    inst.m = agents.front().inequality.rows();
    const auto kind = agents.front().inequality.kind;
    for (const AgentData& a : agents) {
      a.objective.validate();
      a.inequality.validate(inst.p);
      a.coupling.validate(inst.p);
      if (a.objective.dim() != inst.p)
        throw std::invalid_argument("instance: all agents must share the primal dimension");
      if (a.coupling.rows() != inst.d)
        throw std::invalid_argument("instance: all agents must share the equality dimension");
      if (a.inequality.kind != kind || a.inequality.rows() != inst.m)
        throw std::invalid_argument("instance: all agents must share the inequality family");
    }
    inst.constants = derive_constants(agents);
    inst.agents = std::move(agents);
    return inst;
  }
};

namespace detail {

// Field tags for per-agent generator substreams.
enum GenTag : std::uint64_t {
  kTagQuad = 0,
  kTagLinear = 1,
  kTagBox = 2,
  kTagCoupling = 3,
  kTagIneqRef = 4,
  kTagIneqOffset = 5,
};

inline Matrix gaussian_matrix(rng::Stream& s, int rows, int cols) {
  Matrix a(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) a(r, c) = s.gaussian();
  return a;
}

// Orthogonal factor of a Gaussian matrix, with column signs fixed by the
// R diagonal so the factorization is unique.
inline Matrix random_orthogonal(rng::Stream& s, int p) {
  const Matrix g = gaussian_matrix(s, p, p);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int c = 0; c < p; ++c)
    if (r(c, c) < 0.0) q.col(c) = -q.col(c);
  return q;
}

}  // namespace detail

/// Random dense instance: ill-conditioned quadratics with an l1 term over
/// boxes, a full-rank affine coupling per agent, and a shifted l1 ball
/// inequality. kappa is the condition number of each quadratic.
inline ProblemInstance generate_instance(std::uint64_t seed, int n, int p, double kappa) {
  if (n < 2) throw std::invalid_argument("generate_instance: n must be >= 2");
  if (p < 1) throw std::invalid_argument("generate_instance: p must be >= 1");
  if (!(kappa >= 1.0)) throw std::invalid_argument("generate_instance: kappa must be >= 1");

  std::vector<AgentData> agents(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    AgentData& a = agents[static_cast<std::size_t>(i)];
    const std::uint64_t ai = static_cast<std::uint64_t>(i);

    auto qs = rng::Stream::derive(seed, {ai, detail::kTagQuad});
    const Matrix u = detail::random_orthogonal(qs, p);
    const Vector lam = Vector::LinSpaced(p, 1.0, kappa);
    Matrix quad = u * lam.asDiagonal() * u.transpose();
    quad = 0.5 * (quad + quad.transpose());
    a.objective.quad = quad;

    auto ls = rng::Stream::derive(seed, {ai, detail::kTagLinear});
    a.objective.linear = detail::gaussian_matrix(ls, p, 1);
    a.objective.l1_weight = 1.0;

    auto bs = rng::Stream::derive(seed, {ai, detail::kTagBox});
    a.objective.box_lower.resize(p);
    a.objective.box_upper.resize(p);
    for (int c = 0; c < p; ++c) a.objective.box_lower(c) = bs.uniform(-10.0, -9.0);
    for (int c = 0; c < p; ++c) a.objective.box_upper(c) = bs.uniform(9.0, 10.0);

    // Coupling must be full rank; resample with a bumped sub-seed if the
    // draw is numerically rank deficient.
    constexpr int kMaxAttempts = 8;
    bool ok = false;
    for (std::uint64_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
      auto cs = rng::Stream::derive(seed, {ai, detail::kTagCoupling, attempt});
      Matrix c = detail::gaussian_matrix(cs, p, p);
      Eigen::JacobiSVD<Matrix> svd(c);
      const auto& sv = svd.singularValues();
      if (sv(sv.size() - 1) > 1e-10 * sv(0)) {
        a.coupling.matrix = c;
        ok = true;
        break;
      }
    }
    if (!ok) throw std::runtime_error("generate_instance: coupling matrix rank deficient");
    a.coupling.offset = Vector::Zero(p);

    auto rs = rng::Stream::derive(seed, {ai, detail::kTagIneqRef});
    a.inequality.kind = InequalitySpec::Kind::ShiftedL1;
    a.inequality.reference = detail::gaussian_matrix(rs, p, 1);
    auto os = rng::Stream::derive(seed, {ai, detail::kTagIneqOffset});
    a.inequality.offset = os.uniform(1.0, 6.0);
  }
  return ProblemInstance::assemble(std::move(agents));
}

}  // namespace ccopt
