#include <Eigen/Dense>
#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "ccopt/local_solver.hpp"
#include "ccopt/problem.hpp"
#include "ccopt/reference.hpp"

using ccopt::AgentData;
using ccopt::AgentSolver;
using ccopt::DualPoint;
using ccopt::Matrix;
using ccopt::ProblemInstance;
using ccopt::ReferenceSolution;
using ccopt::Vector;

namespace {

// Two scalar agents with objectives (x - 1)^2 and (x - 2)^2 (modulo constant
// offsets) coupled by x_1 + x_2 = 0. The optimum is x* = (-1/2, 1/2) with
// multiplier mu* = 3 and model objective value -1/2.
ProblemInstance hand_instance() {
  std::vector<AgentData> agents(2);
  for (int i = 0; i < 2; ++i) {
    AgentData& a = agents[static_cast<std::size_t>(i)];
    a.objective.quad = Matrix::Identity(1, 1);
    a.objective.linear = Vector::Constant(1, -2.0 * (i + 1));
    a.objective.box_lower = Vector::Constant(1, -10.0);
    a.objective.box_upper = Vector::Constant(1, 10.0);
    a.coupling.matrix = Matrix::Identity(1, 1);
    a.coupling.offset = Vector::Zero(1);
  }
  return ProblemInstance::assemble(std::move(agents));
}

double sum_dual_value(const ProblemInstance& inst, const Vector& y_star) {
  const DualPoint y = DualPoint::split(y_star, inst.d, inst.m);
  double total = 0.0;
  for (const AgentData& a : inst.agents) {
    AgentSolver s(a, inst.d);
    total += s.dual_value(y, 1e-12);
  }
  return total;
}

}  // namespace

TEST_CASE("decoupled instance solves in place", "[reference]") {
  // Zero coupling, no inequality: the dual is flat and the reference just
  // minimizes each local objective.
  std::vector<AgentData> agents(2);
  for (auto& a : agents) {
    a.objective.quad = Matrix::Identity(1, 1);
    a.objective.linear = Vector::Zero(1);
    a.objective.box_lower = Vector::Constant(1, -1.0);
    a.objective.box_upper = Vector::Constant(1, 1.0);
    a.coupling.matrix = Matrix::Zero(1, 1);
    a.coupling.offset = Vector::Zero(1);
  }
  const ReferenceSolution ref = ccopt::solve_reference(ProblemInstance::assemble(agents), 1e-10);
  CHECK(ref.x_star.norm() <= 1e-9);
  CHECK(ref.f_star == Catch::Approx(0.0).margin(1e-12));
  CHECK(ref.grad_norm_at_optimum == 0.0);
}

TEST_CASE("reference recovers the hand-solved coupled optimum", "[reference]") {
  const ProblemInstance inst = hand_instance();
  const ReferenceSolution ref = ccopt::solve_reference(inst, 1e-10);

  REQUIRE(ref.y_star.size() == 1);
  CHECK(ref.y_star(0) == Catch::Approx(3.0).margin(1e-7));
  CHECK(ref.x_star(0) == Catch::Approx(-0.5).margin(1e-7));
  CHECK(ref.x_star(1) == Catch::Approx(0.5).margin(1e-7));
  CHECK(ref.f_star == Catch::Approx(-0.5).margin(1e-7));
  CHECK(ref.tol == 1e-10);

  // Recovered point satisfies the coupling to solver accuracy.
  CHECK(inst.equality_gap(ref.x_star).norm() <= 1e-7);
}

TEST_CASE("grid oracle agrees on the hand-solved instance", "[reference]") {
  const ProblemInstance inst = hand_instance();
  const ccopt::GridOracleResult grid = ccopt::grid_reference(inst);
  CHECK(grid.penalized == Catch::Approx(-0.5).margin(1e-6));
  CHECK(grid.x(0) == Catch::Approx(-0.5).margin(1e-4));
  CHECK(grid.x(1) == Catch::Approx(0.5).margin(1e-4));
  CHECK(grid.feas_residual <= 1e-9);
  CHECK(grid.penalized >= grid.objective - 1e-12);
}

TEST_CASE("dual solve and grid refinement agree on random instances", "[reference]") {
  for (std::uint64_t seed : {7ull, 11ull}) {
    const ProblemInstance inst = ccopt::generate_instance(seed, 3, 2, 10.0);
    const double tol = 1e-9;
    const ReferenceSolution ref = ccopt::solve_reference(inst, tol);
    const ccopt::GridOracleResult grid = ccopt::grid_reference(inst);
    CHECK(std::abs(ref.f_star - grid.penalized) <= 10.0 * tol * (1.0 + std::abs(ref.f_star)));
  }
}

TEST_CASE("optimality conditions hold at the reference solution", "[reference]") {
  const ProblemInstance inst = ccopt::generate_instance(7, 3, 2, 10.0);
  const ReferenceSolution ref = ccopt::solve_reference(inst, 1e-9);

  // Primal feasibility of the recovered point.
  CHECK(inst.equality_gap(ref.x_star).norm() <= 1e-6);
  const Vector hsum = inst.inequality_sum(ref.x_star);
  CHECK(hsum.cwiseMax(0.0).norm() <= 1e-6);

  // Multiplier sign and complementary slackness.
  const DualPoint y = DualPoint::split(ref.y_star, inst.d, inst.m);
  CHECK(y.delta_nonnegative());
  CHECK(std::abs(y.delta.dot(hsum)) <= 1e-6);

  // Strong duality: the dual optimum equals -f*.
  const double gap = std::abs(sum_dual_value(inst, ref.y_star) + ref.f_star);
  CHECK(gap <= 1e-6 * (1.0 + std::abs(ref.f_star)));
}

TEST_CASE("reference solve is deterministic", "[reference]") {
  const ProblemInstance inst = ccopt::generate_instance(11, 3, 2, 10.0);
  const ReferenceSolution a = ccopt::solve_reference(inst, 1e-8);
  const ReferenceSolution b = ccopt::solve_reference(inst, 1e-8);
  CHECK((a.y_star - b.y_star).norm() == 0.0);
  CHECK((a.x_star - b.x_star).norm() == 0.0);
  CHECK(a.f_star == b.f_star);
}

TEST_CASE("reference solve reports its failures", "[reference]") {
  const ProblemInstance inst = ccopt::generate_instance(7, 3, 2, 10.0);
  CHECK_THROWS_AS(ccopt::solve_reference(inst, 1e-14, 3), ccopt::SolveError);
  CHECK_THROWS_AS(ccopt::solve_reference(inst, 0.0), std::invalid_argument);
}

TEST_CASE("grid oracle rejects unusable requests", "[reference]") {
  const ProblemInstance big = ccopt::generate_instance(1, 4, 2, 10.0);
  CHECK_THROWS_AS(ccopt::grid_reference(big), std::invalid_argument);

  const ProblemInstance small = hand_instance();
  CHECK_THROWS_AS(ccopt::grid_reference(small, 1000.0, 4), std::invalid_argument);
  CHECK_THROWS_AS(ccopt::grid_reference(small, 1000.0, 1), std::invalid_argument);
}
