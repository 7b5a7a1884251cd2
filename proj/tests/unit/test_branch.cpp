#include <doctest.h>

#include <cmath>

#include "gelfand/branch.hpp"
#include "gelfand/errors.hpp"

using namespace gelfand;

namespace {

GelfandProblem ball_problem(int n, std::size_t nodes, double beta = 0, Nonlinearity f = Nonlinearity::exponential()) {
  auto g = make_grid(beta > 0 ? Grid::radial_stretched(0, 1, nodes, n, beta) : Grid::radial(0, 1, nodes, n));
  return GelfandProblem(CoefficientField::identity(g), BoundarySpec::ball(), std::move(f));
}

BifurcationDiagram branch(const GelfandProblem& p, double sup_max) {
  ContinuationOptions o;
  o.sup_max = sup_max;
  return continue_branch(p, o);
}

}  // namespace

TEST_SUITE("gelfand_branch") {
  TEST_CASE("minimal solutions match shooting values") {
    // sup u at lambda = 1 from high-accuracy ODE shooting
    const auto m2 = minimal_solution(ball_problem(2, 401), 1.0);
    REQUIRE(m2.status == MinimalResult::Status::converged);
    CHECK(m2.point.sup_norm == doctest::Approx(0.31669).epsilon(0.01));
    CHECK(m2.point.residual <= 1e-9);

    const auto m3 = minimal_solution(ball_problem(3, 2001, 10), 1.0);
    CHECK(m3.point.sup_norm == doctest::Approx(0.19026).epsilon(0.01));
    const auto m10 = minimal_solution(ball_problem(10, 2001, 10), 1.0);
    CHECK(m10.point.sup_norm == doctest::Approx(0.0515).epsilon(0.01));
  }

  TEST_CASE("monotone iteration is nondecreasing with shrinking increments") {
    const auto r = minimal_solution(ball_problem(2, 201), 1.5);
    REQUIRE(r.status == MinimalResult::Status::converged);
    CHECK(r.monotonicity_violation <= 1e-12);
    CHECK(r.point.u.min() >= 0);
    // eventually geometric contraction
    const auto& inc = r.increments;
    REQUIRE(inc.size() > 4);
    for (std::size_t i = inc.size() / 2; i < inc.size(); ++i) CHECK(inc[i] < inc[i - 1]);
  }

  TEST_CASE("lambda zero and divergence past the extremal value") {
    const auto p = ball_problem(2, 201);
    const auto z = minimal_solution(p, 0.0);
    CHECK(z.status == MinimalResult::Status::converged);
    CHECK(z.point.sup_norm == 0.0);
    const auto d = minimal_solution(p, 2.3);
    CHECK(d.status == MinimalResult::Status::diverged);
    CHECK_THROWS_AS(minimal_solution(p, -1.0), InvalidArgument);
  }

  TEST_CASE("minimal solution grows with lambda") {
    const auto p = ball_problem(2, 201);
    const auto rs = minimal_solutions(p, {0.5, 1.0, 1.5, 1.9}, {}, 2);
    for (std::size_t i = 1; i < rs.size(); ++i) {
      REQUIRE(rs[i].status == MinimalResult::Status::converged);
      CHECK((rs[i].point.u - rs[i - 1].point.u).min() >= -1e-12);
    }
    // threaded and serial agree
    const auto single = minimal_solution(p, 1.5);
    CHECK((single.point.u - rs[2].point.u).max_abs() == 0.0);
  }

  TEST_CASE("relaxed iteration stays below the barrier") {
    MinimalOptions o;
    o.relax_factor = 0.8;
    const auto r = minimal_solution(ball_problem(2, 201), 1.5, o);
    REQUIRE(r.status == MinimalResult::Status::converged);
    REQUIRE(r.barrier_margin.has_value());
    CHECK(*r.barrier_margin >= -1e-9);
    CHECK(*r.barrier_excess <= 1e-9);
  }

  TEST_CASE("newton refinement") {
    const auto p = ball_problem(2, 401);
    const auto m = minimal_solution(p, 1.0, {.tol = 1e-13});
    const auto again = newton_solve(p, 1.0, m.point.u);
    CHECK(again.iterations == 0);

    const auto rough = minimal_solution(p, 1.0, {.tol = 1e-4});
    const auto refined = newton_solve(p, 1.0, rough.point.u);
    CHECK(refined.iterations <= 5);
    CHECK(refined.residual <= 1e-12);

    CHECK_THROWS_AS(newton_solve(p, 2.2, m.point.u), SolverError);
  }

  TEST_CASE("n = 2 has a single fold at lambda* = 2") {
    const auto p = ball_problem(2, 401);
    const auto d = branch(p, 20);
    REQUIRE(d.fold_indices.size() == 1);
    const auto ls = estimate_lambda_star(d);
    CHECK_FALSE(ls.lower_bound);
    CHECK(ls.value == doctest::Approx(2.0).epsilon(0.01));
    CHECK(d.points[d.fold_indices[0]].sup_norm == doctest::Approx(std::log(4.0)).epsilon(0.06));
    // minimal segment ends at the fold
    CHECK(minimal_segment_end(d) == d.fold_indices[0]);
    for (const auto& pt : d.points) CHECK(pt.residual <= 1e-8);
  }

  TEST_CASE("n = 3 oscillates around lambda = 2") {
    const auto d = branch(ball_problem(3, 2001, 10), 20);
    REQUIRE(d.fold_indices.size() >= 2);
    CHECK(d.fold_lambdas[0] == doctest::Approx(3.321992).epsilon(0.002));
    CHECK(d.fold_lambdas[1] == doctest::Approx(1.664156).epsilon(0.002));
    CHECK(d.fold_lambdas[0] > 2.0);
    CHECK(d.fold_lambdas[1] < 2.0);
  }

  TEST_CASE("n = 10 branch is monotone and approaches 16") {
    const auto d = branch(ball_problem(10, 2001, 10), 20);
    CHECK(d.fold_indices.empty());
    // lambda saturates at the grid's limit; increasing up to roundoff, tangent never turns
    for (std::size_t i = 1; i < d.points.size(); ++i) {
      CHECK(d.points[i].lambda >= d.points[i - 1].lambda - 1e-10);
      CHECK(d.points[i].dlambda_ds > 0);
    }
    const auto ls = estimate_lambda_star(d);
    CHECK(ls.lower_bound);
    CHECK(ls.value == doctest::Approx(16.0).epsilon(0.005));
  }

  TEST_CASE("singular solution residual") {
    const auto uni = singular_solution_residual(10, Grid::radial(0.05, 1, 2000, 10));
    const auto geo = singular_solution_residual(10, Grid::radial_geometric(0.05, 1, 2000, 10));
    CHECK(geo.max_residual < 0.05);
    CHECK(geo.max_residual < uni.max_residual);
    CHECK(geo.boundary_value == 0.0);
    // second order: doubling resolution quarters the error
    const auto geo2 = singular_solution_residual(10, Grid::radial_geometric(0.05, 1, 3999, 10));
    CHECK(geo.max_residual / geo2.max_residual == doctest::Approx(4.0).epsilon(0.2));
    const auto uni2 = singular_solution_residual(10, Grid::radial(0.05, 1, 3999, 10));
    CHECK(uni.max_residual / uni2.max_residual == doctest::Approx(4.0).epsilon(0.2));
    const auto n3 = singular_solution_residual(3, Grid::radial_geometric(0.05, 1, 2000, 3));
    const auto n3b = singular_solution_residual(3, Grid::radial_geometric(0.05, 1, 3999, 3));
    CHECK(n3.max_residual / n3b.max_residual == doctest::Approx(4.0).epsilon(0.2));
    CHECK_THROWS_AS(singular_solution_residual(10, Grid::radial(0, 1, 100, 10)), InvalidArgument);
  }

  TEST_CASE("extremal limit") {
    const auto p = ball_problem(2, 401);
    const auto d = branch(p, 10);
    const auto rep = extremal_limit(p, d);
    CHECK_FALSE(rep.unbounded_regime);
    CHECK(rep.lambdas.size() >= 6);
    CHECK(rep.sup_norm == doctest::Approx(std::log(4.0)).epsilon(0.05));
    CHECK(rep.summable);

    const auto p10 = ball_problem(10, 1001, 10);
    const auto d10 = branch(p10, 10);
    CHECK(extremal_limit(p10, d10).unbounded_regime);

    BifurcationDiagram empty;
    CHECK_THROWS_AS(estimate_lambda_star(empty), InvalidArgument);
    CHECK_THROWS_AS(extremal_limit(p, empty), InvalidArgument);
  }

  TEST_CASE("other nonlinearities") {
    // (1+u)^2 and 1/(1-u)^2 on the unit disk
    const auto pw = minimal_solution(ball_problem(2, 201, 0, Nonlinearity::power(2)), 1.0);
    CHECK(pw.status == MinimalResult::Status::converged);
    const auto mce = minimal_solution(ball_problem(2, 201, 0, Nonlinearity::mce()), 0.5);
    CHECK(mce.status == MinimalResult::Status::converged);
    CHECK(mce.point.sup_norm < 1.0);
  }
}
