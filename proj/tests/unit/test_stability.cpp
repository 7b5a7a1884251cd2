#include <doctest.h>

#include <cmath>
#include <numbers>

#include <Eigen/SparseLU>

#include "gelfand/errors.hpp"
#include "gelfand/norms.hpp"
#include "gelfand/stability.hpp"

using namespace gelfand;

namespace {

constexpr double kJ01Squared = 5.783185962946784;  // first zero of J0, squared

GelfandProblem disk_problem(std::size_t nodes = 401) {
  auto g = make_grid(Grid::radial(0, 1, nodes, 2));
  return GelfandProblem(CoefficientField::identity(g), BoundarySpec::ball(), Nonlinearity::exponential());
}

}  // namespace

TEST_SUITE("stability") {
  TEST_CASE("eigenvalue calibration") {
    auto g1 = make_grid(Grid::radial(0, 1, 1000, 1));
    const auto op1 = assemble(CoefficientField::identity(g1),
                              BoundarySpec::radial(BoundaryKind::dirichlet, BoundaryKind::dirichlet));
    const auto e1 = principal_eigenpair(jacobi_operator(op1));
    const double pi2 = std::numbers::pi * std::numbers::pi;
    CHECK(std::abs(e1.mu1 / pi2 - 1) < 1e-3);
    CHECK(e1.lower <= e1.mu1);
    CHECK(e1.upper >= e1.mu1);
    CHECK(e1.phi.max() == doctest::Approx(1.0));
    for (auto i : op1.unknowns()) CHECK(e1.phi[i] > 0);

    const auto disk = principal_eigenpair(jacobi_operator(assemble(CoefficientField::identity(make_grid(Grid::radial(0, 1, 401, 2))),
                                                                   BoundarySpec::ball())));
    CHECK(std::abs(disk.mu1 / kJ01Squared - 1) < 5e-3);

    // polar full-chart operator: half disk eigenvalue is j_{1,1}^2
    const auto half = principal_eigenpair(jacobi_operator(assemble(CoefficientField::identity(make_grid(Grid::polar_half_disk(1, 81, 81))))));
    CHECK(half.mu1 == doctest::Approx(14.681970642123893).epsilon(5e-3));
  }

  TEST_CASE("principal eigenvalue without a sign structure") {
    // mixed second derivatives give positive off-diagonals: no Collatz-Wielandt bracket
    auto g = make_grid(Grid::polar_half_disk(1, 129, 41));
    const auto model = CoefficientModel::planar("1 + 0.04*x1", "0.03*x2", "1 - 0.04*x1", "0", "0");
    const auto op = assemble(CoefficientField::sample(g, model, 0.9, 1.1, 0.1),
                             BoundarySpec::half_disk(BoundaryKind::dirichlet));
    const auto e = principal_eigenpair(jacobi_operator(op));

    // oracle: unshifted inverse iteration, Rayleigh quotient of the converged vector
    const SparseMatrix K = -op.reduced();
    Eigen::SparseLU<SparseMatrix> lu(K);
    Eigen::VectorXd x = Eigen::VectorXd::Ones(K.rows());
    for (int k = 0; k < 400; ++k) {
      x = lu.solve(x);
      x /= x.norm();
    }
    const double oracle = x.dot(K * x);
    CHECK(e.mu1 == doctest::Approx(oracle).epsilon(1e-6));
    CHECK(e.relative_residual <= 1e-12);
    CHECK(e.phi.min() >= 0);
  }

  TEST_CASE("spectral shift identity") {
    auto g = make_grid(Grid::radial(0, 1, 500, 1));
    const auto op = assemble(CoefficientField::identity(g), BoundarySpec::radial(BoundaryKind::dirichlet, BoundaryKind::dirichlet));
    const auto base = principal_eigenpair(jacobi_operator(op));
    for (double c : {0.5, 3.7, 12.0}) {
      auto J = jacobi_operator(op);
      for (std::size_t i = 0; i < J.zero_order.size(); ++i) J.zero_order[i] = c;
      CHECK(std::abs(principal_eigenpair(J).mu1 - (base.mu1 - c)) <= 1e-12);
    }
  }

  TEST_CASE("stability classification along the n = 2 branch") {
    const auto p = disk_problem();
    const auto zero = minimal_solution(p, 0.0);
    const auto v0 = is_stable(p, zero.point);
    CHECK(v0.cls == StabilityClass::stable);
    CHECK(v0.mu1 == doctest::Approx(kJ01Squared).epsilon(5e-3));

    const auto half = minimal_solution(p, 1.0);
    CHECK(is_stable(p, half.point).mu1 > 0);

    ContinuationOptions o;
    o.sup_max = 6;
    auto d = continue_branch(p, o);
    annotate_mu1(p, d);
    REQUIRE(d.fold_indices.size() == 1);
    const auto fold = d.fold_indices[0];
    // mu1 changes sign across the fold and is nonincreasing on the minimal segment
    CHECK(d.points[fold - 1].mu1 > 0);
    CHECK(d.points[fold + 1].mu1 < 0);
    for (std::size_t i = 1; i <= fold; ++i) CHECK(d.points[i].mu1 <= d.points[i - 1].mu1 + 1e-9);
    CHECK(is_stable(p, d.points.back()).cls == StabilityClass::unstable);
  }

  TEST_CASE("quadratic form basics") {
    const auto p = disk_problem(201);
    const auto zero = minimal_solution(p, 0.0);
    const ScalarField none(p.grid_ptr());
    const auto z = stability_quadratic_form(p, zero.point, none);
    CHECK(z.lhs == 0.0);
    CHECK(z.rhs == 0.0);

    const auto xi = capella_test_function(p.grid_ptr(), 2, 0.3, 0.9, Mat2::Identity()).xi;
    const auto e = stability_quadratic_form(p, zero.point, xi);
    CHECK(e.lhs == 0.0);
    CHECK(e.rhs > 0);
    CHECK(e.rhs == doctest::Approx(weighted_dirichlet(xi, 0.0)).epsilon(1e-12));

    const auto scaled = stability_quadratic_form(p, minimal_solution(p, 1.0).point, 3.0 * xi);
    const auto plain = stability_quadratic_form(p, minimal_solution(p, 1.0).point, xi);
    CHECK(scaled.lhs == doctest::Approx(9 * plain.lhs).epsilon(1e-13));
    CHECK(scaled.rhs == doctest::Approx(9 * plain.rhs).epsilon(1e-13));

    ScalarField bad(p.grid_ptr());
    for (std::size_t i = 0; i < bad.size(); ++i) bad[i] = 1.0;
    CHECK_THROWS_AS(stability_quadratic_form(p, zero.point, bad), InvalidArgument);
  }

  TEST_CASE("quadratic form gap matches mu1") {
    const auto p = disk_problem();
    const auto pt = minimal_solution(p, 1.0).point;
    const auto v = is_stable(p, pt);
    const auto& phi = v.pair.phi;
    const auto qf = stability_quadratic_form(p, pt, phi);
    ScalarField phi2 = phi;
    for (std::size_t i = 0; i < phi2.size(); ++i) phi2[i] = phi[i] * phi[i];
    const double gap = (qf.rhs - qf.lhs) / integrate(phi2);
    CHECK(gap == doctest::Approx(v.mu1).epsilon(0.02));
  }

  TEST_CASE("capella test functions") {
    auto g = make_grid(Grid::radial(0, 1, 201, 4));
    const auto tf = capella_test_function(g, 4, 0.2, 0.6, Mat2::Identity());
    for (std::size_t i = 1; i < g->size(); ++i) {
      const double r = g->radius(i);
      CHECK(tf.xi[i] == doctest::Approx(smooth_cutoff((r - 0.2) / 0.4) / r).epsilon(1e-13));
      if (r >= 0.6) CHECK(tf.xi[i] == 0.0);
    }
    const auto flat = capella_test_function(g, 2, 0.2, 0.6, Mat2::Identity());
    for (std::size_t i = 0; i < g->size(); ++i)
      CHECK(flat.xi[i] == doctest::Approx(smooth_cutoff((g->radius(i) - 0.2) / 0.4)).epsilon(1e-12));
    CHECK_THROWS_AS(capella_test_function(g, 4, 0.6, 0.2, Mat2::Identity()), InvalidArgument);

    // anisotropic norm on a planar grid
    auto sq = make_grid(Grid::cartesian(-1, 1, 21, -1, 1, 21));
    Mat2 A0;
    A0 << 4, 0, 0, 1;
    const auto an = capella_test_function(sq, 4, 0.5, 0.9, A0, 1e-3);
    const std::size_t node = sq->index(15, 10);  // x = (0.5, 0)
    CHECK(an.xi[node] == doctest::Approx(smooth_cutoff(0.0) / 0.25));
  }

  TEST_CASE("corpus separates stable from unstable points") {
    const auto p = disk_problem();
    const auto corpus = test_function_corpus(p.op(), p.coeffs());
    REQUIRE(corpus.size() == 50);
    for (const auto& tf : corpus)
      for (std::size_t i = 0; i < tf.xi.size(); ++i)
        if (p.op().is_dirichlet(i)) CHECK(tf.xi[i] == 0.0);
    // deterministic
    const auto again = test_function_corpus(p.op(), p.coeffs());
    CHECK((again[17].xi - corpus[17].xi).max_abs() == 0.0);

    ContinuationOptions o;
    o.sup_max = 6;
    const auto d = continue_branch(p, o);
    for (const auto& pt : d.points) {
      const auto v = is_stable(p, pt);
      const auto rep = check_corpus(p, pt, corpus);
      if (v.stable())
        CHECK(rep.worst_excess <= 1e-6);
      else
        CHECK(rep.worst_excess > 0);
    }
  }

  TEST_CASE("adapted test functions") {
    const auto p = disk_problem();
    ContinuationOptions o;
    o.sup_max = 6;
    const auto d = continue_branch(p, o);
    const auto& last = d.points.back();
    REQUIRE(!is_stable(p, last).stable());
    const auto adapted = adapted_test_functions(p, last);
    CHECK(adapted.size() == 6);
    for (const auto& tf : adapted) {
      CHECK(tf.id.rfind("adapted:", 0) == 0);
      for (std::size_t i = 0; i < tf.xi.size(); ++i)
        if (p.op().is_dirichlet(i)) CHECK(tf.xi[i] == 0.0);
    }
    // Without the adapted members only the fixed corpus is scored.
    const auto corpus = test_function_corpus(p.op(), p.coeffs());
    const auto fixed = check_corpus(p, last, corpus, false);
    CHECK(fixed.checks.size() == corpus.size());
    const auto full = check_corpus(p, last, corpus);
    CHECK(full.checks.size() == corpus.size() + adapted.size());
    CHECK(full.worst_fixed_excess == doctest::Approx(fixed.worst_excess));
    CHECK(full.worst_excess > 0);
  }

  TEST_CASE("hardy threshold") {
    for (int n : {9, 10, 12}) {
      const auto rep = hardy_threshold_check(n, make_grid(Grid::radial_geometric(1e-4, 1, 2000, n)));
      CHECK(rep.stable_form == (n >= 10));
      if (n == 9) CHECK(rep.worst_ratio < -0.05);
      if (n == 12) CHECK(rep.worst_ratio > 0.1);
    }
    CHECK_THROWS_AS(hardy_threshold_check(10, make_grid(Grid::radial(0, 1, 100, 10))), InvalidArgument);
  }
}
