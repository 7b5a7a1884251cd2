#include <doctest.h>

#include <cmath>

#include "gelfand/coefficients.hpp"
#include "gelfand/discrete_operator.hpp"
#include "gelfand/errors.hpp"
#include "gelfand/numerics.hpp"

using namespace gelfand;

namespace {

double max_interior(const ScalarField& f, const DiscreteOperator& op, const std::function<double(const Point&)>& exact,
                    double skip_radius = -1) {
  double e = 0;
  for (std::size_t p = 0; p < f.size(); ++p) {
    if (op.is_dirichlet(p) || f.grid().radius(p) <= skip_radius) continue;
    e = std::max(e, std::abs(f[p] - exact(f.grid().position(p))));
  }
  return e;
}

}  // namespace

TEST_SUITE("coefficients_op") {
  TEST_CASE("ellipticity certification") {
    auto sq = make_grid(Grid::cartesian(0, 1, 11, 0, 1, 11));
    const auto id = validate_ellipticity(CoefficientField::identity(sq));
    CHECK(id.pass);
    CHECK(id.min_eigenvalue == 1.0);
    CHECK(id.max_eigenvalue == 1.0);

    const auto diag = CoefficientField::sample(sq, CoefficientModel::planar("1", "0", "4", "0", "0"), 1, 4, 0);
    const auto rd = validate_ellipticity(diag);
    CHECK(rd.pass);
    CHECK(rd.min_eigenvalue == doctest::Approx(1));
    CHECK(rd.max_eigenvalue == doctest::Approx(4));

    const auto lin = CoefficientField::sample(sq, CoefficientModel::planar("1 + 0.1*x1", "0", "1", "0", "0"), 1, 1.1, 0.1);
    const auto rl = validate_ellipticity(lin);
    CHECK(rl.pass);
    CHECK(rl.min_eigenvalue == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(rl.max_eigenvalue == doctest::Approx(1.1).epsilon(1e-14));
    CHECK(sq->position(rl.worst_max_node)[0] == doctest::Approx(1.0));
    CHECK(rl.eps_measured == doctest::Approx(0.1).epsilon(1e-9));
    CHECK(rl.eps_pass);

    const auto tight = CoefficientField::sample(sq, CoefficientModel::planar("1 + 0.1*x1", "0", "1", "0", "0"), 1, 1.05, 0.1);
    CHECK_FALSE(validate_ellipticity(tight).pass);

    std::vector<Mat2> A(sq->size(), Mat2::Identity());
    A[7](0, 1) = 0.3;
    const CoefficientField asym(sq, A, std::vector<Vec2>(sq->size(), Vec2::Zero()), 0.5, 2, 0);
    CHECK_THROWS_AS(validate_ellipticity(asym), InvalidArgument);
  }

  TEST_CASE("divergence-form drift") {
    auto sq = make_grid(Grid::cartesian(0, 1, 21, 0, 1, 21));
    const auto c = CoefficientField::sample(sq, CoefficientModel::planar("2", "0.3", "1", "sin(x1)", "x2"), 1, 3, 2);
    const auto bh = to_divergence_form(c);
    for (std::size_t p = 0; p < sq->size(); ++p) {
      CHECK(bh(p, 0) == c.b(p)(0));
      CHECK(bh(p, 1) == c.b(p)(1));
    }
    const auto zero = to_divergence_form(CoefficientField::identity(sq));
    for (std::size_t p = 0; p < sq->size(); ++p) CHECK(zero(p, 0) == 0.0);

    const auto v = CoefficientField::sample(sq, CoefficientModel::planar("1 + 0.2*x1", "0", "1", "0", "0"), 1, 1.2, 0.2);
    const auto bv = to_divergence_form(v);
    for (std::size_t p = 0; p < sq->size(); ++p) {
      CHECK(std::abs(bv(p, 0) + 0.2) < 1e-10);
      CHECK(std::abs(bv(p, 1)) < 1e-10);
    }
  }

  TEST_CASE("divergence form re-expansion") {
    auto err = [](std::size_t n) {
      auto g = make_grid(Grid::cartesian(0, 1, n, 0, 1, n));
      const auto c = CoefficientField::sample(
          g, CoefficientModel::planar("1 + 0.3*x1*x2", "0.1*sin(x1)", "1 + 0.2*x2^2", "x1", "-x2"), 0.5, 2, 2);
      const auto u = ScalarField::sample(g, [](const Point& x) { return std::sin(x[0]) * std::exp(x[1]); });
      const auto du = gradient(u);
      const auto H = hessian(u);
      const auto bh = to_divergence_form(c);
      ScalarField f0(g), f1(g);
      for (std::size_t p = 0; p < g->size(); ++p) {
        const Mat2& A = c.A(p);
        f0[p] = A(0, 0) * du(p, 0) + A(0, 1) * du(p, 1);
        f1[p] = A(1, 0) * du(p, 0) + A(1, 1) * du(p, 1);
      }
      const auto d0 = gradient(f0), d1 = gradient(f1);
      double e = 0;
      for (std::size_t p = 0; p < g->size(); ++p) {
        const auto [i, j] = g->multi_index(p);
        if (i < 2 || j < 2 || i + 2 >= n || j + 2 >= n) continue;
        const Mat2& A = c.A(p);
        const double lhs = d0(p, 0) + d1(p, 1) + bh(p, 0) * du(p, 0) + bh(p, 1) * du(p, 1);
        double rhs = c.b(p)(0) * du(p, 0) + c.b(p)(1) * du(p, 1);
        for (int r = 0; r < 2; ++r)
          for (int s = 0; s < 2; ++s) rhs += A(r, s) * H(p, r, s);
        e = std::max(e, std::abs(lhs - rhs));
      }
      return e;
    };
    const double e1 = err(21), e2 = err(41);
    CHECK(e1 < 1e-2);
    CHECK(std::log2(e1 / e2) > 1.8);
  }

  TEST_CASE("anorm") {
    CHECK(anorm(Eigen::Vector2d(3, 4), Eigen::Matrix2d::Identity()) == doctest::Approx(5));
    Eigen::Matrix2d A;
    A << 2, 0.5, 0.5, 3;
    CHECK(anorm(Eigen::Vector2d::Zero(), A) == 0.0);
    CHECK(anorm(Eigen::Vector2d(1, 1), Eigen::Vector2d(2, 8).asDiagonal().toDenseMatrix()) == doctest::Approx(std::sqrt(10.0)));
    Eigen::Matrix2d bad;
    bad << 1, 2, 2, 1;
    CHECK_THROWS_AS(anorm(Eigen::Vector2d(1, 0), bad), InvalidArgument);

    // c0^{1/2}|p| <= |p|_A <= C0^{1/2}|p| on sampled coefficients.
    auto g = make_grid(Grid::cartesian(0, 1, 9, 0, 1, 9));
    const auto c = CoefficientField::sample(g, CoefficientModel::planar("1 + 0.5*x1", "0.1", "1.5", "0", "0"), 0.9, 2.0, 1);
    const auto rep = validate_ellipticity(c);
    for (std::size_t p = 0; p < g->size(); ++p) {
      for (double t = 0; t < 6.3; t += 0.7) {
        const Eigen::Vector2d q(std::cos(t), 2 * std::sin(t));
        const double n = anorm(q, c.A(p));
        CHECK(n >= std::sqrt(rep.min_eigenvalue) * q.norm() * (1 - 1e-12));
        CHECK(n <= std::sqrt(rep.max_eigenvalue) * q.norm() * (1 + 1e-12));
      }
    }
  }

  TEST_CASE("assembly on radial grids") {
    auto g1 = make_grid(Grid::radial(0, 1, 51, 1));
    const auto op1 = assemble(CoefficientField::identity(g1));
    const auto v1 = ScalarField::sample(g1, [](const Point& x) { return x[0] * (1 - x[0]); });
    CHECK(max_interior(apply(op1, v1), op1, [](const Point&) { return -2.0; }) < 1e-8);

    auto g3 = make_grid(Grid::radial(0, 1, 101, 3));
    const auto op3 = assemble(CoefficientField::identity(g3), BoundarySpec::ball());
    const auto v3 = ScalarField::sample(g3, [](const Point& x) { return x[0] * x[0]; });
    CHECK(max_interior(apply(op3, v3), op3, [](const Point&) { return 6.0; }) < 1e-6);
    CHECK_FALSE(op3.is_dirichlet(0));
    CHECK(op3.is_dirichlet(100));
  }

  TEST_CASE("assembly on cartesian grids") {
    auto g = make_grid(Grid::cartesian(0, 1, 11, 0, 1, 11));
    const auto c = CoefficientField::sample(g, CoefficientModel::planar("1", "0", "1", "1", "0"), 1, 1, 1);
    const auto op = assemble(c);
    const auto v = ScalarField::sample(g, [](const Point& x) { return x[0]; });
    CHECK(max_interior(apply(op, v), op, [](const Point&) { return 1.0; }) < 1e-8);
    CHECK(op.upwinded() == 0);
  }

  TEST_CASE("polar assembly matches the cartesian operator") {
    const std::string a11 = "2 + 0.3*x1", a12 = "0.4*x2", a22 = "1 + 0.2*x1*x2", b1 = "x2", b2 = "1 - x1";
    const auto model = CoefficientModel::planar(a11, a12, a22, b1, b2);
    auto exact = [&](const Point& x) {
      // u = x1^2 x2 + sin(x1 + 2 x2)
      const double s = std::sin(x[0] + 2 * x[1]), cs = std::cos(x[0] + 2 * x[1]);
      const double u11 = 2 * x[1] - s, u12 = 2 * x[0] - 2 * s, u22 = -4 * s;
      const double u1 = 2 * x[0] * x[1] + cs, u2 = x[0] * x[0] + 2 * cs;
      const Mat2 A = model.A(x);
      const Vec2 b = model.b(x);
      return A(0, 0) * u11 + 2 * A(0, 1) * u12 + A(1, 1) * u22 + b(0) * u1 + b(1) * u2;
    };
    auto err = [&](std::size_t n) {
      auto g = make_grid(Grid::polar_half_disk(1, n, 2 * n));
      const auto op = assemble(CoefficientField::sample(g, model, 0.5, 3, 2));
      const auto u = ScalarField::sample(g, [](const Point& x) { return x[0] * x[0] * x[1] + std::sin(x[0] + 2 * x[1]); });
      return max_interior(apply(op, u), op, exact, 0.2);
    };
    const double e1 = err(21), e2 = err(41);
    CHECK(e1 < 0.05);
    CHECK(std::log2(e1 / e2) > 1.8);
  }

  TEST_CASE("neumann faces") {
    // u = cos(pi x) has zero slope at both ends: the ghost rows reproduce -pi^2 cos(pi x).
    auto g = make_grid(Grid::cartesian(0, 1, 81, 0, 1, 5));
    BoundarySpec bc;
    bc.faces = {BoundaryKind::neumann, BoundaryKind::neumann, BoundaryKind::dirichlet, BoundaryKind::dirichlet};
    const auto op = assemble(CoefficientField::identity(g), bc);
    const auto u = ScalarField::sample(g, [](const Point& x) { return std::cos(kPi * x[0]); });
    const auto Lu = apply(op, u);
    CHECK_FALSE(op.is_dirichlet(g->index(0, 2)));
    CHECK(Lu[g->index(0, 2)] == doctest::Approx(-kPi * kPi).epsilon(1e-3));
    CHECK(Lu[g->index(80, 2)] == doctest::Approx(kPi * kPi).epsilon(1e-3));
    CHECK(op.is_dirichlet(g->index(0, 0)));
  }

  TEST_CASE("apply") {
    auto g = make_grid(Grid::radial(0, 1, 201, 1));
    const auto op = assemble(CoefficientField::identity(g));
    CHECK(apply(op, ScalarField(g)).max_abs() == 0.0);
    const auto s = ScalarField::sample(g, [](const Point& x) { return std::sin(kPi * x[0]); });
    const auto Ls = apply(op, s);
    CHECK(max_interior(Ls, op, [](const Point& x) { return -kPi * kPi * std::sin(kPi * x[0]); }) < 1e-3);
    const auto w = ScalarField::sample(g, [](const Point& x) { return std::exp(x[0]); });
    const auto lhs = apply(op, s + w);
    const auto rhs = apply(op, s) + apply(op, w);
    for (std::size_t p = 0; p < g->size(); ++p) CHECK(std::abs(lhs[p] - rhs[p]) < 1e-13 * (1 + std::abs(rhs[p])) * 1e4);
    CHECK_THROWS_AS(apply(op, ScalarField(make_grid(Grid::radial(0, 1, 11, 1)))), InvalidArgument);
  }

  TEST_CASE("linearity of apply to rounding") {
    auto g = make_grid(Grid::radial(0, 1, 21, 1));
    const auto op = assemble(CoefficientField::identity(g));
    const auto s = ScalarField::sample(g, [](const Point& x) { return std::sin(3 * x[0]); });
    const auto w = ScalarField::sample(g, [](const Point& x) { return x[0] * x[0]; });
    const auto d = apply(op, s + w) - apply(op, s) - apply(op, w);
    CHECK(d.max_abs() < 1e-13 * 400 * 4);
  }

  TEST_CASE("discrete maximum principle") {
    auto g = make_grid(Grid::polar_half_disk(1, 31, 41));
    const auto op = assemble(CoefficientField::identity(g));
    const LinearSolver lu(op.reduced());
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(op.unknown_count()));
    for (Eigen::Index k = 0; k < rhs.size(); ++k) rhs[k] = std::abs(std::sin(0.37 * static_cast<double>(k)));
    const Eigen::VectorXd x = lu.solve(-rhs);
    CHECK(x.minCoeff() >= -1e-10);
  }

  TEST_CASE("upwind fallback") {
    auto g = make_grid(Grid::cartesian(0, 1, 11, 0, 1, 11));
    const auto c = CoefficientField::sample(g, CoefficientModel::planar("1", "0", "1", "100", "0"), 1, 1, 100);
    const auto op = assemble(c);
    CHECK(op.upwinded() > 0);
    const auto v = ScalarField::sample(g, [](const Point& x) { return x[0]; });
    CHECK(max_interior(apply(op, v), op, [](const Point&) { return 100.0; }) < 1e-8);
  }

  TEST_CASE("rescaling") {
    auto g = make_grid(Grid::cartesian(-1, 1, 41, -1, 1, 41));
    const auto model = CoefficientModel::planar("1 + 0.05*x1", "0", "1", "0.1*x2", "0");
    const auto c = CoefficientField::sample(g, model, 0.9, 1.1, 0.2);
    const auto same = rescale_operator(c, 1.0);
    for (std::size_t p = 0; p < g->size(); ++p) {
      CHECK((same.A(p) - c.A(p)).norm() < 1e-14);
      CHECK((same.b(p) - c.b(p)).norm() < 1e-14);
    }
    const auto id = rescale_operator(CoefficientField::identity(g), 2.0);
    for (std::size_t p = 0; p < id.grid().size(); ++p) {
      CHECK(id.A(p)(0, 0) == doctest::Approx(0.25));
      CHECK(id.A(p)(1, 1) == doctest::Approx(0.25));
      CHECK(id.b(p).norm() == 0.0);
    }
    CHECK_THROWS_AS(rescale_operator(c, 0.5), InvalidArgument);
    CHECK_THROWS_AS(rescale_operator(c, 2.0, make_grid(Grid::cartesian(-1, 1, 5, -1, 1, 5))), InvalidArgument);

    // (L v)(tau x) = (L^tau v(tau .))(x).
    auto invariance = [&](std::size_t n) {
      auto fine = make_grid(Grid::cartesian(-1, 1, n, -1, 1, n));
      const double tau = 1.05;
      const auto cm = CoefficientField::sample(fine, CoefficientModel::planar("1 + 0.05*x1", "0", "1", "0", "0"), 0.9, 1.1, 0.1);
      auto small = make_grid(Grid::cartesian(-0.9, 0.9, n, -0.9, 0.9, n));
      const auto ct = rescale_operator(cm, tau, small);
      const auto op = assemble(ct);
      const auto vt = ScalarField::sample(small, [&](const Point& x) { return std::sin(tau * x[0]); });
      const auto lhs = apply(op, vt);
      double e = 0;
      for (std::size_t p = 0; p < small->size(); ++p) {
        if (op.is_dirichlet(p)) continue;
        const auto x = small->position(p);
        const double X = tau * x[0];
        e = std::max(e, std::abs(lhs[p] + (1 + 0.05 * X) * std::sin(X)));
      }
      return e;
    };
    const double e1 = invariance(41), e2 = invariance(81);
    CHECK(e1 < 1e-2);
    CHECK(std::log2(e1 / e2) > 1.7);

    // Rescaling twice equals one rescaling by the product.
    const auto twice = rescale_operator(rescale_operator(c, 1.2), 1.5);
    const auto once = rescale_operator(c, 1.8);
    double diff = 0;
    for (std::size_t p = 0; p < once.grid().size(); ++p)
      diff = std::max(diff, (twice.A(p) - once.A(p)).norm() + (twice.b(p) - once.b(p)).norm());
    CHECK(diff < 1e-12);
  }
}
