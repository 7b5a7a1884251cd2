#include <doctest.h>

#include <cmath>
#include <random>

#include "gelfand/domain_approx.hpp"
#include "gelfand/errors.hpp"

using namespace gelfand;

TEST_SUITE("domain_approx") {
  TEST_CASE("comparability constant") {
    const auto dist = comparability_constant(LevelSetDomain::unit_ball_distance());
    CHECK(dist.L_raw == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(dist.L == doctest::Approx(1.1));
    CHECK(dist.samples == 10000);

    // Phi / d = 1 + |x| on the unit ball
    const auto ball = comparability_constant(LevelSetDomain::unit_ball());
    CHECK(ball.L_raw <= 2.0 + 1e-9);
    CHECK(ball.L_raw >= 1.98);
    CHECK(ball.min_ratio >= 1.0 - 1e-9);
    CHECK(ball.L == doctest::Approx(1.1 * ball.L_raw));

    const auto e = LevelSetDomain::ellipse();
    const double coarse = comparability_constant(e, 5000, 1).L;
    const double fine = comparability_constant(e, 10000, 2).L;
    CHECK(std::abs(coarse / fine - 1) < 0.05);

    // Phi vanishes at the centre, so Phi / d is not bounded below
    const LevelSetDomain pinched("pinched", "(1 - x1^2 - x2^2)*(x1^2 + x2^2)^2", Box{{-1.2, -1.2}, {1.2, 1.2}});
    CHECK_THROWS_AS(comparability_constant(pinched), InvalidArgument);
  }

  TEST_CASE("gradient band") {
    // grad Phi . n = 2|x| >= 1 exactly for |x| >= 1/2
    const auto b = gradient_band(LevelSetDomain::unit_ball());
    CHECK(b.floor == doctest::Approx(1.0));
    CHECK(b.rho <= 0.5);
    CHECK(b.rho >= 0.45);
  }

  TEST_CASE("epsilon recursion and precondition") {
    const auto d = LevelSetDomain::unit_ball_distance();
    const auto seq = mollify_domain(d, 0.1, {.k_max = 6, .L = 1.0, .rho = 0.9});
    REQUIRE(seq.size() == 6);
    CHECK(seq[1].eps() == doctest::Approx(0.1 / 6).epsilon(1e-15));
    for (std::size_t k = 1; k < seq.size(); ++k) {
      CHECK(seq[k].k() == static_cast<int>(k) + 1);
      CHECK(std::abs(seq[k].eps() * 6 - seq[k - 1].eps()) <= 4e-16 * seq[k - 1].eps());
    }
    CHECK(seq[2].hausdorff_bound() == doctest::Approx(3 * seq[2].eps()));

    // rho / (2L^2 + 2) = 0.225
    CHECK_THROWS_WITH_AS(mollify_domain(d, 0.23, {.k_max = 2, .L = 1.0, .rho = 0.9}), doctest::Contains("0.225"),
                         InvalidArgument);
    CHECK_NOTHROW(mollify_domain(d, 0.22, {.k_max = 2, .L = 1.0, .rho = 0.9}));
    CHECK_THROWS_AS(mollify_domain(d, -0.1, {.k_max = 2, .L = 1.0, .rho = 0.9}), InvalidArgument);
  }

  TEST_CASE("convolution values") {
    // For Phi = 1 - |x|^2 the bump average is exact: Phi * eta = Phi - eps^2 / 6
    const auto ball = LevelSetDomain::unit_ball();
    const auto seq = mollify_domain(ball, 0.03, {.k_max = 2, .L = 2.2, .rho = 0.48});
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> U(-1.1, 1.1);
    for (int s = 0; s < 200; ++s) {
      const Vec2 x(U(rng), U(rng));
      for (const auto& m : seq) {
        CHECK(m.smoothed(x) == doctest::Approx(ball.phi(x) - m.eps() * m.eps() / 6).epsilon(1e-13));
        CHECK(m.phi(x) < ball.phi(x));
        CHECK((m.grad(x) - ball.grad(x)).norm() <= 1e-13);
        CHECK(m.quadrature_error(x) <= 1e-14);
      }
    }

    // C^{1,1}: |Phi * eta - Phi| <= [grad Phi] eps^2 / 2
    const auto e = LevelSetDomain::perturbed_ball();
    const auto pseq = mollify_domain(e, 0.01, {.k_max = 3, .L = 2.3, .rho = 0.46});
    for (int s = 0; s < 200; ++s) {
      const Vec2 x(U(rng), U(rng));
      if (std::abs(e.phi(x)) > 0.4) continue;
      for (const auto& m : pseq) {
        CHECK(std::abs(m.smoothed(x) - e.phi(x)) <= 0.5 * e.lipschitz_grad() * m.eps() * m.eps() * 1.05);
        CHECK(m.phi(x) <= e.phi(x) - 2 * m.L() * m.eps() + std::abs(m.smoothed(x) - e.phi(x)) + 1e-15);
      }
    }
  }

  TEST_CASE("lipschitz bound is uniform in k") {
    for (const char* name : {"ball", "ellipse", "perturbed_ball"}) {
      CAPTURE(name);
      const auto d = LevelSetDomain::catalog(name);
      const auto seq = mollify_domain(d, 0.005, {.k_max = 4, .L = 4.4, .rho = 0.28});
      for (const auto& m : seq) CHECK(sampled_lipschitz(m, 300) <= d.lipschitz_grad() * 1.02 + 1e-9);
    }
  }

  TEST_CASE("nesting") {
    for (const char* name : {"ball", "ellipse"}) {
      CAPTURE(name);
      const auto d = LevelSetDomain::catalog(name);
      const auto L = comparability_constant(d).L;
      const auto rho = gradient_band(d).rho;
      const auto seq = mollify_domain(d, 0.5 * rho / (2 * L * L + 2), {.k_max = 6, .L = L, .rho = rho});
      const auto v = verify_nesting(seq, 1000);
      REQUIRE(v.size() == 5);
      for (const auto& x : v) {
        CHECK(x.nested);
        CHECK(x.checked > 1000);
      }
      const auto ex = exhaustion_check(seq, 1000);
      CHECK(ex.checked > 1000);
      CHECK(ex.violations == 0);

      const std::vector<MollifiedDomain> shuffled{seq[2], seq[1]};
      const auto bad = verify_nesting(shuffled, 500);
      CHECK_FALSE(bad[0].nested);
      REQUIRE(bad[0].witness.has_value());
      // in the closure of Omega_3 but outside Omega_2
      CHECK(seq[2].phi(*bad[0].witness) >= -1e-12);
      CHECK_FALSE(seq[1].phi(*bad[0].witness) > 0);
    }
    const auto d = LevelSetDomain::unit_ball();
    CHECK_THROWS_AS(verify_nesting(mollify_domain(d, 0.01, {.k_max = 1, .L = 2.2, .rho = 0.48})), InvalidArgument);
  }

  TEST_CASE("hausdorff distance") {
    const auto d = LevelSetDomain::unit_ball_distance();
    const auto same = hausdorff_boundary_distance(ray_boundary(d), d);
    CHECK(same.distance <= 1e-12);
    CHECK(same.resolution > 0);
    CHECK_THROWS_AS(hausdorff_boundary_distance(BoundarySample{}, d), InvalidArgument);

    const auto seq = mollify_domain(d, 0.1, {.k_max = 6, .L = 1.0, .rho = 0.9});
    const auto h3 = hausdorff_boundary_distance(seq[2]);
    CHECK(h3.distance <= 3 * seq[2].eps());
    CHECK(h3.from_sample <= h3.distance);

    // geometric decay with ratio 1 / (2 (2L^2 + 1)) = 1/6
    std::vector<double> h;
    for (const auto& m : seq) h.push_back(hausdorff_boundary_distance(m).distance);
    for (std::size_t k = 2; k < h.size(); ++k) CHECK(h[k] / h[k - 1] == doctest::Approx(1.0 / 6).epsilon(0.05));
  }

  TEST_CASE("boundary gradient floor") {
    const auto d = LevelSetDomain::unit_ball_distance();
    const auto seq = mollify_domain(d, 0.1, {.k_max = 3, .L = 1.0, .rho = 0.9});
    for (const auto& m : seq) {
      const auto g = boundary_gradient_floor(m);
      CHECK(g.floor == doctest::Approx(0.5));
      CHECK(g.min_grad == doctest::Approx(1.0).epsilon(0.01));
      CHECK(g.pass);
    }
    for (const char* name : {"ellipse", "perturbed_ball"}) {
      CAPTURE(name);
      const auto dom = LevelSetDomain::catalog(name);
      const auto L = comparability_constant(dom).L;
      const auto rho = gradient_band(dom).rho;
      const auto s = mollify_domain(dom, 0.9 * rho / (2 * L * L + 2), {.k_max = 4, .L = L, .rho = rho});
      for (std::size_t k = 1; k < s.size(); ++k) CHECK(boundary_gradient_floor(s[k]).pass);
    }
  }

  TEST_CASE("full report, serial and threaded") {
    const auto d = LevelSetDomain::ellipse();
    const auto serial = approximate_domain(d, {}, 4, 1);
    const auto threaded = approximate_domain(d, {}, 4, 3);
    CHECK(serial.all());
    CHECK(serial.recursion_exact);
    REQUIRE(serial.entries.size() == 4);
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(serial.entries[k].hausdorff == threaded.entries[k].hausdorff);
      CHECK(serial.entries[k].grad.min_grad == threaded.entries[k].grad.min_grad);
      CHECK(serial.entries[k].hausdorff <= serial.entries[k].hausdorff_bound);
    }
    CHECK_THROWS_AS(approximate_domain(d, 1.0, 2), InvalidArgument);
  }
}
