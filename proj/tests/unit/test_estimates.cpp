#include <doctest.h>

#include <cmath>
#include <fmt/format.h>
#include <numbers>

#include "gelfand/errors.hpp"
#include "gelfand/estimates.hpp"
#include "gelfand/norms.hpp"
#include "gelfand/stability.hpp"

using namespace gelfand;

namespace {

constexpr double kPi = std::numbers::pi;

bool within(double value, double expected, double rel) { return std::abs(value - expected) <= rel * std::abs(expected); }

GridPtr half_disk(std::size_t n_r = 257, std::size_t n_theta = 41) {
  return make_grid(Grid::polar_half_disk(1, n_r, n_theta));
}

ScalarField x2_field(const GridPtr& g) {
  return ScalarField::sample(g, [](const Point& x) { return x[1]; });
}

GelfandProblem disk_problem(std::size_t nodes = 401) {
  auto g = make_grid(Grid::radial(0, 1, nodes, 2));
  return GelfandProblem(CoefficientField::identity(g), BoundarySpec::ball(), Nonlinearity::exponential());
}

}  // namespace

TEST_SUITE("estimates_lab") {
  TEST_CASE("flat solution closed forms") {
    auto g = half_disk();
    const auto u = x2_field(g);

    const auto xy = verify_hessian(ScalarField::sample(g, [](const Point& x) { return x[0] * x[1]; }));
    CHECK(within(xy.lhs, kPi * std::sqrt(2.0) / 24, 0.02));
    CHECK(within(xy.rhs, kPi / 4, 0.02));

    for (double rho : {1.0 / 16, 1.0 / 8, 1.0 / 4}) {
      auto r = verify_radial_weighted(u, 0.1, rho);
      CHECK(within(r.lhs, kPi * rho * rho / 4, 0.02));
      CHECK(within(r.params["rhs1"], 3 * kPi * rho * rho / 2, 0.02));
      CHECK(within(r.params["rhs2"], 0.1 * kPi * std::pow(4 * rho, 3) / 3, 0.02));
      CHECK(r.note.find("n_dim = 2") != std::string::npos);
    }

    const auto l1 = verify_l1_radial(u);
    CHECK(within(l1.lhs, 7.0 / 12, 0.02));
    CHECK(within(l1.rhs, 0.75, 0.02));
    CHECK(within(l1.ratio, 7.0 / 9, 0.02));

    const auto d = verify_decay(u);
    CHECK(within(d.params.at("exponent"), 2.0, 0.05));
    CHECK(d.pass);
    for (double rho : {1.0 / 64, 1.0 / 32, 1.0 / 16})
      CHECK(within(d.params.at(fmt::format("D@{:.6g}", rho)), kPi * rho * rho / 2, 0.02));

    const auto hf = verify_holefill(u);
    CHECK(within(hf.lhs, 1.0 / 64, 0.02));
    CHECK(hf.pass);

    const auto an = verify_annuli_bounds(u, 0.2);
    REQUIRE(an.size() == 2);
    CHECK(an[0].note == "gradient");
    CHECK(an[1].note == "hessian");
    CHECK(within(an[0].lhs, std::pow(kPi * (0.7 * 0.7 - 0.4 * 0.4) / 2, 1 / 2.2), 0.02));
    CHECK(within(an[0].rhs, 2.0 / 3 * (std::pow(0.9, 3) - std::pow(0.25, 3)), 0.02));
    CHECK(an[1].lhs < 1e-3);  // O(h^2) polar stencil error on a linear field
  }

  TEST_CASE("synthetic decay exponent") {
    auto g = half_disk();
    // |grad u| ~ r^{-0.3}: D(rho) ~ rho^{1.4}
    const auto u = ScalarField::sample(g, [](const Point& x) {
      const double r = std::hypot(x[0], x[1]);
      return r > 0 ? std::pow(r, 0.7) * x[1] / r : 0.0;
    });
    CHECK(within(verify_decay(u).params.at("exponent"), 1.4, 0.1));
  }

  TEST_CASE("refinement consistency of calibration ratios") {
    auto coarse = half_disk(129, 41), fine = half_disk(257, 81);
    const auto a = x2_field(coarse), b = x2_field(fine);
    CHECK(within(verify_l1_radial(a).ratio, verify_l1_radial(b).ratio, 0.1));
    CHECK(within(verify_energy(a, 0.2).ratio, verify_energy(b, 0.2).ratio, 0.1));
    CHECK(within(verify_holder(a, 0.1, true).ratio, verify_holder(b, 0.1, true).ratio, 0.1));
    CHECK(within(verify_radial_weighted(a, 0.1, 0.25).ratio, verify_radial_weighted(b, 0.1, 0.25).ratio, 0.1));
    CHECK(within(verify_annuli_bounds(a, 0.2)[0].ratio, verify_annuli_bounds(b, 0.2)[0].ratio, 0.1));
  }

  TEST_CASE("radial u: u_r is the gradient") {
    auto g = make_grid(Grid::radial(0, 1, 401, 5));
    const auto u = ScalarField::sample(g, [](const Point& x) { return 1 - x[0] * x[0] * x[0]; });
    const auto r = verify_radial_weighted(u, 0.0, 0.25);
    const auto g2 = gradient(u).norm();
    ScalarField sq(g);
    for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = g2[i] * g2[i];
    CHECK(r.lhs == weighted_integral(sq, 3, Region::ball(0.25)));
    CHECK(r.params.at("rhs2") == 0.0);
    CHECK(r.note.empty());

    // u(1) = 0: finite ratio equal to the direct quadrature
    const auto l1 = verify_l1_radial(u);
    CHECK(std::isfinite(l1.ratio));
    CHECK(l1.ratio == doctest::Approx(lp_norm(u, 1, Region::annulus(0.5, 1)) /
                                      lp_norm(radial_derivative(u), 1, Region::annulus(0.5, 1))));
  }

  TEST_CASE("degenerate inputs") {
    auto g = half_disk(129, 21);
    const ScalarField zero(g);
    CHECK(verify_energy(zero, 0.2).skipped);
    CHECK(verify_hessian(zero).skipped);
    CHECK(verify_holder(zero, 0.1).skipped);
    CHECK(verify_annuli_bounds(zero, 0.2)[0].skipped);
    const auto hf = verify_holefill(zero);
    CHECK(hf.pass);
    CHECK(hf.skipped);

    const auto one = ScalarField::sample(g, [](const Point&) { return 1.0; });
    const auto c = verify_l1_radial(one);
    CHECK(c.skipped);
    CHECK_FALSE(c.pass);
    CHECK(c.note.find("flat boundary") != std::string::npos);
    CHECK(verify_interpolation(one, 0.5).ratio < 1e-14);

    auto rg = make_grid(Grid::radial(0, 1, 101, 3));
    const auto flat = verify_l1_radial(ScalarField::sample(rg, [](const Point&) { return 2.0; }));
    CHECK(std::isinf(flat.ratio));
    CHECK_FALSE(flat.pass);

    CHECK_THROWS_AS(verify_radial_weighted(x2_field(g), 0.1, 0.3), InvalidArgument);
    CHECK_THROWS_AS(verify_energy(zero, 0.0), InvalidArgument);
    CHECK_THROWS_AS(verify_hessian(ScalarField(rg)), InvalidArgument);
    // 1/64 and 1/32 hold fewer than 4 radial cells at h = 1/32
    CHECK_THROWS_AS(verify_decay(x2_field(half_disk(33, 21))), InvalidArgument);
    CHECK_THROWS_AS(verify_interpolation(one, 1.5), InvalidArgument);
  }

  TEST_CASE("normalized energy is nondecreasing in gamma") {
    auto problem = disk_problem(201);
    const auto m = minimal_solution(problem, 1.5);
    REQUIRE(m.status == MinimalResult::Status::converged);
    double prev = 0;
    for (double gamma : {0.1, 0.2, 0.4}) {
      const auto r = verify_energy(m.point.u, gamma);
      CHECK(r.params.at("lhs_normalized") >= prev * (1 - 1e-12));
      prev = r.params.at("lhs_normalized");
    }
  }

  TEST_CASE("interpolation inequality") {
    auto sq = make_grid(Grid::cartesian(0, 1, 201, 0, 1, 201));
    const auto s = ScalarField::sample(sq, [](const Point& x) { return std::sin(2 * kPi * x[0]); });
    for (double delta : {0.1, 0.5}) {
      const auto r = verify_interpolation(s, delta);
      CHECK(within(r.lhs, 4.0, 0.02));
      CHECK(within(r.params.at("hessian_l1"), 8 * kPi, 0.02));
      CHECK(within(r.params.at("u_l1"), 2 / kPi, 0.02));
      CHECK(within(r.ratio, 4.0 / (delta * 8 * kPi + 2 / (kPi * delta)), 0.02));
    }

    auto small = make_grid(Grid::cartesian(0, 1, 81, 0, 1, 81));
    const auto a = verify_interpolation_family(random_trig_fields(small, 100, 1));
    const auto b = verify_interpolation_family(random_trig_fields(small, 100, 2));
    CHECK(a.fields == 100);
    CHECK(a.reports.size() == 200);
    CHECK(a.constant > 0);
    CHECK(std::isfinite(a.constant));
    CHECK(std::max(a.constant, b.constant) / std::min(a.constant, b.constant) < 2);
    for (const auto& r : a.reports) CHECK(r.ratio <= a.constant);

    auto polar = half_disk(129, 41);
    const auto p = verify_interpolation_family(random_trig_fields(polar, 20, 3));
    CHECK(std::isfinite(p.constant));
    CHECK(p.constant > 0);
  }

  TEST_CASE("small stable family") {
    FamilySpec spec;
    spec.lambda_fractions = {0.1, 0.5, 0.9};
    const auto all = standard_perturbations();
    REQUIRE(all.size() == 4);
    for (const auto& p : all) CHECK(p.eps_size <= 0.1);
    spec.perturbations = {all[0], all[3]};
    const auto fam = build_family(spec);
    REQUIRE(fam.members.size() == 6);
    CHECK(fam.members[4].id == "mixed/0.50");
    for (const auto& ls : fam.lambda_star) CHECK(within(ls.value, 5.06, 0.02));
    for (const auto& m : fam.members) {
      CHECK(m.admitted);
      CHECK(m.residual <= 10 * spec.tol);
      CHECK(m.mu1 > 0);
    }
    for (const auto& p : spec.perturbations) {
      const auto cf = CoefficientField::sample(fam.grid, p.model, p.c0, p.C0, p.eps_size);
      CHECK(validate_ellipticity(cf).eps_measured <= p.eps_size);
    }

    const auto reports = verify_family(fam);
    for (std::size_t i = 1; i < reports.size(); ++i) CHECK(reports[i - 1].id <= reports[i].id);
    for (const auto& r : reports) {
      CHECK(r.lhs >= 0);
      CHECK(r.rhs >= 0);
      CHECK_FALSE(r.skipped);
      if (r.id == EstimateId::decay) CHECK(r.params.at("exponent") >= 0.1);
      if (r.id == EstimateId::holefill) CHECK(r.lhs < 1);
    }
    double rw_min = kInfinity, rw_max = 0;
    for (const auto& s : summarize(reports)) {
      CHECK(s.count == 6);
      CHECK(s.all_pass);
      CHECK(s.variation < 10);
      if (s.id == EstimateId::radial_weighted) {
        rw_min = std::min(rw_min, s.min_ratio);
        rw_max = std::max(rw_max, s.max_ratio);
      }
    }
    CHECK(rw_max / rw_min < 3);

    VerifyOptions threaded;
    threaded.threads = 3;
    CHECK(reports_csv(verify_family(fam, threaded)) == reports_csv(reports));

    const auto csv = reports_csv(reports);
    CHECK(csv.rfind("member_id,lambda,eps_size,h,lhs,rhs,ratio,pass\n", 0) == 0);
  }

  TEST_CASE("disk family energy ratios") {
    FamilySpec spec;
    spec.geometry = FamilySpec::Geometry::radial_ball;
    spec.n_r = 401;
    spec.coarse_n_r = 401;
    spec.lambda_fractions = {0.1, 0.3, 0.5, 0.7, 0.9};
    spec.perturbations = {standard_perturbations()[0]};
    const auto fam = build_family(spec);
    CHECK(within(fam.lambda_star[0].value, 2.0, 0.02));
    const auto reports = verify_family(fam);
    for (const auto& s : summarize(reports)) {
      if (s.id != EstimateId::energy_c11 && s.id != EstimateId::holder_c11) continue;
      CHECK(s.count == 5);
      CHECK(s.variation < 10);
    }

    spec.perturbations = {standard_perturbations()[1]};
    CHECK_THROWS_AS(build_family(spec), InvalidArgument);
    spec.perturbations = {standard_perturbations()[0]};
    spec.lambda_fractions = {1.2};
    CHECK_THROWS_AS(build_family(spec), InvalidArgument);
  }

  TEST_CASE("uniqueness of stable solutions") {
    auto problem = disk_problem();
    const auto v = uniqueness_probe(problem, 1.0);
    CHECK(v.pass);
    CHECK_FALSE(v.degenerate);
    CHECK(v.runs == 10);
    CHECK(v.stable >= 1);
    CHECK(v.spread <= 1e-9);

    // upper-branch start at the same lambda: converges to the unstable solution, which is filtered
    ContinuationOptions co;
    co.sup_max = 8;
    const auto d = continue_branch(problem, co);
    const auto end = minimal_segment_end(d);
    std::size_t best = d.points.size();
    for (std::size_t i = end + 1; i < d.points.size(); ++i)
      if (best == d.points.size() || std::abs(d.points[i].lambda - 1) < std::abs(d.points[best].lambda - 1)) best = i;
    REQUIRE(best < d.points.size());
    UniquenessOptions o;
    o.extra_starts = {d.points[best].u};
    const auto w = uniqueness_probe(problem, 1.0, o);
    CHECK(w.pass);
    CHECK(w.excluded_unstable >= 1);
    CHECK(w.runs == 11);

    // f(u) = u at lambda = mu1: the eigenfunction degeneracy
    GelfandProblem linear(problem.coeffs(), problem.boundary(), Nonlinearity::custom("u"));
    const double mu1 = principal_eigenpair(jacobi_operator(linear.op())).mu1;
    const auto deg = uniqueness_probe(linear, mu1);
    CHECK(deg.degenerate);
    CHECK(deg.pass);
    CHECK(deg.stable == 3);
    CHECK(deg.note.find("degenerate") != std::string::npos);
  }
}
