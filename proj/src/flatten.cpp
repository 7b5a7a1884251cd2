#include "gelfand/flatten.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <fmt/format.h>
#include <numbers>
#include <random>

#include "gelfand/errors.hpp"

namespace gelfand {

namespace {

constexpr const char* kModule = "geometry_flatten";

Mat2 householder_to_e2(const Vec2& unit) {
  const Vec2 v = unit - Vec2(0, 1);
  if (v.norm() < 1e-15) return Mat2::Identity();
  return Mat2::Identity() - 2.0 * v * v.transpose() / v.squaredNorm();
}

}  // namespace

FlatteningMap::FlatteningMap(std::shared_ptr<const LevelSetDomain> domain, Vec2 x0)
    : domain_(std::move(domain)), x0_(x0) {
  const Vec2 g = domain_->grad(x0_);
  g0_ = g.norm();
  if (!(g0_ > 0) || !std::isfinite(g0_)) throw InvalidArgument("flattening: vanishing gradient at the boundary point");
  Q_ = householder_to_e2(g / g0_);

  const double lip = domain_->lipschitz_grad();
  const double I = domain_->inv_grad_bound();
  const double G = domain_->grad_sup();
  const double inf = std::numeric_limits<double>::infinity();
  R2_bound = lip > 0 ? 1.0 / (4.0 * lip * I) : inf;
  const double cap = 0.5 * domain_->diameter();
  R2_capped = R2_bound > cap;
  R2 = std::min(R2_bound, cap);
  R1_bound = lip > 0 ? 1.0 / (16.0 * std::numbers::sqrt2 * (1.0 + 8.0 * G * G * I * I) * I * lip) : inf;
  R1 = std::min(R1_bound, R2 / 8.0);
  rho = 4.0 * R1;
}

FlatteningMap build_flattening(const LevelSetDomain& domain, const Vec2& x0) {
  const double scale = std::max(1.0, domain.grad_sup()) * domain.diameter();
  if (std::abs(domain.phi(x0)) > 1e-9 * scale)
    throw InvalidArgument(fmt::format("flattening: ({}, {}) is not on the boundary (Phi = {:.3e})", x0[0], x0[1],
                                      domain.phi(x0)));
  return FlatteningMap(std::make_shared<const LevelSetDomain>(domain), x0);
}

Vec2 FlatteningMap::psi(const Vec2& x) const {
  const Vec2 z = Q_ * (x - x0_);
  return {z[0], domain_->phi(x) / g0_};
}

Mat2 FlatteningMap::jacobian(const Vec2& x) const {
  Mat2 D;
  D.row(0) = Q_.row(0);
  D.row(1) = domain_->grad(x).transpose() / g0_;
  return D;
}

std::array<Mat2, 2> FlatteningMap::hessians(const Vec2& x) const {
  return {Mat2::Zero(), domain_->hessian(x) / g0_};
}

Vec2 FlatteningMap::psi_inverse(const Vec2& y, double search) const {
  if (search <= 0) search = domain_->diameter();
  const Vec2 e1 = Q_.row(0).transpose(), e2 = Q_.row(1).transpose();  // Q^T e_i
  auto point = [&](double t) { return Vec2(x0_ + y[0] * e1 + t * e2); };
  auto h = [&](double t) { return domain_->phi(point(t)) / g0_ - y[1]; };
  const double tol = 1e-15 * domain_->diameter();

  // Newton from the identity guess.
  double t = y[1];
  for (int it = 0; it < 30 && std::abs(t) <= search; ++it) {
    const double dh = domain_->grad(point(t)).dot(e2) / g0_;
    if (!(std::abs(dh) > 0) || !std::isfinite(dh)) break;
    const double step = h(t) / dh;
    t -= step;
    if (std::abs(step) <= tol) return point(t);
  }
  // Bracket outward from the guess, then bisect and polish.
  const double step = search / 256.0;
  const double guess = std::clamp(y[1], -search, search);
  const double h0 = h(guess);
  if (h0 == 0) return point(guess);
  for (int k = 1; k <= 512; ++k) {
    for (double dir : {1.0, -1.0}) {
      const double a = guess + dir * (k - 1) * step, b = guess + dir * k * step;
      if (std::abs(b) > search) continue;
      if ((h(a) > 0) != (h(b) > 0)) {
        double r = bisect(h, std::min(a, b), std::max(a, b), 1e-3 * tol);
        for (int it = 0; it < 3; ++it) {
          const double dh = domain_->grad(point(r)).dot(e2) / g0_;
          if (std::abs(dh) > 0) r -= h(r) / dh;
        }
        return point(r);
      }
    }
  }
  throw SolverError(kModule, fmt::format("no preimage of ({:.6g}, {:.6g}) within {:.3g} of x0", y[0], y[1], search));
}

InclusionReport verify_inclusions(const FlatteningMap& map, std::size_t samples, std::uint64_t seed) {
  const auto& dom = map.domain();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const double two_pi = 2 * std::numbers::pi;
  InclusionReport rep;
  rep.det_min = std::numeric_limits<double>::infinity();
  const double diam = dom.diameter();

  // First inclusion: interior of B_R1 and its bounding circle.
  for (std::size_t s = 0; s < samples; ++s) {
    const double r = (s % 2 == 0) ? map.R1 * std::sqrt(U(rng)) : map.R1;
    const double a = two_pi * U(rng);
    const Vec2 x = map.x0() + r * Vec2(std::cos(a), std::sin(a));
    if (dom.phi(x) < 0) continue;
    ++rep.samples;
    const Vec2 y = map.psi(x);
    const double ratio = y.norm() / (0.5 * map.rho);
    if (ratio > rep.first_ratio) {
      rep.first_ratio = ratio;
      if (ratio > 1.0 || y[1] < 0) rep.first_witness = x;
    }
    try {
      rep.roundtrip_error = std::max(rep.roundtrip_error, (map.psi_inverse(y, map.R2) - x).norm() / diam);
    } catch (const SolverError&) {
      rep.roundtrip_error = std::numeric_limits<double>::infinity();
    }
  }
  rep.first = !rep.first_witness.has_value();

  // Third inclusion: B+_rho pulled back must stay inside B_R2.
  for (std::size_t s = 0; s < samples; ++s) {
    const double r = (s % 2 == 0) ? map.rho * std::sqrt(U(rng)) : map.rho;
    const double a = std::numbers::pi * (1e-9 + (1 - 2e-9) * U(rng));
    const Vec2 y = r * Vec2(std::cos(a), std::sin(a));
    ++rep.samples;
    try {
      const Vec2 x = map.psi_inverse(y, map.R2);
      const double ratio = (x - map.x0()).norm() / map.R2;
      rep.third_ratio = std::max(rep.third_ratio, ratio);
      if (ratio >= 1.0 || dom.phi(x) <= 0) {
        if (!rep.third_witness) rep.third_witness = y;
      }
    } catch (const SolverError&) {
      rep.third_ratio = std::numeric_limits<double>::infinity();
      if (!rep.third_witness) rep.third_witness = y;
    }
  }
  rep.third = !rep.third_witness.has_value();
  rep.second = true;

  // Orientation on B_R2 cap Omega.
  for (std::size_t s = 0; s < samples / 4 + 1; ++s) {
    const double r = map.R2 * std::sqrt(U(rng));
    const double a = two_pi * U(rng);
    const Vec2 x = map.x0() + r * Vec2(std::cos(a), std::sin(a));
    if (dom.phi(x) < 0) continue;
    rep.det_min = std::min(rep.det_min, map.chart_jacobian(x).determinant());
  }
  return rep;
}

double empirical_R1(const FlatteningMap& map, std::size_t samples, std::uint64_t seed) {
  auto ok = [&](double R) {
    FlatteningMap m = map;
    m.R1 = R;
    m.rho = 4 * R;
    const auto rep = verify_inclusions(m, samples, seed);
    return rep.first && rep.third;
  };
  double lo = map.R1, hi = map.R2;
  if (!ok(lo)) return 0.0;
  if (ok(hi)) return hi;
  for (int i = 0; i < 40 && hi - lo > 1e-6 * map.R2; ++i) {
    const double mid = 0.5 * (lo + hi);
    (ok(mid) ? lo : hi) = mid;
  }
  return lo;
}

TransformedCoefficients transform_coefficients(const CoefficientModel& model, double c0, double C0,
                                               const FlatteningMap& map, const GridPtr& chart) {
  if (model.is_radial()) throw InvalidArgument("transform_coefficients needs planar coefficients");
  std::vector<Mat2> At(chart->size());
  std::vector<Vec2> bt(chart->size());
  TransformedCoefficients tc;
  tc.curvature_drift.resize(chart->size());
  for (std::size_t i = 0; i < chart->size(); ++i) {
    const auto p = chart->position(i);
    Vec2 x;
    try {
      x = map.psi_inverse(Vec2(p[0], p[1]), map.R2);
    } catch (const SolverError&) {
      throw InvalidArgument(fmt::format("chart node ({}, {}) lies outside the image of Psi", p[0], p[1]));
    }
    const Point xp{x[0], x[1]};
    const Mat2 A = model.A(xp);
    const Vec2 b = model.b(xp);
    const Mat2 D = map.jacobian(x);
    const auto H = map.hessians(x);
    Mat2 a = D * A * D.transpose();
    At[i] = 0.5 * (a + a.transpose());
    Vec2 curv;
    for (int k = 0; k < 2; ++k) curv[k] = (A.cwiseProduct(H[static_cast<std::size_t>(k)])).sum();
    tc.curvature_drift[i] = curv;
    bt[i] = D * b + curv;
  }
  CoefficientField probe(chart, At, bt, 0.5 * c0, 1.5 * C0, 0.0);
  const double eps = validate_ellipticity(probe).eps_measured;
  tc.field = CoefficientField(chart, std::move(At), std::move(bt), 0.5 * c0, 1.5 * C0, eps);
  return tc;
}

TransformedEllipticity verify_transformed_ellipticity(const TransformedCoefficients& tc, double c0, double C0,
                                                      double tol) {
  TransformedEllipticity r;
  r.min_eigenvalue = std::numeric_limits<double>::infinity();
  r.max_eigenvalue = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < tc.field.grid().size(); ++i) {
    const Eigen::SelfAdjointEigenSolver<Mat2> es(tc.field.A(i), Eigen::EigenvaluesOnly);
    r.min_eigenvalue = std::min(r.min_eigenvalue, es.eigenvalues()[0]);
    r.max_eigenvalue = std::max(r.max_eigenvalue, es.eigenvalues()[1]);
  }
  r.lower_margin = r.min_eigenvalue - 0.5 * c0;
  r.upper_margin = 1.5 * C0 - r.max_eigenvalue;
  r.pass = r.lower_margin >= -tol && r.upper_margin >= -tol;
  return r;
}

ScalarField pushforward_solution(const ScalarField& u, const FlatteningMap& map, const GridPtr& chart) {
  ScalarField out(chart);
  for (std::size_t i = 0; i < chart->size(); ++i) {
    const auto p = chart->position(i);
    Vec2 x;
    try {
      x = map.psi_inverse(Vec2(p[0], p[1]), map.R2);
    } catch (const SolverError&) {
      throw InvalidArgument(fmt::format("chart node ({}, {}) lies outside the image of Psi", p[0], p[1]));
    }
    out[i] = interpolate(u, Point{x[0], x[1]});
  }
  return out;
}

}  // namespace gelfand
