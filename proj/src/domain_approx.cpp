#include "gelfand/domain_approx.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <fmt/format.h>
#include <random>
#include <thread>

#include "gelfand/errors.hpp"
#include "gelfand/numerics.hpp"

namespace gelfand {

namespace {

constexpr double kMaxComparability = 1e4;

void polar_rule(int nr, int nt, std::vector<Vec2>& offsets, std::vector<double>& weights) {
  const auto g = gauss_legendre(nr);
  offsets.clear();
  weights.clear();
  double total = 0;
  for (int j = 0; j < nr; ++j) {
    const double r = 0.5 * (1 + g.nodes[static_cast<std::size_t>(j)]);
    const double bump = std::pow(1 - r * r, 4);
    for (int m = 0; m < nt; ++m) {
      const double a = 2 * kPi * (m + 0.5) / nt;
      offsets.emplace_back(r * std::cos(a), r * std::sin(a));
      const double w = 0.5 * g.weights[static_cast<std::size_t>(j)] * r * bump;
      weights.push_back(w);
      total += w;
    }
  }
  for (auto& w : weights) w /= total;
}

double box_exit(const Box& box, const Vec2& c, const Vec2& dir) {
  double t = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 2; ++i) {
    if (dir[i] > 0) t = std::min(t, (box.hi[i] - c[i]) / dir[i]);
    if (dir[i] < 0) t = std::min(t, (box.lo[i] - c[i]) / dir[i]);
  }
  return t;
}

double spectral_norm(const Mat2& H) {
  return Eigen::SelfAdjointEigenSolver<Mat2>(0.5 * (H + H.transpose()), Eigen::EigenvaluesOnly)
      .eigenvalues()
      .cwiseAbs()
      .maxCoeff();
}

double segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (p - (a + t * ab)).norm();
}

double spacing_of(const std::vector<Vec2>& pts) {
  double s = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) s = std::max(s, (pts[(i + 1) % pts.size()] - pts[i]).norm());
  return s;
}

// Crossing parameter of the domain boundary along a ray; nullopt when the ray stays inside the box.
std::optional<double> domain_crossing(const LevelSetDomain& d, const Vec2& c, const Vec2& dir) {
  const double T = box_exit(d.box(), c, dir);
  auto f = [&](double t) { return d.phi(c + t * dir); };
  if (!(f(0) > 0) || f(T) > 0) return std::nullopt;
  return bisect(f, 0, T, 1e-15 * d.diameter());
}

template <class F>
void parallel_for(std::size_t count, int threads, F&& body) {
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < count; i = next++) body(i);
  };
  const int n = std::max(1, std::min<int>(threads, static_cast<int>(count)));
  if (n == 1) {
    work();
    return;
  }
  std::vector<std::jthread> pool;
  for (int i = 0; i < n; ++i) pool.emplace_back(work);
}

}  // namespace

Comparability comparability_constant(const LevelSetDomain& domain, std::size_t samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Comparability c;
  c.min_ratio = std::numeric_limits<double>::infinity();
  for (const auto& x : domain.interior_samples(samples, rng)) {
    const double d = (domain.project(x) - x).norm();
    const double ratio = domain.phi(x) / d;
    if (!std::isfinite(ratio) || !(ratio > 0))
      throw InvalidArgument(fmt::format("comparability: ratio Phi/d = {} at ({}, {})", ratio, x[0], x[1]));
    c.min_ratio = std::min(c.min_ratio, ratio);
    c.max_ratio = std::max(c.max_ratio, ratio);
    ++c.samples;
  }
  c.L_raw = std::max({c.max_ratio, 1.0 / c.min_ratio, 1.0});
  if (c.L_raw > kMaxComparability)
    throw InvalidArgument(fmt::format("comparability: Phi/d ranges over [{:.3e}, {:.3e}], unbounded ratio "
                                      "(degenerate gradient near the boundary)",
                                      c.min_ratio, c.max_ratio));
  c.L = 1.1 * c.L_raw;
  return c;
}

GradientBand gradient_band(const LevelSetDomain& domain, std::size_t lattice) {
  GradientBand band;
  band.floor = 0.5 / domain.inv_grad_bound();
  const Box& b = domain.box();
  const double hx = (b.hi[0] - b.lo[0]) / static_cast<double>(lattice - 1);
  const double hy = (b.hi[1] - b.lo[1]) / static_cast<double>(lattice - 1);
  double fail = std::numeric_limits<double>::infinity(), reach = 0;
  for (std::size_t i = 0; i < lattice; ++i)
    for (std::size_t j = 0; j < lattice; ++j) {
      const Vec2 x(b.lo[0] + hx * static_cast<double>(i), b.lo[1] + hy * static_cast<double>(j));
      const Vec2 x0 = domain.project(x);
      const double d = (x - x0).norm();
      reach = std::max(reach, d);
      const Vec2 n = domain.grad(x0).normalized();
      if (!(domain.grad(x).dot(n) >= band.floor)) fail = std::min(fail, d);
    }
  band.rho = std::isfinite(fail) ? std::max(0.0, fail - std::max(hx, hy)) : reach;
  return band;
}

MollifiedDomain::MollifiedDomain(std::shared_ptr<const LevelSetDomain> domain, int k, double eps, double L,
                                 int radial_points, int angular_points)
    : domain_(std::move(domain)), k_(k), eps_(eps), L_(L) {
  if (!(eps > 0)) throw InvalidArgument("mollified domain: eps must be positive");
  if (!(L >= 1)) throw InvalidArgument("mollified domain: L must be >= 1");
  polar_rule(radial_points, angular_points, offsets_, weights_);
}

double MollifiedDomain::smoothed(const Vec2& x) const {
  double s = 0;
  for (std::size_t i = 0; i < offsets_.size(); ++i) s += weights_[i] * domain_->phi(x - eps_ * offsets_[i]);
  return s;
}

Vec2 MollifiedDomain::grad(const Vec2& x) const {
  Vec2 s = Vec2::Zero();
  for (std::size_t i = 0; i < offsets_.size(); ++i) s += weights_[i] * domain_->grad(x - eps_ * offsets_[i]);
  return s;
}

Mat2 MollifiedDomain::hessian(const Vec2& x) const {
  Mat2 s = Mat2::Zero();
  for (std::size_t i = 0; i < offsets_.size(); ++i) s += weights_[i] * domain_->hessian(x - eps_ * offsets_[i]);
  return s;
}

double MollifiedDomain::quadrature_error(const Vec2& x) const {
  const MollifiedDomain ref(domain_, k_, eps_, L_, 12, 24);
  return std::abs(phi(x) - ref.phi(x));
}

std::vector<MollifiedDomain> mollify_domain(const LevelSetDomain& domain, double eps1, const MollifyOptions& options) {
  if (options.k_max < 1) throw InvalidArgument("mollify_domain: k_max must be >= 1");
  const double L = options.L ? *options.L : comparability_constant(domain).L;
  const double rho = options.rho ? *options.rho : gradient_band(domain).rho;
  const double bound = rho / (2 * L * L + 2);
  if (!(eps1 > 0 && eps1 < bound))
    throw InvalidArgument(fmt::format(
        "eps_1 = {:.6g} violates rho - eps_1 > eps_1 (2L^2 + 1); need 0 < eps_1 < rho / (2L^2 + 2) = {:.6g} "
        "(rho = {:.6g}, L = {:.6g})",
        eps1, bound, rho, L));
  auto shared = std::make_shared<const LevelSetDomain>(domain);
  std::vector<MollifiedDomain> out;
  double eps = eps1;
  for (int k = 1; k <= options.k_max; ++k) {
    out.emplace_back(shared, k, eps, L);
    eps /= 2 * (2 * L * L + 1);
  }
  return out;
}

BoundarySample ray_boundary(const LevelSetDomain& domain, std::size_t rays) {
  BoundarySample s;
  const Vec2 c = domain.center();
  for (std::size_t i = 0; i < rays; ++i) {
    const double a = 2 * kPi * static_cast<double>(i) / static_cast<double>(rays);
    const Vec2 dir(std::cos(a), std::sin(a));
    if (const auto t = domain_crossing(domain, c, dir)) s.points.push_back(c + *t * dir);
  }
  s.spacing = spacing_of(s.points);
  return s;
}

BoundarySample ray_boundary(const MollifiedDomain& m, std::size_t rays) {
  const auto& dom = m.domain();
  const Vec2 c = dom.center();
  const double tol = 1e-15 * dom.diameter();
  BoundarySample s;
  for (std::size_t i = 0; i < rays; ++i) {
    const double a = 2 * kPi * static_cast<double>(i) / static_cast<double>(rays);
    const Vec2 dir(std::cos(a), std::sin(a));
    const auto t0 = domain_crossing(dom, c, dir);
    if (!t0) continue;
    auto f = [&](double t) { return m.phi(c + t * dir); };
    // Expand a bracket from the crossing of the original boundary.
    double step = m.eps();
    double lo = *t0, hi = *t0;
    bool found = false;
    if (f(*t0) > 0) {
      for (int j = 0; j < 60 && !found; ++j, step *= 2) {
        hi = *t0 + step;
        if (f(hi) <= 0) found = true;
        else lo = hi;
      }
    } else {
      for (int j = 0; j < 60 && !found; ++j, step *= 2) {
        lo = std::max(0.0, *t0 - step);
        if (f(lo) > 0) found = true;
        else hi = lo;
        if (lo == 0 && !found) break;
      }
    }
    if (!found) continue;
    const double t = bisect(f, lo, hi, tol);
    s.points.push_back(c + t * dir);
  }
  s.spacing = spacing_of(s.points);
  return s;
}

HausdorffEstimate hausdorff_boundary_distance(const BoundarySample& sample, const LevelSetDomain& domain) {
  if (sample.points.empty()) throw InvalidArgument("hausdorff: empty boundary sample");
  HausdorffEstimate h;
  for (const auto& p : sample.points) h.from_sample = std::max(h.from_sample, (domain.project(p) - p).norm());
  const auto ref = ray_boundary(domain, sample.points.size());
  const auto& P = sample.points;
  for (const auto& q : ref.points) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < P.size(); ++i) best = std::min(best, segment_distance(q, P[i], P[(i + 1) % P.size()]));
    h.to_sample = std::max(h.to_sample, best);
  }
  h.distance = std::max(h.from_sample, h.to_sample);
  h.resolution = std::max(sample.spacing, ref.spacing);
  return h;
}

HausdorffEstimate hausdorff_boundary_distance(const MollifiedDomain& m, std::size_t rays) {
  return hausdorff_boundary_distance(ray_boundary(m, rays), m.domain());
}

GradientFloor boundary_gradient_floor(const MollifiedDomain& m, std::size_t rays, double tol) {
  const auto s = ray_boundary(m, rays);
  if (s.points.empty()) throw InvalidArgument("gradient floor: empty boundary sample");
  GradientFloor g;
  g.floor = 0.5 / m.domain().inv_grad_bound();
  g.min_grad = std::numeric_limits<double>::infinity();
  for (const auto& p : s.points) g.min_grad = std::min(g.min_grad, m.grad(p).norm());
  g.pass = g.min_grad >= g.floor - tol;
  return g;
}

std::vector<NestingVerdict> verify_nesting(const std::vector<MollifiedDomain>& seq, std::size_t samples,
                                           std::uint64_t seed) {
  if (seq.size() < 2) throw InvalidArgument("verify_nesting needs at least two domains");
  const auto& dom = seq.front().domain();
  const auto& cloud = dom.boundary_cloud();
  std::vector<BoundarySample> rb;
  rb.reserve(seq.size());
  for (const auto& m : seq) rb.push_back(ray_boundary(m));

  std::mt19937_64 rng(seed);
  std::vector<NestingVerdict> out;
  for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
    const auto &a = seq[i], &b = seq[i + 1];
    NestingVerdict v;
    v.k = a.k();
    auto fail = [&](const Vec2& x) {
      v.nested = false;
      if (!v.witness) v.witness = x;
    };
    // closure(Omega_a) in Omega_b and Omega_b in Omega, at the sampled boundaries
    for (const auto& x : rb[i].points) {
      ++v.checked;
      if (!(b.phi(x) > 0) || !(dom.phi(x) > 0)) fail(x);
    }
    for (const auto& x : rb[i + 1].points) {
      ++v.checked;
      if (!(dom.phi(x) > 0)) fail(x);
    }
    // random points in a band around the boundary
    const double h = 2 * std::max(a.hausdorff_bound(), b.hausdorff_bound());
    std::uniform_int_distribution<std::size_t> pick(0, cloud.size() - 1);
    std::uniform_real_distribution<double> U(-h, h);
    for (std::size_t s = 0; s < samples; ++s) {
      const Vec2 x0 = cloud[pick(rng)];
      const Vec2 x = x0 + U(rng) * dom.grad(x0).normalized();
      ++v.checked;
      if (a.phi(x) >= 0 && !(b.phi(x) > 0)) fail(x);
      if (b.phi(x) > 0 && !(dom.phi(x) > 0)) fail(x);
    }
    out.push_back(v);
  }
  return out;
}

ExhaustionReport exhaustion_check(const std::vector<MollifiedDomain>& seq, std::size_t samples, std::uint64_t seed) {
  ExhaustionReport rep;
  if (seq.size() < 2) return rep;
  const auto& dom = seq.front().domain();
  const auto& cloud = dom.boundary_cloud();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, cloud.size() - 1);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (std::size_t i = 1; i < seq.size(); ++i) {
    const double e = seq[i - 1].eps();
    auto check = [&](const Vec2& x) {
      if (!(dom.signed_distance(x) >= e)) return;
      ++rep.checked;
      if (!seq[i].inside(x)) {
        ++rep.violations;
        if (!rep.witness) rep.witness = x;
      }
    };
    for (std::size_t s = 0; s < samples; ++s) {
      const Vec2 x0 = cloud[pick(rng)];
      check(x0 + 3 * e * U(rng) * dom.grad(x0).normalized());
    }
    for (const auto& x : dom.interior_samples(samples / 4 + 1, rng)) check(x);
  }
  return rep;
}

double sampled_lipschitz(const MollifiedDomain& m, std::size_t samples, std::uint64_t seed) {
  const auto& dom = m.domain();
  const Box& b = dom.box();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(b.lo[0], b.hi[0]), uy(b.lo[1], b.hi[1]);
  double lip = 0;
  std::size_t got = 0;
  for (std::size_t tries = 0; got < samples && tries < 1000 * samples; ++tries) {
    const Vec2 x(ux(rng), uy(rng));
    if (std::abs(dom.phi(x)) > 0.4) continue;
    ++got;
    const Mat2 H = m.hessian(x);
    if (H.allFinite()) lip = std::max(lip, spectral_norm(H));
  }
  return lip;
}

bool ApproxReport::all() const {
  if (!recursion_exact || exhaustion.violations > 0) return false;
  for (const auto& e : entries)
    if (!e.nested || !e.grad.pass || e.hausdorff > e.hausdorff_bound + e.resolution) return false;
  return true;
}

ApproxReport approximate_domain(const LevelSetDomain& domain, std::optional<double> eps1, int k_max, int threads) {
  ApproxReport rep;
  const auto comp = comparability_constant(domain);
  const auto band = gradient_band(domain);
  rep.L = comp.L;
  rep.L_raw = comp.L_raw;
  rep.rho = band.rho;
  rep.eps1_bound = band.rho / (2 * comp.L * comp.L + 2);
  const auto seq = mollify_domain(domain, eps1.value_or(0.5 * rep.eps1_bound), {k_max, comp.L, band.rho});

  const double factor = 2 * (2 * comp.L * comp.L + 1);
  for (std::size_t i = 1; i < seq.size(); ++i)
    if (std::abs(seq[i].eps() * factor - seq[i - 1].eps()) > 4 * std::numeric_limits<double>::epsilon() * seq[i - 1].eps())
      rep.recursion_exact = false;

  rep.entries.resize(seq.size());
  parallel_for(seq.size(), threads, [&](std::size_t i) {
    const auto& m = seq[i];
    auto& e = rep.entries[i];
    e.k = m.k();
    e.eps = m.eps();
    const auto h = hausdorff_boundary_distance(m);
    e.hausdorff = h.distance;
    e.resolution = h.resolution;
    e.hausdorff_bound = m.hausdorff_bound();
    e.grad = boundary_gradient_floor(m);
    e.lipschitz = sampled_lipschitz(m, 500);
  });
  if (seq.size() >= 2) {
    const auto nest = verify_nesting(seq);
    for (const auto& v : nest) rep.entries[static_cast<std::size_t>(v.k - 1)].nested = v.nested;
    rep.exhaustion = exhaustion_check(seq);
  }
  return rep;
}

}  // namespace gelfand
