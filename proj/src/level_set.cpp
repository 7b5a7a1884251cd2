#include "gelfand/level_set.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "gelfand/errors.hpp"

namespace gelfand {

double Box::diagonal() const { return std::hypot(hi[0] - lo[0], hi[1] - lo[1]); }

bool Box::contains(const Vec2& x) const {
  return x[0] >= lo[0] && x[0] <= hi[0] && x[1] >= lo[1] && x[1] <= hi[1];
}

double bisect(const std::function<double(double)>& g, double a, double b, double tol) {
  double ga = g(a);
  for (int i = 0; i < 200 && std::abs(b - a) > tol; ++i) {
    const double m = 0.5 * (a + b);
    const double gm = g(m);
    if (gm == 0) return m;
    if ((gm > 0) == (ga > 0)) {
      a = m;
      ga = gm;
    } else {
      b = m;
    }
  }
  return 0.5 * (a + b);
}

namespace {

double spectral_norm(const Mat2& H) {
  const double tr = 0.5 * (H(0, 0) + H(1, 1));
  const double det = H(0, 0) * H(1, 1) - H(0, 1) * H(1, 0);
  const double disc = std::sqrt(std::max(0.0, tr * tr - det));
  return std::max(std::abs(tr + disc), std::abs(tr - disc));
}

}  // namespace

LevelSetDomain::LevelSetDomain(std::string name, const std::string& phi, Box box, std::optional<double> lipschitz_grad,
                               Vec2 center)
    : name_(std::move(name)), box_(box), center_(center) {
  if (!(box.hi[0] > box.lo[0] && box.hi[1] > box.lo[1])) throw InvalidArgument("level set: empty bounding box");
  phi_ = Expression::parse(phi, {"x1", "x2"});
  d1_ = phi_.derivative(0);
  d2_ = phi_.derivative(1);
  d11_ = d1_.derivative(0);
  d12_ = d1_.derivative(1);
  d22_ = d2_.derivative(1);

  // Constants sampled on a 201 x 201 lattice (non-finite points skipped). The
  // Lipschitz constant of grad Phi is taken over the band |Phi| <= 1/2 around the
  // boundary: catalog functions such as 1 - |x| are C^{1,1} only away from the origin.
  constexpr int M = 201;
  constexpr double kBand = 0.5;
  double lip = 0;
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < M; ++j) {
      const Vec2 x(box_.lo[0] + (box_.hi[0] - box_.lo[0]) * i / (M - 1),
                   box_.lo[1] + (box_.hi[1] - box_.lo[1]) * j / (M - 1));
      const Vec2 g = grad(x);
      if (g.allFinite()) grad_sup_ = std::max(grad_sup_, g.norm());
      const Mat2 H = hessian(x);
      if (H.allFinite() && std::abs(this->phi(x)) <= kBand) lip = std::max(lip, spectral_norm(H));
    }
  lipschitz_supplied_ = lipschitz_grad.has_value();
  lipschitz_grad_ = lipschitz_grad.value_or(lip);
  if (lipschitz_grad_ < 0) throw InvalidArgument("level set: negative Lipschitz constant");

  // Boundary cloud from sign changes on grid edges.
  constexpr int G = 256;
  const double hx = (box_.hi[0] - box_.lo[0]) / (G - 1), hy = (box_.hi[1] - box_.lo[1]) / (G - 1);
  const double tol = 1e-14 * diameter();
  std::vector<double> vals(static_cast<std::size_t>(G) * G);
  auto at = [&](int i, int j) { return Vec2(box_.lo[0] + hx * i, box_.lo[1] + hy * j); };
  for (int i = 0; i < G; ++i)
    for (int j = 0; j < G; ++j) vals[static_cast<std::size_t>(i) * G + j] = this->phi(at(i, j));
  auto v = [&](int i, int j) { return vals[static_cast<std::size_t>(i) * G + j]; };
  for (int i = 0; i < G; ++i)
    for (int j = 0; j < G; ++j) {
      if (i + 1 < G && (v(i, j) > 0) != (v(i + 1, j) > 0)) {
        const Vec2 a = at(i, j);
        const double t = bisect([&](double s) { return this->phi(Vec2(s, a[1])); }, a[0], a[0] + hx, tol);
        cloud_.emplace_back(t, a[1]);
      }
      if (j + 1 < G && (v(i, j) > 0) != (v(i, j + 1) > 0)) {
        const Vec2 a = at(i, j);
        const double t = bisect([&](double s) { return this->phi(Vec2(a[0], s)); }, a[1], a[1] + hy, tol);
        cloud_.emplace_back(a[0], t);
      }
    }
  if (cloud_.empty()) throw InvalidArgument(fmt::format("level set '{}' has no boundary inside the box", name_));
  for (const auto& p : cloud_) {
    const double g = grad(p).norm();
    if (!(g > 0)) throw InvalidArgument(fmt::format("level set '{}': vanishing gradient on the boundary", name_));
    inv_grad_bound_ = std::max(inv_grad_bound_, 1.0 / g);
  }
  for (std::size_t a = 0; a < cloud_.size(); ++a) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < cloud_.size(); ++b)
      if (a != b) best = std::min(best, (cloud_[a] - cloud_[b]).norm());
    if (std::isfinite(best)) cloud_resolution_ = std::max(cloud_resolution_, best);
  }
}

LevelSetDomain LevelSetDomain::half_plane() {
  return LevelSetDomain("half_plane", "x2", Box{{-1, -1}, {1, 1}}, 0.0, Vec2(0, 0.5));
}

LevelSetDomain LevelSetDomain::unit_ball() {
  return LevelSetDomain("ball", "1 - x1^2 - x2^2", Box{{-1.2, -1.2}, {1.2, 1.2}}, 2.0);
}

LevelSetDomain LevelSetDomain::unit_ball_distance() {
  return LevelSetDomain("ball_distance", "1 - sqrt(x1^2 + x2^2)", Box{{-1.2, -1.2}, {1.2, 1.2}});
}

LevelSetDomain LevelSetDomain::ellipse(double ratio) {
  if (!(ratio >= 1)) throw InvalidArgument("ellipse axis ratio must be >= 1");
  const double b = 1.0 / ratio;
  return LevelSetDomain(fmt::format("ellipse({})", ratio), fmt::format("1 - x1^2 - ({:.17g}*x2)^2", ratio),
                        Box{{-1.2, -b - 0.2}, {1.2, b + 0.2}}, 2.0 * ratio * ratio);
}

LevelSetDomain LevelSetDomain::perturbed_ball() {
  return LevelSetDomain("perturbed_ball", "1 - x1^2 - x2^2 + 0.05*sin(3*theta)", Box{{-1.3, -1.3}, {1.3, 1.3}});
}

LevelSetDomain LevelSetDomain::catalog(const std::string& name) {
  if (name == "half_plane") return half_plane();
  if (name == "ball") return unit_ball();
  if (name == "ball_distance") return unit_ball_distance();
  if (name == "ellipse") return ellipse();
  if (name == "perturbed_ball") return perturbed_ball();
  throw InvalidArgument(fmt::format("unknown catalog domain '{}'", name));
}

double LevelSetDomain::phi(const Vec2& x) const { return phi_({x[0], x[1]}); }

Vec2 LevelSetDomain::grad(const Vec2& x) const { return {d1_({x[0], x[1]}), d2_({x[0], x[1]})}; }

Mat2 LevelSetDomain::hessian(const Vec2& x) const {
  const double a = d11_({x[0], x[1]}), b = d12_({x[0], x[1]}), c = d22_({x[0], x[1]});
  Mat2 H;
  H << a, b, b, c;
  return H;
}

Vec2 LevelSetDomain::project(const Vec2& x) const {
  // Three nearest cloud points as starts.
  std::vector<std::pair<double, std::size_t>> near;
  near.reserve(cloud_.size());
  for (std::size_t i = 0; i < cloud_.size(); ++i) near.emplace_back((cloud_[i] - x).squaredNorm(), i);
  const std::size_t k = std::min<std::size_t>(3, near.size());
  std::partial_sort(near.begin(), near.begin() + static_cast<std::ptrdiff_t>(k), near.end());

  Vec2 best = cloud_[near[0].second];
  double best_d = (best - x).norm();
  for (std::size_t s = 0; s < k; ++s) {
    Vec2 y = cloud_[near[s].second];
    Vec2 g = grad(y);
    double mu = (x - y).dot(g) / g.squaredNorm();
    bool ok = false;
    // F(y, mu) = (y - x + mu grad Phi(y), Phi(y)) = 0
    for (int it = 0; it < 50; ++it) {
      g = grad(y);
      const Mat2 H = hessian(y);
      Eigen::Matrix3d Jm;
      Jm.topLeftCorner<2, 2>() = Mat2::Identity() + mu * H;
      Jm.block<2, 1>(0, 2) = g;
      Jm.block<1, 2>(2, 0) = g.transpose();
      Jm(2, 2) = 0;
      Eigen::Vector3d F;
      F.head<2>() = y - x + mu * g;
      F[2] = phi(y);
      const Eigen::Vector3d d = Jm.fullPivLu().solve(-F);
      if (!d.allFinite()) break;
      y += d.head<2>();
      mu += d[2];
      if (d.head<2>().norm() <= 1e-15 * diameter()) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      // Fall back to the start point pulled onto the surface.
      y = cloud_[near[s].second];
      for (int it = 0; it < 5; ++it) {
        g = grad(y);
        y -= phi(y) * g / g.squaredNorm();
      }
    }
    if (!y.allFinite()) continue;
    if (std::abs(phi(y)) > 1e-10 * std::max(1.0, grad_sup_) * diameter()) continue;
    const double d = (y - x).norm();
    if (d < best_d) {
      best_d = d;
      best = y;
    }
  }
  return best;
}

double LevelSetDomain::signed_distance(const Vec2& x) const {
  const double d = (project(x) - x).norm();
  return phi(x) >= 0 ? d : -d;
}

std::vector<Vec2> LevelSetDomain::interior_samples(std::size_t count, std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> ux(box_.lo[0], box_.hi[0]), uy(box_.lo[1], box_.hi[1]);
  std::vector<Vec2> out;
  out.reserve(count);
  std::size_t tries = 0;
  while (out.size() < count) {
    if (++tries > 1000 * count + 1000) throw InvalidArgument("level set: interior has negligible area in the box");
    const Vec2 x(ux(rng), uy(rng));
    if (inside(x)) out.push_back(x);
  }
  return out;
}

}  // namespace gelfand
