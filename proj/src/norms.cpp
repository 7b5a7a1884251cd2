#include "gelfand/norms.hpp"

#include <algorithm>
#include <cmath>

#include "gelfand/errors.hpp"

namespace gelfand {

double integrate(const ScalarField& f, const Region& region, double excise_below) {
  const auto w = quadrature_weights(f.grid(), region, excise_below);
  double s = 0;
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * f[i];
  return s;
}

double lp_norm(const ScalarField& u, double p, const Region& region) {
  if (!(p >= 1)) throw InvalidArgument("lp_norm requires p >= 1");
  const Grid& g = u.grid();
  if (std::isinf(p)) {
    double m = 0;
    bool any = false;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!region.contains(g, i)) continue;
      any = true;
      m = std::max(m, std::abs(u[i]));
    }
    if (!any) throw InvalidArgument("lp_norm: empty region");
    return m;
  }
  bool any = false;
  for (std::size_t i = 0; i < g.size() && !any; ++i) any = region.contains(g, i);
  if (!any) throw InvalidArgument("lp_norm: empty region");
  const auto w = quadrature_weights(g, region);
  double s = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] == 0.0) continue;
    const double a = std::abs(u[i]);
    s += w[i] * (p == 1.0 ? a : p == 2.0 ? a * a : std::pow(a, p));
  }
  return p == 1.0 ? s : p == 2.0 ? std::sqrt(s) : std::pow(s, 1.0 / p);
}

double excision_radius(const Grid& grid, const Region& region) {
  if (region.lower() > 0) return 0.0;
  if (grid.kind() == GridKind::cartesian_rect) {
    const double h = std::max(grid.spacing(0), grid.spacing(1));
    double rmin = kInfinity;
    for (std::size_t i = 0; i < grid.size(); ++i) rmin = std::min(rmin, grid.radius(i));
    return rmin < h ? h : 0.0;
  }
  const auto r = grid.axis(0);
  return r.front() == 0.0 ? r[1] : 0.0;
}

double weighted_integral(const ScalarField& density, double a, const Region& region) {
  if (a < 0) throw InvalidArgument("weight exponent must be >= 0");
  const Grid& g = density.grid();
  const double cut = a > 0 ? excision_radius(g, region) : 0.0;
  const auto w = quadrature_weights(g, region, cut);
  double s = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] == 0.0) continue;
    const double r = g.radius(i);
    s += w[i] * (a == 0.0 ? 1.0 : std::pow(r, -a)) * density[i];
  }
  return s;
}

double weighted_dirichlet(const ScalarField& u, double a, const Region& region) {
  const auto grad = gradient(u);
  const auto g2 = grad.norm();
  std::vector<double> d(g2.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = g2[i] * g2[i];
  const Grid& g = u.grid();
  if (a >= g.n_dim() && region.lower() == 0.0) {
    // Gradient at the innermost nodes decides integrability of r^{-a}|grad u|^2.
    double rmin = kInfinity;
    for (std::size_t i = 0; i < g.size(); ++i) rmin = std::min(rmin, g.radius(i));
    double at_origin = 0, scale = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      scale = std::max(scale, g2[i]);
      if (g.radius(i) <= rmin + 1e-14) at_origin = std::max(at_origin, g2[i]);
    }
    if (rmin == 0.0 && at_origin > 1e-8 * std::max(scale, 1e-300)) {
      throw NonIntegrable("weight r^{-a} with a >= n_dim is not integrable against a gradient that does not vanish at the origin");
    }
  }
  return weighted_integral(ScalarField(u.grid_ptr(), std::move(d)), a, region);
}

double holder_seminorm(const ScalarField& u, double alpha, const Region& region) {
  if (!(alpha > 0 && alpha <= 1)) throw InvalidArgument("holder exponent must lie in (0, 1]");
  const Grid& g = u.grid();
  std::vector<std::size_t> nodes;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (region.contains(g, i)) nodes.push_back(i);
  if (nodes.empty()) throw InvalidArgument("holder_seminorm: empty region");

  std::vector<Point> pos(nodes.size());
  for (std::size_t k = 0; k < nodes.size(); ++k) pos[k] = g.position(nodes[k]);

  double best = 0;
  auto visit = [&](std::size_t a, std::size_t b) {
    const double dx = pos[a][0] - pos[b][0];
    const double dy = pos[a][1] - pos[b][1];
    const double d = std::sqrt(dx * dx + dy * dy);
    if (d <= 1e-14) return;
    const double q = std::abs(u[nodes[a]] - u[nodes[b]]) / (alpha == 1.0 ? d : std::pow(d, alpha));
    best = std::max(best, q);
  };

  const std::size_t n = nodes.size();
  constexpr std::size_t kMaxPairs = 1'000'000;
  if (n * (n - 1) / 2 <= kMaxPairs) {
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b) visit(a, b);
    return best;
  }
  const std::size_t anchors = std::max<std::size_t>(1, kMaxPairs / n);
  const std::size_t stride = (n + anchors - 1) / anchors;
  for (std::size_t a = 0; a < n; a += stride)
    for (std::size_t b = 0; b < n; ++b) visit(a, b);
  // Axis neighbours: consecutive entries along each tensor axis.
  std::vector<std::ptrdiff_t> where(g.size(), -1);
  for (std::size_t k = 0; k < n; ++k) where[nodes[k]] = static_cast<std::ptrdiff_t>(k);
  for (std::size_t k = 0; k < n; ++k) {
    const auto [i, j] = g.multi_index(nodes[k]);
    if (i + 1 < g.extent(0)) {
      const auto o = where[g.index(i + 1, j)];
      if (o >= 0) visit(k, static_cast<std::size_t>(o));
    }
    if (g.spatial_dim() == 2 && j + 1 < g.extent(1)) {
      const auto o = where[g.index(i, j + 1)];
      if (o >= 0) visit(k, static_cast<std::size_t>(o));
    }
  }
  return best;
}

double holder_norm(const ScalarField& u, double alpha, const Region& region) {
  return lp_norm(u, kInfinity, region) + holder_seminorm(u, alpha, region);
}

}  // namespace gelfand
