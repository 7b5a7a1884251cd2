#include "gelfand/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gelfand/errors.hpp"
#include "gelfand/numerics.hpp"

namespace gelfand {

std::string to_string(GridKind kind) {
  switch (kind) {
    case GridKind::radial_1d: return "radial_1d";
    case GridKind::polar_half_disk: return "polar_half_disk";
    case GridKind::cartesian_rect: return "cartesian_rect";
  }
  return "unknown";
}

namespace {

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = lo + (hi - lo) * static_cast<double>(i) / (n - 1);
  v.back() = hi;
  return v;
}

void check_axis(const std::vector<double>& a) {
  if (a.size() < 3) throw DegenerateGrid("grid axis needs at least 3 nodes");
  for (std::size_t i = 1; i < a.size(); ++i) {
    if (!(a[i] > a[i - 1])) throw InvalidArgument("grid nodes must be strictly increasing");
  }
}

}  // namespace

Grid::Grid(GridKind kind, int n_dim, std::vector<std::vector<double>> axes)
    : kind_(kind), n_dim_(n_dim), axes_(std::move(axes)) {
  for (const auto& a : axes_) check_axis(a);
  size_ = 1;
  for (const auto& a : axes_) size_ *= a.size();
  if (n_dim_ < 1) throw InvalidArgument("n_dim must be >= 1");
  if (axes_.size() == 2 && n_dim_ != 2) throw InvalidArgument("two-dimensional grids require n_dim = 2");
}

Grid Grid::radial(double r_min, double r_max, std::size_t nodes, int n_dim) {
  if (r_min < 0 || r_max <= r_min) throw InvalidArgument("radial grid requires 0 <= r_min < r_max");
  if (nodes < 3) throw DegenerateGrid("grid axis needs at least 3 nodes");
  return Grid(GridKind::radial_1d, n_dim, {linspace(r_min, r_max, nodes)});
}

Grid Grid::radial_geometric(double r_min, double r_max, std::size_t nodes, int n_dim) {
  if (r_min <= 0 || r_max <= r_min) throw InvalidArgument("geometric radial grid requires 0 < r_min < r_max");
  if (nodes < 3) throw DegenerateGrid("grid axis needs at least 3 nodes");
  std::vector<double> r(nodes);
  const double ratio = std::log(r_max / r_min);
  for (std::size_t i = 0; i < nodes; ++i) r[i] = r_min * std::exp(ratio * static_cast<double>(i) / (nodes - 1));
  r.front() = r_min;
  r.back() = r_max;
  return Grid(GridKind::radial_1d, n_dim, {std::move(r)});
}

Grid Grid::radial_stretched(double r_min, double r_max, std::size_t nodes, int n_dim, double beta) {
  if (r_min < 0 || r_max <= r_min) throw InvalidArgument("radial grid requires 0 <= r_min < r_max");
  if (nodes < 3) throw DegenerateGrid("grid axis needs at least 3 nodes");
  if (beta <= 0) return radial(r_min, r_max, nodes, n_dim);
  std::vector<double> r(nodes);
  const double s = std::sinh(beta);
  for (std::size_t i = 0; i < nodes; ++i) {
    const double t = static_cast<double>(i) / (nodes - 1);
    r[i] = r_min + (r_max - r_min) * std::sinh(beta * t) / s;
  }
  r.front() = r_min;
  r.back() = r_max;
  return Grid(GridKind::radial_1d, n_dim, {std::move(r)});
}

Grid Grid::radial_from_nodes(std::vector<double> nodes, int n_dim) {
  if (!nodes.empty() && nodes.front() < 0) throw InvalidArgument("radial grid requires r_min >= 0");
  return Grid(GridKind::radial_1d, n_dim, {std::move(nodes)});
}

Grid Grid::polar_half_disk(double radius, std::size_t n_r, std::size_t n_theta) {
  if (radius <= 0) throw InvalidArgument("polar grid radius must be positive");
  if (n_r < 3 || n_theta < 3) throw DegenerateGrid("grid axis needs at least 3 nodes");
  return Grid(GridKind::polar_half_disk, 2, {linspace(0.0, radius, n_r), linspace(0.0, kPi, n_theta)});
}

Grid Grid::cartesian(double x1_lo, double x1_hi, std::size_t n1, double x2_lo, double x2_hi,
                     std::size_t n2) {
  if (x1_hi <= x1_lo || x2_hi <= x2_lo) throw InvalidArgument("cartesian grid bounds must be increasing");
  if (n1 < 3 || n2 < 3) throw DegenerateGrid("grid axis needs at least 3 nodes");
  return Grid(GridKind::cartesian_rect, 2, {linspace(x1_lo, x1_hi, n1), linspace(x2_lo, x2_hi, n2)});
}

double Grid::spacing(int axis) const {
  const auto& a = axes_.at(axis);
  double h = 0;
  for (std::size_t i = 1; i < a.size(); ++i) h = std::max(h, a[i] - a[i - 1]);
  return h;
}

bool Grid::uniform(int axis) const {
  const auto& a = axes_.at(axis);
  const double h = (a.back() - a.front()) / (a.size() - 1);
  for (std::size_t i = 1; i < a.size(); ++i) {
    if (std::abs((a[i] - a[i - 1]) - h) > 1e-9 * h) return false;
  }
  return true;
}

std::array<std::size_t, 2> Grid::multi_index(std::size_t idx) const noexcept {
  if (axes_.size() == 1) return {idx, 0};
  return {idx / axes_[1].size(), idx % axes_[1].size()};
}

std::array<double, 2> Grid::coordinates(std::size_t idx) const noexcept {
  const auto [i, j] = multi_index(idx);
  if (axes_.size() == 1) return {axes_[0][i], 0.0};
  return {axes_[0][i], axes_[1][j]};
}

std::array<double, 2> Grid::position(std::size_t idx) const noexcept {
  const auto c = coordinates(idx);
  if (kind_ == GridKind::polar_half_disk) return {c[0] * std::cos(c[1]), c[0] * std::sin(c[1])};
  return c;
}

double Grid::radius(std::size_t idx) const noexcept {
  const auto c = coordinates(idx);
  switch (kind_) {
    case GridKind::radial_1d:
    case GridKind::polar_half_disk: return c[0];
    case GridKind::cartesian_rect: return std::hypot(c[0], c[1]);
  }
  return 0.0;
}

double Grid::outer_radius() const {
  if (kind_ == GridKind::cartesian_rect) {
    return 0.5 * std::hypot(axes_[0].back() - axes_[0].front(), axes_[1].back() - axes_[1].front());
  }
  return axes_[0].back();
}

Grid Grid::scaled(double factor) const {
  if (!(factor > 0)) throw InvalidArgument("grid scale factor must be positive");
  auto axes = axes_;
  for (double& x : axes[0]) x *= factor;
  if (kind_ == GridKind::cartesian_rect)
    for (double& x : axes[1]) x *= factor;
  return Grid(kind_, n_dim_, std::move(axes));
}

Region Region::ball(double rho) {
  if (!(rho > 0)) throw InvalidArgument("ball radius must be positive");
  return {Kind::ball, 0.0, rho};
}
Region Region::half_ball(double rho) {
  if (!(rho > 0)) throw InvalidArgument("half-ball radius must be positive");
  return {Kind::half_ball, 0.0, rho};
}
Region Region::annulus(double rho1, double rho2) {
  if (!(rho1 >= 0 && rho2 > rho1)) throw InvalidArgument("annulus requires 0 <= rho1 < rho2");
  return {Kind::annulus, rho1, rho2};
}
Region Region::half_annulus(double rho1, double rho2) {
  if (!(rho1 >= 0 && rho2 > rho1)) throw InvalidArgument("half-annulus requires 0 <= rho1 < rho2");
  return {Kind::half_annulus, rho1, rho2};
}

double Region::upper() const noexcept {
  return kind == Kind::whole ? std::numeric_limits<double>::infinity() : outer;
}

bool Region::contains(const Grid& grid, std::size_t idx) const noexcept {
  const double tol = 1e-12;
  const double r = grid.radius(idx);
  if (r < lower() - tol || r > upper() + tol) return false;
  if (is_half() && grid.kind() == GridKind::cartesian_rect && grid.position(idx)[1] < -tol) return false;
  return true;
}

namespace {

// Weights of the piecewise-linear interpolant integrated over [lo, hi].
std::vector<double> clipped_trapezoid(std::span<const double> x, double lo, double hi) {
  std::vector<double> w(x.size(), 0.0);
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    const double a = std::max(x[i], lo);
    const double b = std::min(x[i + 1], hi);
    if (!(b > a)) continue;
    const double h = x[i + 1] - x[i];
    const double xr = x[i + 1];
    const double xl = x[i];
    w[i] += ((xr - a) * (xr - a) - (xr - b) * (xr - b)) / (2 * h);
    w[i + 1] += ((b - xl) * (b - xl) - (a - xl) * (a - xl)) / (2 * h);
  }
  return w;
}

}  // namespace

std::vector<double> quadrature_weights(const Grid& grid, const Region& region, double excise_below) {
  const double lo = std::max(region.lower(), excise_below);
  const double hi = region.upper();
  std::vector<double> w(grid.size(), 0.0);
  switch (grid.kind()) {
    case GridKind::radial_1d: {
      const auto r = grid.axis(0);
      auto wr = clipped_trapezoid(r, lo, hi);
      const double factor = sphere_area(grid.n_dim()) * (region.is_half() ? 0.5 : 1.0);
      for (std::size_t i = 0; i < r.size(); ++i) w[i] = factor * wr[i] * std::pow(r[i], grid.n_dim() - 1);
      break;
    }
    case GridKind::polar_half_disk: {
      const auto r = grid.axis(0);
      const auto th = grid.axis(1);
      auto wr = clipped_trapezoid(r, lo, hi);
      auto wt = clipped_trapezoid(th, th.front(), th.back());
      for (std::size_t i = 0; i < r.size(); ++i)
        for (std::size_t j = 0; j < th.size(); ++j) w[grid.index(i, j)] = wr[i] * r[i] * wt[j];
      break;
    }
    case GridKind::cartesian_rect: {
      const auto x = grid.axis(0);
      const auto y = grid.axis(1);
      auto wx = clipped_trapezoid(x, x.front(), x.back());
      auto wy = clipped_trapezoid(y, y.front(), y.back());
      for (std::size_t i = 0; i < x.size(); ++i) {
        for (std::size_t j = 0; j < y.size(); ++j) {
          const auto idx = grid.index(i, j);
          if (region.contains(grid, idx) && grid.radius(idx) >= excise_below) w[idx] = wx[i] * wy[j];
        }
      }
      break;
    }
  }
  return w;
}

}  // namespace gelfand
