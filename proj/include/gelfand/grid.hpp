#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace gelfand {

enum class GridKind { radial_1d, polar_half_disk, cartesian_rect };

std::string to_string(GridKind kind);

/// Tensor-product grid. Axis 0 is r (radial, polar) or x1 (cartesian);
/// axis 1 is theta (polar) or x2 (cartesian). Nodes are stored row-major,
/// index = i * extent(1) + j.
///
/// `n_dim` is the ambient dimension used for radial Jacobians r^{n-1}; on
/// two-dimensional grids it is always 2.
class Grid {
 public:
  static Grid radial(double r_min, double r_max, std::size_t nodes, int n_dim);
  /// Geometric nodes r_i = r_min (r_max / r_min)^{i/(N-1)}; requires r_min > 0.
  static Grid radial_geometric(double r_min, double r_max, std::size_t nodes, int n_dim);
  /// Nodes r_min + (r_max - r_min) sinh(beta t) / sinh(beta), t uniform in [0, 1].
  /// Clusters nodes near r_min with smoothly varying spacing.
  static Grid radial_stretched(double r_min, double r_max, std::size_t nodes, int n_dim, double beta);
  static Grid radial_from_nodes(std::vector<double> nodes, int n_dim);
  static Grid polar_half_disk(double radius, std::size_t n_r, std::size_t n_theta);
  static Grid cartesian(double x1_lo, double x1_hi, std::size_t n1, double x2_lo, double x2_hi,
                        std::size_t n2);

  GridKind kind() const noexcept { return kind_; }
  int n_dim() const noexcept { return n_dim_; }
  /// Number of tensor axes (1 or 2); also the length of gradient vectors.
  int spatial_dim() const noexcept { return static_cast<int>(axes_.size()); }
  std::size_t size() const noexcept { return size_; }
  std::size_t extent(int axis) const { return axes_.at(axis).size(); }
  std::span<const double> axis(int a) const { return axes_.at(a); }
  /// Largest node spacing along the axis.
  double spacing(int axis) const;
  bool uniform(int axis) const;

  std::size_t index(std::size_t i, std::size_t j = 0) const noexcept {
    return axes_.size() == 1 ? i : i * axes_[1].size() + j;
  }
  std::array<std::size_t, 2> multi_index(std::size_t idx) const noexcept;

  /// Cartesian position. Radial grids report (r, 0).
  std::array<double, 2> position(std::size_t idx) const noexcept;
  /// Native coordinates (r | r, theta | x1, x2).
  std::array<double, 2> coordinates(std::size_t idx) const noexcept;
  /// Euclidean distance to the origin.
  double radius(std::size_t idx) const noexcept;
  /// Radius of the outermost nodes (radial, polar) or half the box diagonal.
  double outer_radius() const;

  /// Same grid with all lengths multiplied by `factor` (angles unchanged).
  Grid scaled(double factor) const;

 private:
  Grid(GridKind kind, int n_dim, std::vector<std::vector<double>> axes);

  GridKind kind_;
  int n_dim_;
  std::vector<std::vector<double>> axes_;
  std::size_t size_ = 0;
};

using GridPtr = std::shared_ptr<const Grid>;

inline GridPtr make_grid(Grid g) { return std::make_shared<const Grid>(std::move(g)); }

/// Integration / sampling region, in the same length units as the grid.
struct Region {
  enum class Kind { whole, ball, half_ball, annulus, half_annulus };
  Kind kind = Kind::whole;
  double inner = 0.0;
  double outer = 0.0;

  static Region whole() { return {}; }
  static Region ball(double rho);
  static Region half_ball(double rho);
  static Region annulus(double rho1, double rho2);
  static Region half_annulus(double rho1, double rho2);

  bool is_half() const noexcept { return kind == Kind::half_ball || kind == Kind::half_annulus; }
  /// Radial bounds; `whole` reports [0, inf).
  double lower() const noexcept { return inner; }
  double upper() const noexcept;
  bool contains(const Grid& grid, std::size_t idx) const noexcept;
};

/// Per-node quadrature weights w with sum_i w_i g_i ~ integral of g over the
/// region (trapezoidal in each axis, radial Jacobian r^{n-1} |S^{n-1}| on radial
/// grids, r on polar grids). Radii below `excise_below` are removed.
std::vector<double> quadrature_weights(const Grid& grid, const Region& region,
                                       double excise_below = 0.0);

}  // namespace gelfand
