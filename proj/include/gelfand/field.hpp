#pragma once

#include <array>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "gelfand/grid.hpp"

namespace gelfand {

using Point = std::array<double, 2>;

/// Grid-sampled scalar function. Values are stored in grid index order.
class ScalarField {
 public:
  ScalarField() = default;
  ScalarField(GridPtr grid, std::vector<double> values);
  /// Zero field on the grid.
  explicit ScalarField(GridPtr grid);

  /// Samples `f` at the Cartesian node positions (radial grids pass (r, 0)).
  static ScalarField sample(GridPtr grid, const std::function<double(const Point&)>& f);

  const Grid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const noexcept { return grid_; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const noexcept { return values_[i]; }
  double& operator[](std::size_t i) noexcept { return values_[i]; }

  double max_abs() const;
  double min() const;
  double max() const;

  ScalarField& operator+=(const ScalarField& other);
  ScalarField& operator-=(const ScalarField& other);
  ScalarField& operator*=(double c);

 private:
  GridPtr grid_;
  std::vector<double> values_;
};

ScalarField operator+(ScalarField a, const ScalarField& b);
ScalarField operator-(ScalarField a, const ScalarField& b);
ScalarField operator*(double c, ScalarField a);

/// Per-node vectors of length grid.spatial_dim(), Cartesian components
/// (radial grids store the single radial component).
class VectorField {
 public:
  VectorField() = default;
  VectorField(GridPtr grid, std::vector<double> data);
  explicit VectorField(GridPtr grid);

  const Grid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const noexcept { return grid_; }
  int dim() const noexcept { return dim_; }
  double operator()(std::size_t node, int component) const noexcept { return data_[node * dim_ + component]; }
  double& operator()(std::size_t node, int component) noexcept { return data_[node * dim_ + component]; }
  std::span<const double> at(std::size_t node) const noexcept { return {data_.data() + node * dim_, static_cast<std::size_t>(dim_)}; }
  ScalarField component(int c) const;
  /// Pointwise Euclidean length.
  ScalarField norm() const;

 private:
  GridPtr grid_;
  int dim_ = 0;
  std::vector<double> data_;
};

/// Per-node dim x dim matrices, row-major.
class MatrixField {
 public:
  MatrixField() = default;
  explicit MatrixField(GridPtr grid);

  const Grid& grid() const { return *grid_; }
  int dim() const noexcept { return dim_; }
  double operator()(std::size_t node, int r, int c) const noexcept { return data_[(node * dim_ + r) * dim_ + c]; }
  double& operator()(std::size_t node, int r, int c) noexcept { return data_[(node * dim_ + r) * dim_ + c]; }
  /// Pointwise Frobenius norm.
  ScalarField frobenius() const;

 private:
  GridPtr grid_;
  int dim_ = 0;
  std::vector<double> data_;
};

/// Second-order centered differences, one-sided three-point at the ends.
/// Polar grids return Cartesian components; the origin uses a least-squares
/// fit of the one-sided radial derivatives.
VectorField gradient(const ScalarField& field);

/// Cartesian Hessian (1x1 d^2u/dr^2 on radial grids). Needs >= 4 nodes per axis.
MatrixField hessian(const ScalarField& field);

/// u_r = (x/|x|) . grad u, with u_r = 0 at r = 0.
ScalarField radial_derivative(const ScalarField& field);

/// Derivative of the given order along one tensor axis (native coordinates).
ScalarField axis_derivative(const ScalarField& field, int axis, int order);

/// Bilinear (linear on radial grids) interpolation at a Cartesian point.
/// Throws InvalidArgument outside the grid (with a 1e-12 relative slack).
double interpolate(const ScalarField& field, const Point& point);

/// CSV with header `coord1[,coord2],value`, native coordinates, 17 significant digits.
void write_csv(const ScalarField& field, std::ostream& out);
std::string to_csv(const ScalarField& field);

}  // namespace gelfand
