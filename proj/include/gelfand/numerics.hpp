#pragma once

#include <span>
#include <vector>

namespace gelfand {

/// Finite-difference weights (Fornberg) for the derivative of order `order`
/// at `x0` using the nodes `xs`. Nodes need not be uniform.
std::vector<double> fd_weights(double x0, std::span<const double> xs, int order);

/// Surface measure of the unit sphere S^{n-1} in R^n (2 for n = 1).
double sphere_area(int n);

/// Gauss-Legendre rule on [-1, 1] with `points` nodes (supported: 4, 8, 12, 16, 20).
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
GaussRule gauss_legendre(int points);

/// Ordinary least-squares slope of y against x.
double least_squares_slope(std::span<const double> x, std::span<const double> y);

inline constexpr double kPi = 3.14159265358979323846;

}  // namespace gelfand
