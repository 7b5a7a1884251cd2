#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>

#include "gelfand/expression.hpp"
#include "gelfand/field.hpp"
#include "gelfand/grid.hpp"

namespace gelfand {

using Mat2 = Eigen::Matrix2d;
using Vec2 = Eigen::Vector2d;

/// Closed-form coefficients of L u = a_ij u_ij + b_i u_i.
///
/// Planar models use expressions in (x1, x2) for a11, a12, a22, b1, b2.
/// Radial models describe A = a(r) I and the radial drift b(r) x/|x|, both in r.
class CoefficientModel {
 public:
  static CoefficientModel laplacian();
  static CoefficientModel planar(const std::string& a11, const std::string& a12, const std::string& a22,
                                 const std::string& b1, const std::string& b2);
  static CoefficientModel radial(const std::string& a, const std::string& b);

  bool is_radial() const noexcept { return radial_; }
  /// A and b at a Cartesian point ((r, 0) for radial models; then only the
  /// (0,0) entry and first component are meaningful).
  Mat2 A(const Point& x) const;
  Vec2 b(const Point& x) const;
  /// d A / d x_k at a planar point (k = 0, 1).
  Mat2 dA(const Point& x, int k) const;

 private:
  bool radial_ = false;
  Expression a11_, a12_, a22_, b1_, b2_;
};

/// Coefficients sampled on a grid, with declared ellipticity bounds
/// c0 <= A <= C0 and declared size eps >= ||DA||_inf + ||b||_inf.
///
/// On radial grids A is the scalar a(r) (meaning a(r) I) and b the radial drift.
class CoefficientField {
 public:
  CoefficientField() = default;
  CoefficientField(GridPtr grid, std::vector<Mat2> A, std::vector<Vec2> b, double c0, double C0, double eps_size);

  static CoefficientField identity(GridPtr grid);
  static CoefficientField sample(GridPtr grid, const CoefficientModel& model, double c0, double C0, double eps_size);

  const Grid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const noexcept { return grid_; }
  int dim() const noexcept { return grid_->spatial_dim(); }
  const Mat2& A(std::size_t node) const { return A_[node]; }
  const Vec2& b(std::size_t node) const { return b_[node]; }
  double c0() const noexcept { return c0_; }
  double C0() const noexcept { return C0_; }
  double eps_size() const noexcept { return eps_size_; }

  /// Component field a_rc or b_c (for finite differencing).
  ScalarField a_component(int r, int c) const;
  ScalarField b_component(int c) const;

 private:
  GridPtr grid_;
  std::vector<Mat2> A_;
  std::vector<Vec2> b_;
  double c0_ = 1.0;
  double C0_ = 1.0;
  double eps_size_ = 0.0;
};

struct EllipticityReport {
  double min_eigenvalue = 0;
  double max_eigenvalue = 0;
  std::size_t worst_min_node = 0;
  std::size_t worst_max_node = 0;
  bool pass = false;
  /// Sampled Lipschitz quotient of A plus sup |b|.
  double eps_measured = 0;
  bool eps_pass = false;
};

/// Per-node extremal eigenvalues against [c0, C0] (relative tolerance 1e-12).
/// Throws InvalidArgument if some A is not symmetric.
EllipticityReport validate_ellipticity(const CoefficientField& coeffs);

/// b_hat_i = b_i - d_k a_ki.
VectorField to_divergence_form(const CoefficientField& coeffs);

/// |p|_A = (a_ij p_i p_j)^{1/2}; throws InvalidArgument unless A is positive definite.
double anorm(const Eigen::VectorXd& p, const Eigen::MatrixXd& A);

/// Coefficients of L^tau v = tau^{-2} a_ij(tau x) v_ij + tau^{-1} b_i(tau x) v_i,
/// sampled on `target` (default: the coefficient grid scaled by 1/tau) by
/// interpolating the original samples at tau x.
CoefficientField rescale_operator(const CoefficientField& coeffs, double tau,
                                  std::optional<GridPtr> target = std::nullopt);

}  // namespace gelfand
