#pragma once

#include <Eigen/Sparse>
#include <array>
#include <memory>
#include <vector>

#include "gelfand/coefficients.hpp"
#include "gelfand/field.hpp"

namespace gelfand {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

enum class BoundaryKind { dirichlet, neumann };

/// Boundary conditions per face, in axis order {axis0 low, axis0 high, axis1 low, axis1 high}:
///   radial:    {inner, outer}      (a Neumann inner face at r = 0 is the symmetry centre)
///   polar:     {origin, arc, theta = 0, theta = pi}   (the origin is always Dirichlet)
///   cartesian: {x1 low, x1 high, x2 low, x2 high}
/// Dirichlet wins at corners shared with a Neumann face.
struct BoundarySpec {
  std::array<BoundaryKind, 4> faces{BoundaryKind::dirichlet, BoundaryKind::dirichlet, BoundaryKind::dirichlet,
                                    BoundaryKind::dirichlet};

  static BoundarySpec dirichlet() { return {}; }
  static BoundarySpec radial(BoundaryKind inner, BoundaryKind outer) {
    return {{inner, outer, BoundaryKind::dirichlet, BoundaryKind::dirichlet}};
  }
  /// Radial ball: symmetric centre, Dirichlet outer sphere.
  static BoundarySpec ball() { return radial(BoundaryKind::neumann, BoundaryKind::dirichlet); }
  /// Half-disk with Dirichlet flat part and the given condition on the arc.
  static BoundarySpec half_disk(BoundaryKind arc) {
    return {{BoundaryKind::dirichlet, arc, BoundaryKind::dirichlet, BoundaryKind::dirichlet}};
  }
};

/// Finite-difference discretization of L u = a_ij u_ij + b_i u_i.
///
/// `full()` is the N x N matrix over all nodes with empty Dirichlet rows;
/// `reduced()` is its restriction to the unknown (non-Dirichlet) nodes, i.e.
/// the operator with homogeneous Dirichlet data eliminated.
class DiscreteOperator {
 public:
  const Grid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const noexcept { return grid_; }
  const BoundarySpec& boundary() const noexcept { return bc_; }
  const SparseMatrix& full() const noexcept { return full_; }
  const SparseMatrix& reduced() const noexcept { return reduced_; }
  std::size_t unknown_count() const noexcept { return unknowns_.size(); }
  /// Node index of each unknown.
  const std::vector<std::size_t>& unknowns() const noexcept { return unknowns_; }
  /// Unknown index of a node, -1 for Dirichlet nodes.
  std::ptrdiff_t unknown_of(std::size_t node) const { return unknown_of_[node]; }
  bool is_dirichlet(std::size_t node) const { return unknown_of_[node] < 0; }
  /// Number of (node, axis) pairs that fell back to upwind first-order differences.
  std::size_t upwinded() const noexcept { return upwinded_; }

  /// Values at the unknown nodes.
  Eigen::VectorXd restrict(const ScalarField& u) const;
  /// Field with the given unknown values and zero Dirichlet data.
  ScalarField extend(const Eigen::VectorXd& x) const;

 private:
  friend DiscreteOperator assemble(const CoefficientField&, const BoundarySpec&);
  GridPtr grid_;
  BoundarySpec bc_;
  SparseMatrix full_;
  SparseMatrix reduced_;
  std::vector<std::size_t> unknowns_;
  std::vector<std::ptrdiff_t> unknown_of_;
  std::size_t upwinded_ = 0;
};

/// Centered second-order stencils (tensor 9-point for a_12 u_12), upwind
/// first-order terms where |B| h / (2 D) > 1 on an axis
/// (B includes the metric terms, e.g. (n-1) a / r near the radial centre). Polar grids use the
/// half-disk chart metric; radial grids the operator a (u'' + (n-1) u'/r) + b u'
/// with the symmetric limit n a u''(0) at r = 0.
DiscreteOperator assemble(const CoefficientField& coeffs, const BoundarySpec& bc = BoundarySpec::dirichlet());

/// Matrix-vector product using the field's boundary values; Dirichlet nodes return 0.
ScalarField apply(const DiscreteOperator& op, const ScalarField& u);

/// LU factorization of a square sparse matrix.
class LinearSolver {
 public:
  /// Throws SolverError("linear", ...) when the matrix is singular.
  explicit LinearSolver(const SparseMatrix& m);
  ~LinearSolver();
  LinearSolver(LinearSolver&&) noexcept;
  LinearSolver& operator=(LinearSolver&&) noexcept;

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
  /// log |det| and sign, for fold tracking.
  double log_abs_determinant() const;
  int determinant_sign() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace gelfand
