#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gelfand/coefficients.hpp"
#include "gelfand/field.hpp"
#include "gelfand/level_set.hpp"

namespace gelfand {

/// Psi(x) = ((Q (x - x0))_1, Phi(x) / |grad Phi(x0)|) with Q the Householder
/// reflection taking grad Phi(x0) / |grad Phi(x0)| to e_2. Chart coordinates
/// are z = Q (x - x0), in which D Psi(x0) = I.
class FlatteningMap {
 public:
  FlatteningMap(std::shared_ptr<const LevelSetDomain> domain, Vec2 x0);

  const LevelSetDomain& domain() const { return *domain_; }
  const Vec2& x0() const noexcept { return x0_; }
  const Mat2& rotation() const noexcept { return Q_; }
  double normal_derivative() const noexcept { return g0_; }

  /// Radii: R2 = min((4 [grad Phi] I)^{-1}, diag / 2), R1 = min(bound, R2 / 8), rho = 4 R1,
  /// with I = || |grad Phi|^{-1} ||_{boundary} and the R1 bound
  /// (16 sqrt 2 (1 + 8 G^2 I^2) I [grad Phi])^{-1}, G = sup |grad Phi| over the box.
  double R1 = 0, R2 = 0, rho = 0;
  double R1_bound = 0, R2_bound = 0;
  bool R2_capped = false;

  Vec2 psi(const Vec2& x) const;
  /// D Psi with respect to x.
  Mat2 jacobian(const Vec2& x) const;
  /// D Psi in chart coordinates (jacobian(x) Q^T); identity at x0.
  Mat2 chart_jacobian(const Vec2& x) const { return jacobian(x) * Q_.transpose(); }
  /// Hessians of Psi_1 (zero) and Psi_2 with respect to x.
  std::array<Mat2, 2> hessians(const Vec2& x) const;
  /// Inverse by safeguarded Newton in the last chart coordinate. Throws
  /// SolverError if no preimage lies within `search` of x0 along the chart line.
  Vec2 psi_inverse(const Vec2& y, double search = -1) const;

 private:
  std::shared_ptr<const LevelSetDomain> domain_;
  Vec2 x0_;
  Mat2 Q_;
  double g0_ = 0;
};

/// Throws InvalidArgument when x0 is not on the boundary or grad Phi(x0) = 0.
FlatteningMap build_flattening(const LevelSetDomain& domain, const Vec2& x0);

struct InclusionReport {
  /// Psi(B_R1(x0) cap Omega) in B+_{rho/2}
  bool first = true;
  /// B+_{rho/2} in B+_rho (geometric)
  bool second = true;
  /// B+_rho in Psi(B_R2(x0) cap Omega)
  bool third = true;
  std::optional<Vec2> first_witness;
  std::optional<Vec2> third_witness;
  /// max |Psi(x)| / (rho/2) over the first-inclusion samples
  double first_ratio = 0;
  /// max |Psi^{-1}(y) - x0| / R2 over the third-inclusion samples
  double third_ratio = 0;
  double roundtrip_error = 0;
  /// min det of the chart Jacobian over samples in B_R2(x0) cap Omega
  double det_min = 0;
  std::size_t samples = 0;
  bool all() const noexcept { return first && second && third; }
};

InclusionReport verify_inclusions(const FlatteningMap& map, std::size_t samples = 10000, std::uint64_t seed = 7);

/// Largest R1 (rho = 4 R1) in [map.R1, map.R2] passing the first and third inclusions, by bisection.
double empirical_R1(const FlatteningMap& map, std::size_t samples = 2000, std::uint64_t seed = 11);

struct TransformedCoefficients {
  /// On the half-disk chart grid of radius rho.
  CoefficientField field;
  /// Second-order part a_jk d_jk Psi_i of b_tilde, per node.
  std::vector<Vec2> curvature_drift;
};

/// A_tilde = D Psi A D Psi^T and b_tilde_i = b_k d_k Psi_i + a_jk d_jk Psi_i, sampled at
/// Psi^{-1} of each chart node. The declared bounds are c0/2 and 3 C0/2.
TransformedCoefficients transform_coefficients(const CoefficientModel& model, double c0, double C0,
                                               const FlatteningMap& map, const GridPtr& chart);

struct TransformedEllipticity {
  double min_eigenvalue = 0;
  double max_eigenvalue = 0;
  /// min_eigenvalue - c0/2 and 3 C0/2 - max_eigenvalue
  double lower_margin = 0;
  double upper_margin = 0;
  bool pass = false;
};

TransformedEllipticity verify_transformed_ellipticity(const TransformedCoefficients& tc, double c0, double C0,
                                                      double tol = 1e-9);

/// u o Psi^{-1} on the chart grid (bilinear interpolation of u).
ScalarField pushforward_solution(const ScalarField& u, const FlatteningMap& map, const GridPtr& chart);

}  // namespace gelfand
