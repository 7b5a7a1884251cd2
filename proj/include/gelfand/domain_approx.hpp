#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "gelfand/level_set.hpp"

namespace gelfand {

/// L^{-1} d <= Phi <= L d on interior samples (d = distance to the boundary).
struct Comparability {
  double L_raw = 1;  // max(sup Phi/d, sup d/Phi, 1) over the samples
  double L = 1;      // L_raw inflated by 10%
  double min_ratio = 0, max_ratio = 0;
  std::size_t samples = 0;
};

/// Throws InvalidArgument when the sampled ratio is unbounded (L_raw > 1e4, degenerate gradient).
Comparability comparability_constant(const LevelSetDomain& domain, std::size_t samples = 10000,
                                     std::uint64_t seed = 5);

/// Band {|d| < rho} on which grad Phi(x) . n(x0) >= floor = 1 / (2 ||1/|grad Phi|||_boundary),
/// x0 the projection of x. rho is the smallest distance of a failing lattice point, less one
/// lattice spacing.
struct GradientBand {
  double rho = 0;
  double floor = 0;
};

GradientBand gradient_band(const LevelSetDomain& domain, std::size_t lattice = 121);

/// Phi_k = Phi * eta_eps - 2 L eps with eta the normalized bump (1 - |y|^2)^4 on B_eps.
/// Convolution by a polar rule: Gauss-Legendre in r, trapezoid in theta.
class MollifiedDomain {
 public:
  MollifiedDomain(std::shared_ptr<const LevelSetDomain> domain, int k, double eps, double L, int radial_points = 8,
                  int angular_points = 16);

  int k() const noexcept { return k_; }
  double eps() const noexcept { return eps_; }
  double L() const noexcept { return L_; }
  const LevelSetDomain& domain() const { return *domain_; }
  /// eps (2 L^2 + 1)
  double hausdorff_bound() const { return eps_ * (2 * L_ * L_ + 1); }

  /// Phi * eta without the shift.
  double smoothed(const Vec2& x) const;
  double phi(const Vec2& x) const { return smoothed(x) - 2 * L_ * eps_; }
  Vec2 grad(const Vec2& x) const;
  Mat2 hessian(const Vec2& x) const;
  bool inside(const Vec2& x) const { return phi(x) > 0; }

  /// |phi(x) - phi_ref(x)| against the 12 x 24 rule.
  double quadrature_error(const Vec2& x) const;

 private:
  std::shared_ptr<const LevelSetDomain> domain_;
  int k_;
  double eps_, L_;
  std::vector<Vec2> offsets_;  // unit-disk nodes, scaled by eps on use
  std::vector<double> weights_;
};

struct MollifyOptions {
  int k_max = 6;
  /// When unset, comparability_constant(domain).L.
  std::optional<double> L;
  /// When unset, gradient_band(domain).rho.
  std::optional<double> rho;
};

/// eps_{k+1} = eps_k / (2 (2 L^2 + 1)). Throws InvalidArgument unless
/// rho - eps_1 > eps_1 (2 L^2 + 1).
std::vector<MollifiedDomain> mollify_domain(const LevelSetDomain& domain, double eps1, const MollifyOptions& options = {});

/// Points on a star-shaped boundary {f = 0} along equally spaced rays from `center`.
struct BoundarySample {
  std::vector<Vec2> points;  // ordered by angle
  double spacing = 0;        // largest gap between consecutive points
};

BoundarySample ray_boundary(const MollifiedDomain& m, std::size_t rays = 360);
/// The boundary of the original domain, same rays.
BoundarySample ray_boundary(const LevelSetDomain& domain, std::size_t rays = 360);

struct HausdorffEstimate {
  double distance = 0;       // max of the two one-sided values
  double from_sample = 0;    // sup over the sample of dist(., boundary of Omega), by projection
  double to_sample = 0;      // sup over boundary-of-Omega points of dist(., sample polygon)
  double resolution = 0;     // spacing of the sample
};

/// Throws InvalidArgument on an empty sample.
HausdorffEstimate hausdorff_boundary_distance(const BoundarySample& sample, const LevelSetDomain& domain);
HausdorffEstimate hausdorff_boundary_distance(const MollifiedDomain& m, std::size_t rays = 360);

struct GradientFloor {
  double min_grad = 0;
  double floor = 0;  // 1 / (2 ||1/|grad Phi|||_boundary)
  bool pass = false;
};

GradientFloor boundary_gradient_floor(const MollifiedDomain& m, std::size_t rays = 360, double tol = 1e-9);

struct NestingVerdict {
  int k = 0;               // checks closure(Omega_k) in Omega_{k+1} in Omega
  bool nested = true;
  std::size_t checked = 0;
  std::optional<Vec2> witness;
};

/// Consecutive pairs of `seq` in the given order, on boundary samples of Omega_k and
/// Omega_{k+1} plus random points in a band around the boundary. Throws when seq has < 2 entries.
std::vector<NestingVerdict> verify_nesting(const std::vector<MollifiedDomain>& seq, std::size_t samples = 2000,
                                           std::uint64_t seed = 13);

/// Interior samples with d >= eps_{k-1} that fall outside Omega_k (k >= 2).
struct ExhaustionReport {
  std::size_t checked = 0;
  std::size_t violations = 0;
  std::optional<Vec2> witness;
};

ExhaustionReport exhaustion_check(const std::vector<MollifiedDomain>& seq, std::size_t samples = 2000,
                                  std::uint64_t seed = 17);

/// sup ||D^2 Phi_k|| over points with |Phi| <= 0.4.
double sampled_lipschitz(const MollifiedDomain& m, std::size_t samples = 2000, std::uint64_t seed = 19);

struct ApproxEntry {
  int k = 0;
  double eps = 0;
  bool nested = true;
  double hausdorff = 0;
  double hausdorff_bound = 0;
  double resolution = 0;
  GradientFloor grad;
  double lipschitz = 0;
};

struct ApproxReport {
  double L = 0, L_raw = 0, rho = 0, eps1_bound = 0;
  std::vector<ApproxEntry> entries;
  ExhaustionReport exhaustion;
  bool recursion_exact = true;
  bool all() const;
};

/// Full per-k verification, per-k work spread over `threads`.
ApproxReport approximate_domain(const LevelSetDomain& domain, std::optional<double> eps1 = {}, int k_max = 6,
                                int threads = 1);

}  // namespace gelfand
