#pragma once

#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gelfand/coefficients.hpp"
#include "gelfand/expression.hpp"

namespace gelfand {

struct Box {
  double lo[2] = {-1, -1};
  double hi[2] = {1, 1};

  double diagonal() const;
  bool contains(const Vec2& x) const;
};

/// Omega = {Phi > 0} in the plane, Phi an expression in (x1, x2) with symbolic
/// gradient and Hessian. Constants are sampled over the bounding box:
///   lipschitz_grad  = sup ||D^2 Phi|| over the band |Phi| <= 1/2   ([grad Phi]_{C^{0,1}})
///   inv_grad_bound  = sup_{boundary} 1/|grad Phi|
///   grad_sup        = sup |grad Phi|
class LevelSetDomain {
 public:
  LevelSetDomain(std::string name, const std::string& phi, Box box, std::optional<double> lipschitz_grad = {},
                 Vec2 center = Vec2::Zero());

  static LevelSetDomain half_plane();
  /// Phi = 1 - |x|^2
  static LevelSetDomain unit_ball();
  /// Phi = 1 - |x|, the distance function inside
  static LevelSetDomain unit_ball_distance();
  /// Phi = 1 - x1^2 - (ratio x2)^2
  static LevelSetDomain ellipse(double ratio = 2.0);
  /// Phi = 1 - |x|^2 + 0.05 sin(3 theta)
  static LevelSetDomain perturbed_ball();
  /// By catalog name: half_plane, ball, ball_distance, ellipse, perturbed_ball.
  static LevelSetDomain catalog(const std::string& name);

  const std::string& name() const noexcept { return name_; }
  const std::string& phi_text() const noexcept { return phi_.text(); }
  const Box& box() const noexcept { return box_; }
  const Vec2& center() const noexcept { return center_; }
  double diameter() const { return box_.diagonal(); }

  double phi(const Vec2& x) const;
  Vec2 grad(const Vec2& x) const;
  Mat2 hessian(const Vec2& x) const;
  bool inside(const Vec2& x) const { return phi(x) > 0; }

  double lipschitz_grad() const noexcept { return lipschitz_grad_; }
  bool lipschitz_supplied() const noexcept { return lipschitz_supplied_; }
  double inv_grad_bound() const noexcept { return inv_grad_bound_; }
  double grad_sup() const noexcept { return grad_sup_; }

  /// Boundary points found by bisection on the edges of a 256 x 256 grid over the box.
  const std::vector<Vec2>& boundary_cloud() const noexcept { return cloud_; }
  /// Largest gap between a cloud point and its nearest neighbour.
  double cloud_resolution() const noexcept { return cloud_resolution_; }

  /// Nearest boundary point (Newton on the Lagrange system from the nearest cloud points).
  Vec2 project(const Vec2& x) const;
  /// Positive inside, negative outside.
  double signed_distance(const Vec2& x) const;

  /// Uniform samples of the box with phi > 0.
  std::vector<Vec2> interior_samples(std::size_t count, std::mt19937_64& rng) const;

 private:
  std::string name_;
  Expression phi_, d1_, d2_, d11_, d12_, d22_;
  Box box_;
  Vec2 center_;
  double lipschitz_grad_ = 0;
  bool lipschitz_supplied_ = false;
  double inv_grad_bound_ = 0;
  double grad_sup_ = 0;
  std::vector<Vec2> cloud_;
  double cloud_resolution_ = 0;
};

/// Zero of g on [a, b] with g(a), g(b) of opposite sign (bisection to tol).
double bisect(const std::function<double(double)>& g, double a, double b, double tol);

}  // namespace gelfand
