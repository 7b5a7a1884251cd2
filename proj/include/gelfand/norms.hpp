#pragma once

#include <limits>

#include "gelfand/field.hpp"
#include "gelfand/grid.hpp"

namespace gelfand {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// (integral over region of |u|^p)^{1/p}; p = kInfinity gives the max over region nodes.
double lp_norm(const ScalarField& u, double p, const Region& region = Region::whole());

/// Integral of f over the region with the grid's quadrature.
double integrate(const ScalarField& f, const Region& region = Region::whole(), double excise_below = 0.0);

/// Radius of the cell removed around the origin by weighted integrals with
/// weight r^{-a}, a > 0: the first nonzero node radius when the region reaches
/// r = 0, and 0 otherwise.
double excision_radius(const Grid& grid, const Region& region);

/// Integral over the region of r^{-a} |grad u|^2. For a > 0 and regions that
/// touch the origin the first radial cell is excised. Throws NonIntegrable
/// when a >= n_dim and grad u does not vanish at the origin.
double weighted_dirichlet(const ScalarField& u, double a, const Region& region = Region::whole());

/// Same integral with a caller-supplied integrand density g(x) instead of |grad u|^2.
double weighted_integral(const ScalarField& density, double a, const Region& region);

/// Max over node pairs of |u(x) - u(y)| / |x - y|^alpha. All pairs when there
/// are at most 10^6, otherwise every node paired with a deterministic stride of
/// anchor nodes plus all axis-neighbour pairs.
double holder_seminorm(const ScalarField& u, double alpha, const Region& region = Region::whole());

/// sup |u| + Hölder seminorm over the region.
double holder_norm(const ScalarField& u, double alpha, const Region& region = Region::whole());

}  // namespace gelfand
