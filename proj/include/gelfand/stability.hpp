#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gelfand/branch.hpp"
#include "gelfand/discrete_operator.hpp"
#include "gelfand/field.hpp"

namespace gelfand {

/// J = L + q with a sampled zero-order term q (lambda f'(u) for a branch point).
struct JacobiOperator {
  DiscreteOperator base;
  ScalarField zero_order;

  /// Reduced matrix of J over the unknowns.
  SparseMatrix matrix() const;
};

JacobiOperator jacobi_operator(const GelfandProblem& problem, const BranchPoint& point);
/// J = L (zero-order term 0).
JacobiOperator jacobi_operator(const DiscreteOperator& op);

/// -J phi = mu1 phi with mu1 the principal (smallest real) eigenvalue.
struct EigenPair {
  double mu1 = 0;
  /// Normalized to max phi = 1, zero on Dirichlet nodes.
  ScalarField phi;
  /// sup |J phi + mu1 phi| over the unknowns.
  double residual = 0;
  /// residual / (||J||_inf + |mu1|)
  double relative_residual = 0;
  /// Collatz-Wielandt bracket [lower, upper] for mu1 when J has nonnegative off-diagonals.
  double lower = 0;
  double upper = 0;
  int iterations = 0;
};

struct EigenOptions {
  /// On the relative residual.
  double tol = 1e-12;
  int max_iter = 2000;
};

/// Shifted inverse power iteration with the shift moved toward mu1 as it converges.
/// Throws SolverError on stagnation or when the limit vector changes sign.
EigenPair principal_eigenpair(const JacobiOperator& J, const EigenOptions& options = {});

enum class StabilityClass { stable, marginal, unstable };
std::string to_string(StabilityClass c);

struct StabilityVerdict {
  StabilityClass cls = StabilityClass::stable;
  double mu1 = 0;
  /// mu1 of the lambda = 0 problem, the scale of the classification band.
  double mu1_reference = 0;
  double margin = 0;
  EigenPair pair;
  /// stable or marginal
  bool stable() const noexcept { return cls != StabilityClass::unstable; }
};

/// Band: |mu1| <= rel_margin * |mu1 of -L| is marginal.
StabilityVerdict is_stable(const GelfandProblem& problem, const BranchPoint& point, double rel_margin = 1e-8);

/// Fills mu1 on every point of the diagram.
void annotate_mu1(const GelfandProblem& problem, BifurcationDiagram& diagram);

struct TestFunction {
  ScalarField xi;
  std::string id;
};

struct QuadraticForm {
  /// integral of lambda f'(u) xi^2
  double lhs = 0;
  /// integral of |grad xi - xi A^{-1} b_hat / 2|_A^2
  double rhs = 0;
};

/// Both sides of the integral stability inequality for the given zero-order term.
/// Throws InvalidArgument if xi is nonzero on a Dirichlet node.
QuadraticForm stability_quadratic_form(const DiscreteOperator& op, const CoefficientField& coeffs,
                                       const ScalarField& zero_order, const ScalarField& xi);
QuadraticForm stability_quadratic_form(const GelfandProblem& problem, const BranchPoint& point,
                                       const ScalarField& xi);

/// xi = max(|x|_{A0^{-1}}, excision)^{(2-n)/2} zeta(|x|), zeta the quintic C^2 cutoff with
/// zeta = 1 on |x| <= inner and 0 on |x| >= outer. excision defaults to the first nonzero node radius.
TestFunction capella_test_function(const GridPtr& grid, int n_dim, double inner, double outer, const Mat2& A0,
                                   double excision = -1.0);

/// The quintic C^2 step: 1 for t <= 0, 0 for t >= 1.
double smooth_cutoff(double t);

/// Deterministic corpus of `count` test functions vanishing on the Dirichlet nodes of op:
/// bump combinations, radial power bumps and the Capella family.
std::vector<TestFunction> test_function_corpus(const DiscreteOperator& op, const CoefficientField& coeffs,
                                               std::uint64_t seed = 1, int count = 50);

struct FormCheck {
  std::string xi_id;
  double lhs = 0;
  double rhs = 0;
};

struct CorpusReport {
  std::vector<FormCheck> checks;
  /// max over all checked functions of (lhs - rhs) / max(rhs, tiny)
  double worst_excess = 0;
  std::string worst_id;
  /// the same maximum over the fixed corpus only
  double worst_fixed_excess = 0;
};

/// Test functions built from the solution at `point`: u, exp(a u) - 1, (x.grad u) times an
/// outer cutoff, and the principal eigenfunction of the Jacobi operator. Ids start with "adapted:".
std::vector<TestFunction> adapted_test_functions(const GelfandProblem& problem, const BranchPoint& point);

/// Evaluates the quadratic form on the corpus and, when `adapted`, on adapted_test_functions.
CorpusReport check_corpus(const GelfandProblem& problem, const BranchPoint& point,
                          const std::vector<TestFunction>& corpus, bool adapted = true);

struct HardyEntry {
  std::string id;
  double energy = 0;
  double potential = 0;
  /// energy - 2(n-2) * potential
  double q = 0;
};

struct HardyReport {
  bool stable_form = true;
  /// min over the family of Q / energy
  double worst_ratio = 0;
  std::string witness;
  std::vector<HardyEntry> entries;
};

/// Q(xi) = int |xi'|^2 - 2(n-2) int xi^2 / r^2 over radial test functions vanishing at both ends
/// of a radial grid with r_min > 0; stable_form iff min Q / energy >= -tol.
HardyReport hardy_threshold_check(int n, const GridPtr& grid, double tol = 1e-3);

}  // namespace gelfand
