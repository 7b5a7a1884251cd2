#pragma once

#include <Eigen/Dense>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gelfand/coefficients.hpp"
#include "gelfand/discrete_operator.hpp"
#include "gelfand/field.hpp"
#include "gelfand/nonlinearity.hpp"

namespace gelfand {

/// -L u = lambda f(u) with the given boundary conditions (homogeneous data).
/// Holds the assembled operator and a factorization of K = -L; copies share them.
class GelfandProblem {
 public:
  GelfandProblem(CoefficientField coeffs, BoundarySpec bc, Nonlinearity f);

  const CoefficientField& coeffs() const noexcept { return state_->coeffs; }
  const BoundarySpec& boundary() const noexcept { return state_->op.boundary(); }
  const Nonlinearity& f() const noexcept { return state_->f; }
  const DiscreteOperator& op() const noexcept { return state_->op; }
  const Grid& grid() const { return state_->op.grid(); }
  const GridPtr& grid_ptr() const noexcept { return state_->op.grid_ptr(); }
  std::size_t unknowns() const noexcept { return state_->op.unknown_count(); }

  /// Solves K x = rhs on the unknowns.
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const { return state_->K.solve(rhs); }

  Eigen::VectorXd f_of(const Eigen::VectorXd& u) const;
  Eigen::VectorXd df_of(const Eigen::VectorXd& u) const;
  /// L u + lambda f(u) on the unknowns.
  Eigen::VectorXd raw_residual(const Eigen::VectorXd& u, double lambda) const;
  /// sup |u - K^{-1} lambda f(u)|: the residual measured in solution units.
  double fixed_point_residual(const Eigen::VectorXd& u, double lambda) const;
  /// L + lambda f'(u) on the unknowns.
  SparseMatrix jacobian(const Eigen::VectorXd& u, double lambda) const;

 private:
  struct State {
    CoefficientField coeffs;
    Nonlinearity f;
    DiscreteOperator op;
    LinearSolver K;
  };
  std::shared_ptr<const State> state_;
};

struct BranchPoint {
  double lambda = 0;
  ScalarField u;
  double sup_norm = 0;
  /// Principal eigenvalue of -(L + lambda f'(u)); NaN until computed.
  double mu1 = std::numeric_limits<double>::quiet_NaN();
  double arclength = 0;
  bool is_fold = false;
  /// sup |u - K^{-1} lambda f(u)|.
  double residual = 0;
  /// sup |L u + lambda f(u)| at unknown nodes.
  double raw_residual = 0;
  /// Tangent lambda-component d lambda / ds (continuation points only).
  double dlambda_ds = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
};

BranchPoint make_branch_point(const GelfandProblem& problem, double lambda, const Eigen::VectorXd& u);

struct MinimalOptions {
  double tol = 1e-10;
  int max_iter = 20000;
  /// Divergence cap on sup |u|.
  double sup_cap = 50.0;
  /// Consecutive growing increments that declare divergence.
  int growth_window = 20;
  /// Solve -L u^(l) = relax_factor * lambda f(u^(l-1)).
  double relax_factor = 1.0;
  /// Radius of the polynomial kernel smoothing the drift b (0 = off).
  double drift_smoothing = 0.0;
};

struct MinimalResult {
  enum class Status { converged, diverged, not_converged };
  Status status = Status::not_converged;
  BranchPoint point;
  /// sup |u^(l) - u^(l-1)| per iteration.
  std::vector<double> increments;
  /// max over iterations and nodes of u^(l-1) - u^(l) (positive = violation).
  double monotonicity_violation = 0;
  int iterations = 0;
  /// With relax_factor < 1: min of -L u - relax lambda f(u) for the unrelaxed
  /// solution u (the barrier), and max of (iterate - barrier).
  std::optional<double> barrier_margin;
  std::optional<double> barrier_excess;
  std::string note;
};

std::string to_string(MinimalResult::Status s);

/// Monotone iteration from u^(0) = 0.
MinimalResult minimal_solution(const GelfandProblem& problem, double lambda, const MinimalOptions& options = {});

/// Drift b smoothed by a normalized (1 - d^2/delta^2)^4 kernel over grid nodes.
CoefficientField smooth_drift(const CoefficientField& coeffs, double delta);

struct NewtonOptions {
  double tol = 1e-12;
  int max_iter = 30;
};

/// Newton refinement on L u + lambda f(u) = 0. Throws SolverError on a singular
/// Jacobian or stagnation (both indicate fold proximity or lambda past the fold).
BranchPoint newton_solve(const GelfandProblem& problem, double lambda, const ScalarField& u_init,
                         const NewtonOptions& options = {});

struct ContinuationOptions {
  double lambda_start = 0.1;
  double ds = 0.05;
  double ds_min = 1e-7;
  double ds_max = 0.25;
  int max_points = 4000;
  double sup_max = std::numeric_limits<double>::infinity();
  double lambda_max = std::numeric_limits<double>::infinity();
  /// Stop once lambda drops below this value.
  double lambda_min = 0.0;
  double newton_tol = 1e-10;
  int newton_max_iter = 10;
  bool store_fields = true;
};

struct BifurcationDiagram {
  std::vector<BranchPoint> points;
  std::vector<std::size_t> fold_indices;
  /// Parabola-vertex refinement of each fold's lambda.
  std::vector<double> fold_lambdas;
  std::string termination;
  /// Smallest lambda at which monotone iteration was seen to diverge.
  std::optional<double> divergence_bracket;
};

/// Pseudo-arclength continuation in (lambda, u) from the minimal solution at
/// lambda_start. Folds are sign changes of d lambda / ds.
BifurcationDiagram continue_branch(const GelfandProblem& problem, const ContinuationOptions& options = {});

struct LambdaStar {
  double value = 0;
  double uncertainty = 0;
  /// True when no fold was found: value is the largest lambda reached.
  bool lower_bound = false;
};

LambdaStar estimate_lambda_star(const BifurcationDiagram& diagram);

/// Index of the last point of the initial increasing-lambda segment.
std::size_t minimal_segment_end(const BifurcationDiagram& diagram);

struct SingularResidual {
  double max_residual = 0;
  /// max residual divided by max |2(n-2) e^u|.
  double relative = 0;
  double boundary_value = 0;
};

/// Residual of Delta u + 2(n-2) e^u for u = log(1/r^2) with the centered
/// discrete radial Laplacian at the interior nodes of a radial grid with r_min > 0.
SingularResidual singular_solution_residual(int n, const Grid& grid);

struct ExtremalOptions {
  int levels = 12;
  /// lambda_k = lambda* - (lambda* - lambda_0) q^k.
  double q = 0.5;
  double lambda0_fraction = 0.5;
};

struct ExtremalReport {
  ScalarField u;
  double lambda = 0;
  double sup_norm = 0;
  std::vector<double> lambdas;
  /// ||u_k - u_{k-1}||_{L^1}.
  std::vector<double> l1_differences;
  bool decreasing = false;
  /// Mean ratio of consecutive differences over the tail.
  double tail_ratio = 0;
  bool summable = false;
  /// No fold on the diagram: the discrete limit is capped by the grid, not converged.
  bool unbounded_regime = false;
  std::string note;
};

/// Minimal solutions at lambda_k increasing geometrically toward lambda*.
ExtremalReport extremal_limit(const GelfandProblem& problem, const BifurcationDiagram& diagram,
                              const ExtremalOptions& options = {});

/// Independent minimal solves over a lambda list, in input order.
std::vector<MinimalResult> minimal_solutions(const GelfandProblem& problem, const std::vector<double>& lambdas,
                                             const MinimalOptions& options = {}, int threads = 1);

}  // namespace gelfand
