#include "gelfand/branch.hpp"

#include <Eigen/SparseLU>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <fmt/format.h>
#include <thread>

#include "gelfand/errors.hpp"
#include "gelfand/norms.hpp"
#include "gelfand/numerics.hpp"

namespace gelfand {

namespace {

constexpr const char* kModule = "gelfand_branch";

SparseMatrix negated(const SparseMatrix& m) {
  SparseMatrix k = -m;
  k.makeCompressed();
  return k;
}

double sup(const Eigen::VectorXd& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

}  // namespace

GelfandProblem::GelfandProblem(CoefficientField coeffs, BoundarySpec bc, Nonlinearity f) {
  auto op = assemble(coeffs, bc);
  if (op.unknown_count() == 0) throw InvalidArgument("problem has no unknowns");
  LinearSolver K(negated(op.reduced()));
  state_ = std::make_shared<const State>(State{std::move(coeffs), std::move(f), std::move(op), std::move(K)});
}

Eigen::VectorXd GelfandProblem::f_of(const Eigen::VectorXd& u) const {
  Eigen::VectorXd out(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) out[i] = state_->f.f(u[i]);
  return out;
}

Eigen::VectorXd GelfandProblem::df_of(const Eigen::VectorXd& u) const {
  Eigen::VectorXd out(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) out[i] = state_->f.df(u[i]);
  return out;
}

Eigen::VectorXd GelfandProblem::raw_residual(const Eigen::VectorXd& u, double lambda) const {
  return state_->op.reduced() * u + lambda * f_of(u);
}

double GelfandProblem::fixed_point_residual(const Eigen::VectorXd& u, double lambda) const {
  return sup(u - solve(lambda * f_of(u)));
}

SparseMatrix GelfandProblem::jacobian(const Eigen::VectorXd& u, double lambda) const {
  SparseMatrix J = state_->op.reduced();
  const Eigen::VectorXd d = lambda * df_of(u);
  for (Eigen::Index i = 0; i < u.size(); ++i) J.coeffRef(static_cast<int>(i), static_cast<int>(i)) += d[i];
  J.makeCompressed();
  return J;
}

BranchPoint make_branch_point(const GelfandProblem& problem, double lambda, const Eigen::VectorXd& u) {
  BranchPoint p;
  p.lambda = lambda;
  p.u = problem.op().extend(u);
  p.sup_norm = p.u.max_abs();
  p.residual = problem.fixed_point_residual(u, lambda);
  p.raw_residual = sup(problem.raw_residual(u, lambda));
  return p;
}

std::string to_string(MinimalResult::Status s) {
  switch (s) {
    case MinimalResult::Status::converged: return "converged";
    case MinimalResult::Status::diverged: return "diverged";
    case MinimalResult::Status::not_converged: return "not_converged";
  }
  return "";
}

CoefficientField smooth_drift(const CoefficientField& coeffs, double delta) {
  if (!(delta > 0)) throw InvalidArgument("drift smoothing radius must be positive");
  const Grid& g = coeffs.grid();
  std::vector<Mat2> A(g.size());
  std::vector<Vec2> b(g.size());
  for (std::size_t p = 0; p < g.size(); ++p) {
    A[p] = coeffs.A(p);
    const auto xp = g.position(p);
    Vec2 acc = Vec2::Zero();
    double wsum = 0;
    for (std::size_t q = 0; q < g.size(); ++q) {
      const auto xq = g.position(q);
      const double dx = xp[0] - xq[0];
      if (std::abs(dx) >= delta) continue;
      const double d2 = (dx * dx + (xp[1] - xq[1]) * (xp[1] - xq[1])) / (delta * delta);
      if (d2 >= 1) continue;
      const double w = std::pow(1 - d2, 4);
      acc += w * coeffs.b(q);
      wsum += w;
    }
    b[p] = acc / wsum;
  }
  return CoefficientField(coeffs.grid_ptr(), std::move(A), std::move(b), coeffs.c0(), coeffs.C0(), coeffs.eps_size());
}

MinimalResult minimal_solution(const GelfandProblem& problem, double lambda, const MinimalOptions& options) {
  if (!(lambda >= 0)) throw InvalidArgument("minimal_solution needs lambda >= 0");
  if (!(options.tol > 0) || options.max_iter < 1) throw InvalidArgument("minimal_solution: bad tolerance or iteration cap");
  if (!(options.relax_factor > 0 && options.relax_factor <= 1)) throw InvalidArgument("relax_factor must lie in (0, 1]");
  if (problem.f().f(0.0) < 0) throw InvalidArgument("minimal_solution needs f(0) >= 0");

  const GelfandProblem eff = options.drift_smoothing > 0
                                 ? GelfandProblem(smooth_drift(problem.coeffs(), options.drift_smoothing),
                                                  problem.boundary(), problem.f())
                                 : problem;
  const double scale = options.relax_factor * lambda;

  MinimalResult res;
  Eigen::VectorXd u = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(eff.unknowns()));
  double prev_inc = std::numeric_limits<double>::infinity();
  int growing = 0;
  for (int l = 1; l <= options.max_iter; ++l) {
    const Eigen::VectorXd rhs = scale * eff.f_of(u);
    if (!rhs.allFinite()) {
      res.status = MinimalResult::Status::diverged;
      res.note = "nonlinearity left its domain";
      break;
    }
    const Eigen::VectorXd next = eff.solve(rhs);
    const double inc = sup(next - u);
    res.monotonicity_violation = std::max(res.monotonicity_violation, (u - next).maxCoeff());
    res.increments.push_back(inc);
    u = next;
    res.iterations = l;
    if (!u.allFinite() || sup(u) > options.sup_cap || u.maxCoeff() >= eff.f().upper_limit()) {
      res.status = MinimalResult::Status::diverged;
      res.note = fmt::format("sup norm exceeded cap {} after {} iterations", options.sup_cap, l);
      break;
    }
    if (inc < options.tol) {
      res.status = MinimalResult::Status::converged;
      break;
    }
    growing = inc > prev_inc ? growing + 1 : 0;
    prev_inc = inc;
    if (growing >= options.growth_window) {
      res.status = MinimalResult::Status::diverged;
      res.note = fmt::format("increments grew for {} consecutive iterations", growing);
      break;
    }
  }
  if (res.status == MinimalResult::Status::not_converged)
    res.note = fmt::format("no convergence in {} iterations", options.max_iter);
  if (res.status == MinimalResult::Status::diverged) {
    res.point.lambda = lambda;
    res.point.u = eff.op().extend(u);
    res.point.sup_norm = u.allFinite() ? sup(u) : std::numeric_limits<double>::infinity();
    res.point.residual = res.point.raw_residual = std::numeric_limits<double>::infinity();
  } else {
    res.point = make_branch_point(eff, lambda, u);
  }
  res.point.iterations = res.iterations;

  if (options.relax_factor < 1 && res.status == MinimalResult::Status::converged) {
    MinimalOptions plain = options;
    plain.relax_factor = 1.0;
    plain.drift_smoothing = 0.0;
    const auto barrier = minimal_solution(problem, lambda, plain);
    if (barrier.status == MinimalResult::Status::converged) {
      const Eigen::VectorXd ub = problem.op().restrict(barrier.point.u);
      // -L_k u_b - relax lambda f(u_b) >= 0 makes u_b a supersolution of the relaxed problem.
      const Eigen::VectorXd margin = -(eff.op().reduced() * ub) - scale * eff.f_of(ub);
      res.barrier_margin = margin.minCoeff();
      res.barrier_excess = (u - ub).maxCoeff();
    } else {
      res.note += (res.note.empty() ? "" : "; ") + std::string("barrier unavailable: unrelaxed iteration did not converge");
    }
  }
  return res;
}

BranchPoint newton_solve(const GelfandProblem& problem, double lambda, const ScalarField& u_init,
                         const NewtonOptions& options) {
  Eigen::VectorXd u = problem.op().restrict(u_init);
  double res = problem.fixed_point_residual(u, lambda);
  const double res0 = res;
  int it = 0;
  while (!(res <= options.tol)) {
    if (it == options.max_iter)
      throw SolverError(kModule, fmt::format("Newton stagnated at lambda = {:.10g} (residual {:.3e}): near-singular "
                                             "Jacobian, lambda at or beyond a fold",
                                             lambda, res));
    ++it;
    Eigen::VectorXd du;
    try {
      const LinearSolver J(problem.jacobian(u, lambda));
      du = J.solve(-problem.raw_residual(u, lambda));
    } catch (const SolverError&) {
      throw SolverError(kModule, fmt::format("singular Jacobian at lambda = {:.10g}: fold proximity", lambda));
    }
    u += du;
    if (!u.allFinite() || u.maxCoeff() >= problem.f().upper_limit()) {
      throw SolverError(kModule, fmt::format("Newton diverged at lambda = {:.10g}: no solution near the start, "
                                             "lambda likely beyond the fold",
                                             lambda));
    }
    res = problem.fixed_point_residual(u, lambda);
    if (res > 1e6 * std::max(1.0, res0))
      throw SolverError(kModule, fmt::format("Newton diverged at lambda = {:.10g}: lambda likely beyond the fold", lambda));
  }
  auto p = make_branch_point(problem, lambda, u);
  p.iterations = it;
  return p;
}

namespace {

// Extended system in (u, lambda) with the weighted inner product
// <a, b> = a_u . b_u / m + a_lambda b_lambda.
struct Extended {
  Eigen::VectorXd u;
  double lambda = 0;
};

double dot(const Extended& a, const Extended& b) {
  return a.u.dot(b.u) / static_cast<double>(a.u.size()) + a.lambda * b.lambda;
}

double norm(const Extended& a) { return std::sqrt(dot(a, a)); }

Extended diff(const Extended& a, const Extended& b) { return {a.u - b.u, a.lambda - b.lambda}; }

Extended scaled(const Extended& a, double s) { return {a.u * s, a.lambda * s}; }

// Solves [[J, f], [d_u^T / m, d_lambda]] [x; y] = [r; rho].
Extended bordered_solve(const SparseMatrix& J, const Eigen::VectorXd& fcol, const Extended& d, const Eigen::VectorXd& r,
                        double rho) {
  const int m = static_cast<int>(J.rows());
  std::vector<Eigen::Triplet<double, int>> trip;
  trip.reserve(static_cast<std::size_t>(J.nonZeros()) + 2 * static_cast<std::size_t>(m) + 1);
  for (int c = 0; c < J.outerSize(); ++c)
    for (SparseMatrix::InnerIterator it(J, c); it; ++it) trip.emplace_back(it.row(), c, it.value());
  for (int i = 0; i < m; ++i) {
    trip.emplace_back(i, m, fcol[i]);
    trip.emplace_back(m, i, d.u[i] / m);
  }
  trip.emplace_back(m, m, d.lambda);
  SparseMatrix B(m + 1, m + 1);
  B.setFromTriplets(trip.begin(), trip.end());
  const LinearSolver lu(B);
  Eigen::VectorXd rhs(m + 1);
  rhs.head(m) = r;
  rhs[m] = rho;
  const Eigen::VectorXd x = lu.solve(rhs);
  return {x.head(m), x[m]};
}

Extended tangent(const GelfandProblem& problem, const Extended& X, const Extended& reference) {
  const SparseMatrix J = problem.jacobian(X.u, X.lambda);
  Extended t = bordered_solve(J, problem.f_of(X.u), reference, Eigen::VectorXd::Zero(X.u.size()), 1.0);
  return scaled(t, 1.0 / norm(t));
}

// Lambda at the critical point of the cubic Hermite interpolant of lambda(s).
double hermite_fold(double s0, double l0, double d0, double s1, double l1, double d1) {
  const double h = s1 - s0;
  // lambda(t) = h00 l0 + h10 h d0 + h01 l1 + h11 h d1, t in [0, 1].
  auto value = [&](double t) {
    const double t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * l0 + (t3 - 2 * t2 + t) * h * d0 + (-2 * t3 + 3 * t2) * l1 + (t3 - t2) * h * d1;
  };
  // derivative coefficients in t: a t^2 + b t + c
  const double a = 6 * l0 + 3 * h * d0 - 6 * l1 + 3 * h * d1;
  const double b = -6 * l0 - 4 * h * d0 + 6 * l1 - 2 * h * d1;
  const double c = h * d0;
  double best_t = std::abs(d0) < std::abs(d1) ? 0.0 : 1.0;
  if (std::abs(a) < 1e-300) {
    if (std::abs(b) > 0) best_t = -c / b;
  } else {
    const double disc = b * b - 4 * a * c;
    if (disc >= 0) {
      const double q = -0.5 * (b + std::copysign(std::sqrt(disc), b));
      for (double t : {q / a, q != 0 ? c / q : -1.0})
        if (t >= 0 && t <= 1) best_t = t;
    }
  }
  return value(std::clamp(best_t, 0.0, 1.0));
}

}  // namespace

BifurcationDiagram continue_branch(const GelfandProblem& problem, const ContinuationOptions& o) {
  if (!(o.ds > 0) || !(o.ds_min > 0) || !(o.ds_max >= o.ds_min)) throw InvalidArgument("continuation step sizes invalid");
  BifurcationDiagram dia;
  const auto start = minimal_solution(problem, o.lambda_start);
  if (start.status != MinimalResult::Status::converged)
    throw SolverError(kModule, fmt::format("monotone iteration at lambda_start = {} did not converge ({}); lower lambda_start",
                                           o.lambda_start, start.note));
  BranchPoint p0 = newton_solve(problem, o.lambda_start, start.point.u, {o.newton_tol, 30});

  Extended X{problem.op().restrict(p0.u), p0.lambda};
  const std::size_t m = X.u.size();
  Extended t = tangent(problem, X, Extended{Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m)), 1.0});
  if (t.lambda < 0) t = scaled(t, -1.0);
  p0.dlambda_ds = t.lambda;
  if (!o.store_fields) p0.u = ScalarField();
  dia.points.push_back(std::move(p0));

  std::optional<Extended> prev;
  double ds = o.ds;
  double s = 0;
  dia.termination = "max_points reached";
  while (static_cast<int>(dia.points.size()) < o.max_points) {
    Extended dir = t;
    if (prev) {
      dir = diff(X, *prev);
      dir = scaled(dir, 1.0 / norm(dir));
    }
    const Extended pred{X.u + ds * dir.u, X.lambda + ds * dir.lambda};
    Extended Y = pred;
    bool ok = false;
    int iters = 0;
    try {
      for (iters = 1; iters <= o.newton_max_iter; ++iters) {
        const SparseMatrix J = problem.jacobian(Y.u, Y.lambda);
        const Eigen::VectorXd F = problem.raw_residual(Y.u, Y.lambda);
        const double N = dot(dir, diff(Y, pred));
        const Extended d = bordered_solve(J, problem.f_of(Y.u), dir, -F, -N);
        Y.u += d.u;
        Y.lambda += d.lambda;
        if (!Y.u.allFinite() || !std::isfinite(Y.lambda) || Y.u.maxCoeff() >= problem.f().upper_limit()) break;
        if (sup(d.u) <= o.newton_tol * std::max(1.0, sup(Y.u)) &&
            std::abs(d.lambda) <= o.newton_tol * std::max(1.0, std::abs(Y.lambda))) {
          ok = true;
          break;
        }
      }
    } catch (const SolverError&) {
      ok = false;
    }
    const double step = ok ? norm(diff(Y, X)) : 0.0;
    if (!ok || step > 2.0 * ds) {
      ds *= 0.5;
      if (ds < o.ds_min) {
        dia.termination = fmt::format("step collapse below {} at lambda = {:.10g}", o.ds_min, X.lambda);
        break;
      }
      continue;
    }
    const Extended tn = tangent(problem, Y, t);
    s += step;
    BranchPoint p = make_branch_point(problem, Y.lambda, Y.u);
    p.arclength = s;
    p.iterations = iters;
    p.dlambda_ds = tn.lambda;
    if (!o.store_fields) p.u = ScalarField();
    auto& last = dia.points.back();
    if ((tn.lambda > 0) != (t.lambda > 0) && tn.lambda != 0 && t.lambda != 0) {
      const bool was_increasing = t.lambda > 0;
      const bool last_is_extreme = was_increasing ? last.lambda >= p.lambda : last.lambda <= p.lambda;
      dia.fold_lambdas.push_back(hermite_fold(last.arclength, last.lambda, t.lambda, p.arclength, p.lambda, tn.lambda));
      if (last_is_extreme) {
        last.is_fold = true;
        dia.fold_indices.push_back(dia.points.size() - 1);
      } else {
        p.is_fold = true;
        dia.fold_indices.push_back(dia.points.size());
      }
    }
    dia.points.push_back(std::move(p));
    prev = X;
    X = Y;
    t = tn;
    if (iters <= 3) ds = std::min(ds * 1.5, o.ds_max);
    if (iters >= 6) ds *= 0.7;

    const auto& cur = dia.points.back();
    if (cur.sup_norm > o.sup_max) {
      dia.termination = fmt::format("sup_norm cap {} reached", o.sup_max);
      break;
    }
    if (cur.lambda > o.lambda_max) {
      dia.termination = fmt::format("lambda_max {} reached", o.lambda_max);
      break;
    }
    if (cur.lambda < o.lambda_min) {
      dia.termination = fmt::format("lambda fell below {}", o.lambda_min);
      break;
    }
  }
  return dia;
}

std::size_t minimal_segment_end(const BifurcationDiagram& diagram) {
  if (diagram.points.empty()) throw InvalidArgument("empty diagram");
  std::size_t i = 0;
  while (i + 1 < diagram.points.size() && diagram.points[i + 1].lambda > diagram.points[i].lambda) ++i;
  return i;
}

LambdaStar estimate_lambda_star(const BifurcationDiagram& diagram) {
  if (diagram.points.empty()) throw InvalidArgument("estimate_lambda_star: empty diagram");
  LambdaStar ls;
  if (!diagram.fold_indices.empty()) {
    const std::size_t i = diagram.fold_indices.front();
    ls.value = diagram.fold_lambdas.front();
    double spread = std::abs(ls.value - diagram.points[i].lambda);
    if (i > 0 && i + 1 < diagram.points.size()) {
      // Parabola vertex through the three samples around the fold as a second estimate.
      const auto& a = diagram.points[i - 1];
      const auto& b = diagram.points[i];
      const auto& c = diagram.points[i + 1];
      const double s1 = a.arclength, s2 = b.arclength, s3 = c.arclength;
      const double d1 = (b.lambda - a.lambda) / (s2 - s1), d2 = (c.lambda - b.lambda) / (s3 - s2);
      const double curv = (d2 - d1) / (s3 - s1);
      if (curv != 0) {
        const double sv = 0.5 * (s1 + s2) - d1 / (2 * curv);
        const double vertex = a.lambda + d1 * (sv - s1) + curv * (sv - s1) * (sv - s2);
        if (std::isfinite(vertex)) spread = std::max(spread, std::abs(vertex - ls.value));
      }
    }
    ls.uncertainty = spread;
    return ls;
  }
  ls.lower_bound = true;
  for (const auto& p : diagram.points) ls.value = std::max(ls.value, p.lambda);
  ls.uncertainty = diagram.divergence_bracket ? *diagram.divergence_bracket - ls.value
                                              : std::numeric_limits<double>::infinity();
  return ls;
}

SingularResidual singular_solution_residual(int n, const Grid& grid) {
  if (n < 3) throw InvalidArgument("singular solution needs n >= 3");
  if (grid.kind() != GridKind::radial_1d) throw InvalidArgument("singular solution residual needs a radial grid");
  const auto r = grid.axis(0);
  if (!(r.front() > 0)) throw InvalidArgument("singular solution residual needs r_min > 0");
  SingularResidual out;
  double scale = 0;
  for (std::size_t i = 1; i + 1 < r.size(); ++i) {
    const std::span<const double> pts = r.subspan(i - 1, 3);
    const auto w1 = fd_weights(r[i], pts, 1);
    const auto w2 = fd_weights(r[i], pts, 2);
    double du = 0, d2u = 0;
    for (int k = 0; k < 3; ++k) {
      const double u = -2.0 * std::log(pts[k]);
      du += w1[k] * u;
      d2u += w2[k] * u;
    }
    const double source = 2.0 * (n - 2) / (r[i] * r[i]);  // 2(n-2) e^u
    out.max_residual = std::max(out.max_residual, std::abs(d2u + (n - 1) / r[i] * du + source));
    scale = std::max(scale, source);
  }
  out.relative = out.max_residual / scale;
  out.boundary_value = -2.0 * std::log(r.back());
  return out;
}

ExtremalReport extremal_limit(const GelfandProblem& problem, const BifurcationDiagram& diagram,
                              const ExtremalOptions& o) {
  if (diagram.points.size() < 2) throw InvalidArgument("extremal_limit: insufficient branch resolution");
  if (o.levels < 2 || !(o.q > 0 && o.q < 1)) throw InvalidArgument("extremal_limit: bad level options");
  const LambdaStar ls = estimate_lambda_star(diagram);
  const std::size_t end = minimal_segment_end(diagram);
  ExtremalReport rep;
  rep.unbounded_regime = ls.lower_bound;
  const double lam0 = o.lambda0_fraction * ls.value;

  // Start from the minimal-segment point closest below lambda_0.
  std::size_t k0 = 0;
  for (std::size_t i = 0; i <= end; ++i)
    if (diagram.points[i].lambda <= lam0) k0 = i;
  ScalarField u = diagram.points[k0].u;
  if (u.size() == 0) {
    const auto mr = minimal_solution(problem, lam0);
    if (mr.status != MinimalResult::Status::converged)
      throw SolverError(kModule, "extremal_limit: no minimal solution at lambda_0");
    u = mr.point.u;
  }
  ScalarField prev;
  for (int k = 0; k <= o.levels; ++k) {
    const double lam = ls.value - (ls.value - lam0) * std::pow(o.q, k);
    BranchPoint p;
    try {
      p = newton_solve(problem, lam, u);
    } catch (const SolverError& e) {
      rep.note = fmt::format("stopped at level {} (lambda = {:.10g}): {}", k, lam, e.what());
      break;
    }
    if (prev.size() > 0) {
      if ((p.u - prev).min() < -1e-8) {
        rep.note = fmt::format("left the minimal branch at level {}", k);
        break;
      }
      rep.l1_differences.push_back(lp_norm(p.u - prev, 1.0));
    }
    rep.lambdas.push_back(lam);
    prev = p.u;
    u = p.u;
    rep.u = p.u;
    rep.lambda = lam;
    rep.sup_norm = p.sup_norm;
  }
  const auto& d = rep.l1_differences;
  rep.decreasing = d.size() >= 2;
  for (std::size_t i = 1; i < d.size(); ++i)
    if (!(d[i] < d[i - 1])) rep.decreasing = false;
  if (d.size() >= 3) {
    const std::size_t from = d.size() / 2;
    double acc = 0;
    int cnt = 0;
    for (std::size_t i = std::max<std::size_t>(from, 1); i < d.size(); ++i) {
      acc += d[i] / d[i - 1];
      ++cnt;
    }
    rep.tail_ratio = cnt ? acc / cnt : 0.0;
    rep.summable = rep.tail_ratio < 1.0;
  }
  if (rep.unbounded_regime) {
    rep.note += (rep.note.empty() ? "" : "; ") +
                std::string("no fold found: the discrete limit is grid-capped and is not claimed to converge");
  }
  return rep;
}

std::vector<MinimalResult> minimal_solutions(const GelfandProblem& problem, const std::vector<double>& lambdas,
                                             const MinimalOptions& options, int threads) {
  std::vector<MinimalResult> out(lambdas.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < lambdas.size(); i = next++) out[i] = minimal_solution(problem, lambdas[i], options);
  };
  const int n = std::max(1, std::min<int>(threads, static_cast<int>(lambdas.size())));
  if (n == 1) {
    work();
    return out;
  }
  {
    std::vector<std::jthread> pool;
    for (int i = 0; i < n; ++i) pool.emplace_back(work);
  }
  return out;
}

}  // namespace gelfand
