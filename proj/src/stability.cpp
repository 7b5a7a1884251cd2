#include "gelfand/stability.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <fmt/format.h>
#include <random>

#include "gelfand/coefficients.hpp"
#include "gelfand/errors.hpp"
#include "gelfand/norms.hpp"

namespace gelfand {

namespace {

constexpr const char* kModule = "stability";

double inf_norm(const SparseMatrix& m) {
  Eigen::VectorXd rows = Eigen::VectorXd::Zero(m.rows());
  for (int c = 0; c < m.outerSize(); ++c)
    for (SparseMatrix::InnerIterator it(m, c); it; ++it) rows[it.row()] += std::abs(it.value());
  return rows.size() ? rows.maxCoeff() : 0.0;
}

}  // namespace

SparseMatrix JacobiOperator::matrix() const {
  SparseMatrix J = base.reduced();
  const auto& u = base.unknowns();
  for (std::size_t k = 0; k < u.size(); ++k) J.coeffRef(static_cast<int>(k), static_cast<int>(k)) += zero_order[u[k]];
  J.makeCompressed();
  return J;
}

JacobiOperator jacobi_operator(const GelfandProblem& problem, const BranchPoint& point) {
  ScalarField q(problem.grid_ptr());
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = point.lambda * problem.f().df(point.u[i]);
  return {problem.op(), std::move(q)};
}

JacobiOperator jacobi_operator(const DiscreteOperator& op) { return {op, ScalarField(op.grid_ptr())}; }

EigenPair principal_eigenpair(const JacobiOperator& J, const EigenOptions& o) {
  const auto& unk = J.base.unknowns();
  const int m = static_cast<int>(unk.size());
  if (m == 0) throw InvalidArgument("principal_eigenpair: no unknowns");
  if (J.zero_order.size() != J.base.grid().size()) throw InvalidArgument("zero-order term does not match the grid");

  // K0 = -L - (q - qbar); mu1(-J) = mu1(K0) - qbar. Splitting off qbar keeps
  // constant shifts of q exact.
  double qbar = J.zero_order[unk[0]];
  for (auto i : unk) qbar = std::min(qbar, J.zero_order[i]);
  SparseMatrix K0 = -J.base.reduced();
  for (int k = 0; k < m; ++k) K0.coeffRef(k, k) -= J.zero_order[unk[static_cast<std::size_t>(k)]] - qbar;
  K0.makeCompressed();
  const double knorm = inf_norm(K0);

  bool z_matrix = true;
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(m), off = Eigen::VectorXd::Zero(m);
  for (int c = 0; c < K0.outerSize(); ++c)
    for (SparseMatrix::InnerIterator it(K0, c); it; ++it) {
      if (it.row() == c) {
        diag[c] = it.value();
      } else {
        off[it.row()] += std::abs(it.value());
        if (it.value() > 0) z_matrix = false;
      }
    }
  double sigma = (diag - off).minCoeff();
  sigma -= std::max(1.0, std::abs(sigma));

  SparseMatrix I(m, m);
  I.setIdentity();
  Eigen::VectorXd x = Eigen::VectorXd::Ones(m);
  EigenPair out;
  double mu = sigma, lower = -std::numeric_limits<double>::infinity(), upper = std::numeric_limits<double>::infinity();
  double rel = std::numeric_limits<double>::infinity();
  double mu_prev = std::numeric_limits<double>::infinity();
  int it = 0;
  while (it < o.max_iter) {
    const LinearSolver M(SparseMatrix(K0 - sigma * I));
    for (int inner = 0; inner < 2 && it < o.max_iter; ++inner) {
      ++it;
      Eigen::VectorXd y = M.solve(x);
      if (y.sum() < 0) y = -y;
      const double est = sigma + x.squaredNorm() / x.dot(y);
      if (z_matrix && x.minCoeff() > 0 && y.minCoeff() > 0) {
        const Eigen::ArrayXd ratio = y.array() / x.array();
        lower = std::max(lower, sigma + 1.0 / ratio.maxCoeff());
        upper = std::min(upper, sigma + 1.0 / ratio.minCoeff());
      }
      x = y / y.cwiseAbs().maxCoeff();
      mu = est;
      rel = (K0 * x - mu * x).cwiseAbs().maxCoeff() / (knorm + std::abs(mu));
      if (rel <= o.tol) break;
    }
    if (rel <= o.tol) break;
    // Move the shift toward mu1 while staying below it.
    if (z_matrix) {
      const double target = std::isfinite(lower) ? std::min(lower, mu) : mu;
      const double gap = std::max(0.02 * std::abs(mu - sigma), 1e-9 * std::max(1.0, std::abs(mu)));
      if (target - gap > sigma) sigma = target - gap;
    } else if (std::abs(mu - mu_prev) <= 1e-4 * std::abs(mu - sigma)) {
      // No bracket: early Rayleigh estimates can overshoot mu1, so only a settled
      // estimate moves the shift.
      const double gap = std::max(0.02 * std::abs(mu - sigma), 1e-9 * std::max(1.0, std::abs(mu)));
      if (mu - gap > sigma) sigma = mu - gap;
    }
    mu_prev = mu;
  }
  if (!(rel <= o.tol))
    throw SolverError(kModule, fmt::format("principal eigenpair stagnated: relative residual {:.3e} after {} iterations",
                                           rel, it));
  if (x.minCoeff() < -1e-10)
    throw SolverError(kModule, fmt::format("eigenvector changes sign (min {:.3e}): grid too coarse or non-principal "
                                           "convergence",
                                           x.minCoeff()));
  out.mu1 = mu - qbar;
  out.iterations = it;
  out.phi = J.base.extend(x.cwiseMax(0.0));
  const Eigen::VectorXd r = J.matrix() * x + out.mu1 * x;
  out.residual = r.cwiseAbs().maxCoeff();
  out.relative_residual = rel;
  out.lower = std::isfinite(lower) ? lower - qbar : out.mu1;
  out.upper = std::isfinite(upper) ? upper - qbar : out.mu1;
  return out;
}

std::string to_string(StabilityClass c) {
  switch (c) {
    case StabilityClass::stable: return "stable";
    case StabilityClass::marginal: return "marginal";
    case StabilityClass::unstable: return "unstable";
  }
  return "";
}

namespace {

StabilityVerdict classify(const GelfandProblem& problem, const BranchPoint& point, double reference,
                          double rel_margin) {
  StabilityVerdict v;
  v.pair = principal_eigenpair(jacobi_operator(problem, point));
  v.mu1 = v.pair.mu1;
  v.mu1_reference = reference;
  v.margin = rel_margin * std::abs(reference);
  if (std::abs(v.mu1) <= v.margin)
    v.cls = StabilityClass::marginal;
  else
    v.cls = v.mu1 > 0 ? StabilityClass::stable : StabilityClass::unstable;
  return v;
}

}  // namespace

StabilityVerdict is_stable(const GelfandProblem& problem, const BranchPoint& point, double rel_margin) {
  const double ref = principal_eigenpair(jacobi_operator(problem.op())).mu1;
  return classify(problem, point, ref, rel_margin);
}

void annotate_mu1(const GelfandProblem& problem, BifurcationDiagram& diagram) {
  for (auto& p : diagram.points) {
    if (p.u.size() == 0) throw InvalidArgument("annotate_mu1 needs stored branch fields");
    p.mu1 = principal_eigenpair(jacobi_operator(problem, p)).mu1;
  }
}

QuadraticForm stability_quadratic_form(const DiscreteOperator& op, const CoefficientField& coeffs,
                                       const ScalarField& zero_order, const ScalarField& xi) {
  const Grid& g = op.grid();
  if (xi.size() != g.size() || zero_order.size() != g.size() || coeffs.grid().size() != g.size())
    throw InvalidArgument("quadratic form: fields live on different grids");
  const double scale = xi.max_abs();
  if (scale == 0) return {};
  for (std::size_t i = 0; i < g.size(); ++i)
    if (op.is_dirichlet(i) && std::abs(xi[i]) > 1e-14 * scale)
      throw InvalidArgument(fmt::format("test function is nonzero on the Dirichlet boundary (node {})", i));

  const VectorField grad = gradient(xi);
  const VectorField bhat = to_divergence_form(coeffs);
  ScalarField lhs_density(xi.grid_ptr()), rhs_density(xi.grid_ptr());
  const bool radial = g.kind() == GridKind::radial_1d;
  for (std::size_t i = 0; i < g.size(); ++i) {
    lhs_density[i] = zero_order[i] * xi[i] * xi[i];
    if (radial) {
      const double a = coeffs.A(i)(0, 0);
      const double p = grad(i, 0) - 0.5 * xi[i] * bhat(i, 0) / a;
      rhs_density[i] = a * p * p;
    } else {
      const Mat2& A = coeffs.A(i);
      const Vec2 bh(bhat(i, 0), bhat(i, 1));
      const Vec2 p = Vec2(grad(i, 0), grad(i, 1)) - 0.5 * xi[i] * A.ldlt().solve(bh);
      rhs_density[i] = p.dot(A * p);
    }
  }
  return {integrate(lhs_density), integrate(rhs_density)};
}

QuadraticForm stability_quadratic_form(const GelfandProblem& problem, const BranchPoint& point,
                                       const ScalarField& xi) {
  return stability_quadratic_form(problem.op(), problem.coeffs(), jacobi_operator(problem, point).zero_order, xi);
}

double smooth_cutoff(double t) {
  if (t <= 0) return 1.0;
  if (t >= 1) return 0.0;
  const double s = 1.0 - t;
  return s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
}

TestFunction capella_test_function(const GridPtr& grid, int n_dim, double inner, double outer, const Mat2& A0,
                                   double excision) {
  if (!(inner > 0 && inner < outer)) throw InvalidArgument("capella test function needs 0 < inner < outer");
  if (n_dim < 1) throw InvalidArgument("capella test function needs n >= 1");
  const bool radial = grid->kind() == GridKind::radial_1d;
  if (excision < 0) {
    excision = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < grid->size(); ++i) {
      const double r = grid->radius(i);
      if (r > 0) excision = std::min(excision, r);
    }
  }
  Mat2 Ainv;
  if (radial) {
    if (!(A0(0, 0) > 0)) throw InvalidArgument("capella test function: A0 must be positive");
    Ainv = Mat2::Identity() / A0(0, 0);
  } else {
    Eigen::LLT<Mat2> llt(A0);
    if (llt.info() != Eigen::Success || (A0 - A0.transpose()).norm() > 1e-12 * A0.norm())
      throw InvalidArgument("capella test function: A0 must be symmetric positive definite");
    Ainv = A0.inverse();
  }
  const double expo = (2.0 - n_dim) / 2.0;
  ScalarField xi(grid);
  for (std::size_t i = 0; i < grid->size(); ++i) {
    const auto p = grid->position(i);
    const Vec2 x(p[0], radial ? 0.0 : p[1]);
    const double r = x.norm();
    const double rho = std::max(std::sqrt(x.dot(Ainv * x)), excision);
    xi[i] = (expo == 0 ? 1.0 : std::pow(rho, expo)) * smooth_cutoff((r - inner) / (outer - inner));
  }
  return {std::move(xi), fmt::format("capella(n={},inner={:.4g},outer={:.4g})", n_dim, inner, outer)};
}

std::vector<TestFunction> test_function_corpus(const DiscreteOperator& op, const CoefficientField& coeffs,
                                               std::uint64_t seed, int count) {
  if (count < 1) throw InvalidArgument("corpus size must be positive");
  const GridPtr& g = op.grid_ptr();
  const auto& unk = op.unknowns();
  if (unk.empty()) throw InvalidArgument("corpus needs unknown nodes");
  const bool radial = g->kind() == GridKind::radial_1d;
  double R = 0;
  std::size_t origin = 0;
  for (std::size_t i = 0; i < g->size(); ++i) {
    R = std::max(R, g->radius(i));
    if (g->radius(i) < g->radius(origin)) origin = i;
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, unk.size() - 1);
  auto distance = [&](std::size_t i, std::size_t c) {
    const auto a = g->position(i), b = g->position(c);
    return std::hypot(a[0] - b[0], radial ? 0.0 : a[1] - b[1]);
  };
  auto bump = [&](std::size_t c, double rho) {
    ScalarField f(g);
    for (std::size_t i = 0; i < g->size(); ++i) {
      const double t = distance(i, c) / rho;
      f[i] = t < 1 ? std::pow(1 - t * t, 3) : 0.0;
    }
    return f;
  };

  // Smooth profile vanishing on Dirichlet faces of the angular / cartesian axes, so shapes taper
  // to zero there instead of being clipped (a clipped shape carries a spurious gradient jump).
  ScalarField profile(g);
  for (std::size_t i = 0; i < g->size(); ++i) {
    double w = 1;
    const auto x = g->coordinates(i);
    for (int a = radial ? 1 : (g->kind() == GridKind::polar_half_disk ? 1 : 0); a < g->spatial_dim(); ++a) {
      const auto ax = g->axis(a);
      const double t = (x[a] - ax.front()) / (ax.back() - ax.front());
      const bool lo = op.boundary().faces[2 * a] == BoundaryKind::dirichlet;
      const bool hi = op.boundary().faces[2 * a + 1] == BoundaryKind::dirichlet;
      constexpr double pi = std::numbers::pi;
      if (lo && hi) w *= std::sin(pi * t);
      else if (lo) w *= std::sin(pi * t / 2);
      else if (hi) w *= std::cos(pi * t / 2);
    }
    profile[i] = w;
  }

  std::vector<TestFunction> out;
  for (int k = 0; k < count; ++k) {
    TestFunction tf;
    switch (k % 5) {
      case 0: {
        const auto c = unk[pick(rng)];
        const double rho = (0.1 + 0.6 * U(rng)) * R;
        tf = {bump(c, rho), fmt::format("bump(node={},rho={:.4g})", c, rho)};
        break;
      }
      case 1: {
        ScalarField f(g);
        const int terms = 2 + static_cast<int>(U(rng) * 2);
        for (int t = 0; t < terms; ++t) {
          const auto c = unk[pick(rng)];
          const double rho = (0.1 + 0.5 * U(rng)) * R;
          f += (2 * U(rng) - 1) * bump(c, rho);
        }
        tf = {std::move(f), fmt::format("bump_combination({})", terms)};
        break;
      }
      case 2: {
        const double p = 2 * U(rng);
        const double outer = (0.5 + 0.5 * U(rng)) * R;
        ScalarField f(g);
        for (std::size_t i = 0; i < g->size(); ++i) {
          const double r = g->radius(i);
          f[i] = std::pow(r, p) * smooth_cutoff(r / outer);
        }
        tf = {std::move(f), fmt::format("power_bump(p={:.4g},outer={:.4g})", p, outer)};
        break;
      }
      case 3: {
        const double inner = (0.05 + 0.35 * U(rng)) * R;
        const double outer = inner + (R - inner) * (0.3 + 0.7 * U(rng));
        tf = capella_test_function(g, g->n_dim(), inner, outer, coeffs.A(origin));
        break;
      }
      default: {
        const double kx = 1 + 4 * U(rng), ky = 1 + 4 * U(rng), phase = 6.283185307179586 * U(rng);
        ScalarField f(g);
        for (std::size_t i = 0; i < g->size(); ++i) {
          const auto p = g->position(i);
          f[i] = smooth_cutoff(g->radius(i) / R) * (1 + 0.5 * std::sin(kx * p[0] + ky * p[1] + phase));
        }
        tf = {std::move(f), fmt::format("modulated(kx={:.4g},ky={:.4g})", kx, ky)};
      }
    }
    for (std::size_t i = 0; i < g->size(); ++i) tf.xi[i] = op.is_dirichlet(i) ? 0.0 : tf.xi[i] * profile[i];
    const double s = tf.xi.max_abs();
    if (s > 0) tf.xi *= 1.0 / s;
    tf.id = fmt::format("{:02d}:{}", k, tf.id);
    out.push_back(std::move(tf));
  }
  return out;
}

std::vector<TestFunction> adapted_test_functions(const GelfandProblem& problem, const BranchPoint& point) {
  const DiscreteOperator& op = problem.op();
  const GridPtr& g = op.grid_ptr();
  const ScalarField& u = point.u;
  const bool radial = g->kind() == GridKind::radial_1d;
  std::vector<TestFunction> out;
  auto add = [&](std::string id, auto&& fn) {
    ScalarField xi(g);
    for (std::size_t i = 0; i < g->size(); ++i) xi[i] = op.is_dirichlet(i) ? 0.0 : fn(i);
    if (xi.max_abs() > 0) out.push_back({std::move(xi), std::move(id)});
  };
  add("adapted:u", [&](std::size_t i) { return u[i]; });
  for (double a : {0.25, 0.5, 1.0})
    add(fmt::format("adapted:exp({}u)-1", a), [&](std::size_t i) { return std::expm1(a * u[i]); });

  // c eta with c = x.grad u, the scaling derivative of u, cut off near the outer boundary.
  double rmax = 0;
  for (std::size_t i = 0; i < g->size(); ++i) rmax = std::max(rmax, g->radius(i));
  const VectorField d = gradient(u);
  add("adapted:capella(x.grad u)", [&](std::size_t i) {
    const auto p = g->position(i);
    const double c = radial ? p[0] * d(i, 0) : p[0] * d(i, 0) + p[1] * d(i, 1);
    return c * smooth_cutoff((g->radius(i) - 0.5 * rmax) / (0.5 * rmax));
  });

  // The principal Jacobi eigenfunction: the optimal witness when mu1 < 0.
  try {
    const EigenPair pair = principal_eigenpair(jacobi_operator(problem, point));
    add("adapted:jacobi_eigenfunction", [&](std::size_t i) { return pair.phi[i]; });
  } catch (const SolverError&) {
  }
  return out;
}

CorpusReport check_corpus(const GelfandProblem& problem, const BranchPoint& point,
                          const std::vector<TestFunction>& corpus, bool adapted) {
  CorpusReport rep;
  rep.worst_excess = -std::numeric_limits<double>::infinity();
  rep.worst_fixed_excess = rep.worst_excess;
  const ScalarField q = jacobi_operator(problem, point).zero_order;
  auto score = [&](const TestFunction& tf, bool fixed) {
    const auto qf = stability_quadratic_form(problem.op(), problem.coeffs(), q, tf.xi);
    rep.checks.push_back({tf.id, qf.lhs, qf.rhs});
    const double excess = (qf.lhs - qf.rhs) / std::max(qf.rhs, 1e-300);
    if (fixed) rep.worst_fixed_excess = std::max(rep.worst_fixed_excess, excess);
    if (excess > rep.worst_excess) {
      rep.worst_excess = excess;
      rep.worst_id = tf.id;
    }
  };
  for (const auto& tf : corpus) score(tf, true);
  if (adapted)
    for (const auto& tf : adapted_test_functions(problem, point)) score(tf, false);
  return rep;
}

HardyReport hardy_threshold_check(int n, const GridPtr& grid, double tol) {
  if (n < 3) throw InvalidArgument("hardy check needs n >= 3");
  if (grid->kind() != GridKind::radial_1d || grid->n_dim() != n)
    throw InvalidArgument("hardy check needs a radial grid of the same dimension");
  const auto r = grid->axis(0);
  const double r0 = r.front(), r1 = r.back();
  if (!(r0 > 0)) throw InvalidArgument("hardy check needs r_min > 0");

  HardyReport rep;
  rep.worst_ratio = std::numeric_limits<double>::infinity();
  auto evaluate = [&](const std::string& id, const std::function<double(double)>& fn) {
    ScalarField xi(grid), pot(grid), grad2(grid);
    for (std::size_t i = 0; i < r.size(); ++i) xi[i] = (i == 0 || i + 1 == r.size()) ? 0.0 : fn(r[i]);
    const VectorField d = gradient(xi);
    for (std::size_t i = 0; i < r.size(); ++i) {
      grad2[i] = d(i, 0) * d(i, 0);
      pot[i] = xi[i] * xi[i] / (r[i] * r[i]);
    }
    HardyEntry e{id, integrate(grad2), integrate(pot), 0};
    e.q = e.energy - 2.0 * (n - 2) * e.potential;
    if (e.q / e.energy < rep.worst_ratio) {
      rep.worst_ratio = e.q / e.energy;
      rep.witness = id;
    }
    rep.entries.push_back(std::move(e));
  };

  const double lr = std::log(r1 / r0);
  // Outer cutoff on [r1/2, r1]; inner ramp on [r0, a] uniform in log r.
  auto window = [&](double x, double a) {
    const double in = 1.0 - smooth_cutoff(std::log(x / r0) / std::log(a / r0));
    return in * smooth_cutoff((x - 0.5 * r1) / (0.5 * r1));
  };
  for (double frac : {0.1, 0.2, 0.3, 0.5}) {
    const double a = r0 * std::exp(frac * lr);
    for (double ds : {0.0, -0.25, 0.25}) {
      const double s = (n - 2) / 2.0 + ds;
      evaluate(fmt::format("power(s={:.3g},ramp={:.3g})", s, a), [=](double x) { return std::pow(x, -s) * window(x, a); });
    }
  }
  for (double c : {0.3, 0.5, 0.7})
    evaluate(fmt::format("bump(c={})", c), [=](double x) {
      const double t = (x - c * r1) / (0.25 * r1);
      return std::abs(t) < 1 ? std::pow(1 - t * t, 3) : 0.0;
    });
  rep.stable_form = rep.worst_ratio >= -tol;
  return rep;
}

}  // namespace gelfand
