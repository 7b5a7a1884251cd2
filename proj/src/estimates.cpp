#include "gelfand/estimates.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fmt/format.h>
#include <random>
#include <sstream>
#include <thread>

#include "gelfand/errors.hpp"
#include "gelfand/norms.hpp"
#include "gelfand/numerics.hpp"
#include "gelfand/stability.hpp"

namespace gelfand {

namespace {

template <class F>
void parallel_for(std::size_t count, int threads, F&& body) {
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < count; i = next++) body(i);
  };
  const int n = std::max(1, std::min<int>(threads, static_cast<int>(count)));
  if (n == 1) {
    work();
    return;
  }
  std::vector<std::jthread> pool;
  for (int i = 0; i < n; ++i) pool.emplace_back(work);
}

bool is_planar(const Grid& g) { return g.kind() != GridKind::radial_1d; }

double outer(const Grid& g) { return g.outer_radius(); }

ScalarField pointwise(const ScalarField& u, const std::function<double(std::size_t)>& f) {
  ScalarField out(u.grid_ptr());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(i);
  return out;
}

ScalarField grad_norm(const ScalarField& u) { return gradient(u).norm(); }

ScalarField squared(const ScalarField& u) {
  return pointwise(u, [&](std::size_t i) { return u[i] * u[i]; });
}

// Integral of r^e times the density over the region.
double weighted(const ScalarField& density, double e, const Region& region) {
  if (e <= 0) return weighted_integral(density, -e, region);
  const Grid& g = density.grid();
  return integrate(pointwise(density, [&](std::size_t i) { return std::pow(g.radius(i), e) * density[i]; }), region);
}

// D(rho) = int_{B_rho} r^{2-n} |grad u|^2
double weighted_energy(const ScalarField& u, double rho) {
  return weighted(squared(grad_norm(u)), 2.0 - u.grid().n_dim(), ball_region(u.grid(), rho));
}

// Radial cells strictly inside (0, rho].
std::size_t radial_cells(const Grid& g, double rho) {
  std::size_t c = 0;
  for (double r : g.axis(0))
    if (r > 1e-14 && r <= rho * (1 + 1e-12)) ++c;
  return c;
}

EstimateReport make(EstimateId id, double lhs, double rhs) {
  EstimateReport r;
  r.id = id;
  r.lhs = lhs;
  r.rhs = rhs;
  if (rhs > 0) {
    r.ratio = lhs / rhs;
  } else {
    r.skipped = true;
    r.note = "rhs = 0 (u = 0)";
  }
  return r;
}

std::string fraction_label(double x) { return fmt::format("{:.2f}", x); }

}  // namespace

std::string to_string(EstimateId id) {
  switch (id) {
    case EstimateId::energy_c11: return "energy_c11";
    case EstimateId::holder_c11: return "holder_c11";
    case EstimateId::holder_half: return "holder_half";
    case EstimateId::hessian_half: return "hessian_half";
    case EstimateId::higherint_half: return "higherint_half";
    case EstimateId::radial_weighted: return "radial_weighted";
    case EstimateId::l1_radial: return "l1_radial";
    case EstimateId::decay: return "decay";
    case EstimateId::holefill: return "holefill";
    case EstimateId::interpolation: return "interpolation";
    case EstimateId::annuli: return "annuli";
  }
  return "unknown";
}

Region ball_region(const Grid& grid, double rho) {
  return grid.kind() == GridKind::radial_1d ? Region::ball(rho) : Region::half_ball(rho);
}

Region annulus_region(const Grid& grid, double rho1, double rho2) {
  return grid.kind() == GridKind::radial_1d ? Region::annulus(rho1, rho2) : Region::half_annulus(rho1, rho2);
}

EstimateReport verify_energy(const ScalarField& u, double gamma, bool half) {
  if (!(gamma > 0)) throw InvalidArgument("verify_energy: gamma must be positive");
  const Grid& g = u.grid();
  const double p = 2 + gamma;
  const Region B = half ? ball_region(g, 0.5 * outer(g)) : Region::whole();
  const double lhs = lp_norm(grad_norm(u), p, B);
  auto r = make(half ? EstimateId::higherint_half : EstimateId::energy_c11, lhs, lp_norm(u, 1, Region::whole()));
  const double vol = integrate(pointwise(u, [](std::size_t) { return 1.0; }), B);
  r.params["gamma"] = gamma;
  r.params["lhs_normalized"] = lhs / std::pow(vol, 1 / p);
  return r;
}

EstimateReport verify_hessian(const ScalarField& u) {
  const Grid& g = u.grid();
  if (!is_planar(g)) throw InvalidArgument("verify_hessian needs a planar grid");
  const auto gn = grad_norm(u);
  const auto H = hessian(u).frobenius();
  const double lhs = integrate(pointwise(u, [&](std::size_t i) { return gn[i] * H[i]; }), ball_region(g, 0.5 * outer(g)));
  const double l2 = lp_norm(gn, 2, Region::whole());
  return make(EstimateId::hessian_half, lhs, l2 * l2);
}

EstimateReport verify_holder(const ScalarField& u, double alpha, bool half) {
  const Grid& g = u.grid();
  const Region B = half ? ball_region(g, 0.5 * outer(g)) : Region::whole();
  auto r = make(half ? EstimateId::holder_half : EstimateId::holder_c11, holder_norm(u, alpha, B),
                lp_norm(u, 1, Region::whole()));
  r.params["alpha"] = alpha;
  return r;
}

EstimateReport verify_radial_weighted(const ScalarField& u, double eps, double rho) {
  const Grid& g = u.grid();
  const double R = outer(g);
  if (!(rho > 0 && rho <= 0.25 * R * (1 + 1e-12)))
    throw InvalidArgument(fmt::format("verify_radial_weighted: rho = {} must lie in (0, 1/4]", rho / R));
  const int n = g.n_dim();
  const auto ur = radial_derivative(u);
  const auto g2 = squared(grad_norm(u));
  const double lhs = weighted(squared(ur), 2.0 - n, ball_region(g, rho));
  const double rhs1 = weighted(g2, 2.0 - n, annulus_region(g, rho, 2 * rho));
  const double rhs2 = eps * weighted(g2, 3.0 - n, ball_region(g, 4 * rho));
  auto r = make(EstimateId::radial_weighted, lhs, rhs1 + rhs2);
  r.params["rho"] = rho;
  r.params["rhs1"] = rhs1;
  r.params["rhs2"] = rhs2;
  r.params["n_dim"] = n;
  if (n < 3 || n > 9) {
    const std::string label = fmt::format("n_dim = {} lies outside 3 <= n <= 9 (weights evaluated literally)", n);
    r.note = r.note.empty() ? label : r.note + "; " + label;
  }
  return r;
}

EstimateReport verify_l1_radial(const ScalarField& u) {
  const Grid& g = u.grid();
  const double R = outer(g);
  const Region A = annulus_region(g, 0.5 * R, R);
  if (g.kind() == GridKind::polar_half_disk) {
    const double scale = std::max(1.0, u.max_abs());
    double flat = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto mi = g.multi_index(i);
      if (mi[1] == 0 || mi[1] + 1 == g.extent(1)) flat = std::max(flat, std::abs(u[i]));
    }
    if (flat > 1e-12 * scale) {
      EstimateReport r;
      r.id = EstimateId::l1_radial;
      r.skipped = true;
      r.pass = false;
      r.note = fmt::format("hypothesis violated: u does not vanish on the flat boundary (max |u| = {:.3e})", flat);
      return r;
    }
  }
  const double lhs = lp_norm(u, 1, A);
  const double rhs = lp_norm(radial_derivative(u), 1, A);
  if (lhs > 0 && rhs <= 1e-12 * lhs) {
    EstimateReport r;
    r.id = EstimateId::l1_radial;
    r.lhs = lhs;
    r.ratio = kInfinity;
    r.pass = false;
    r.note = "u_r = 0 with u != 0: hypothesis violation";
    return r;
  }
  return make(EstimateId::l1_radial, lhs, rhs);
}

EstimateReport verify_decay(const ScalarField& u, double alpha_min, const std::vector<double>& radii) {
  const Grid& g = u.grid();
  const double R = outer(g);
  std::vector<double> lr, ld;
  EstimateReport r;
  r.id = EstimateId::decay;
  for (double rho : radii) {
    const double s = rho * R;
    if (radial_cells(g, s) < 4) continue;
    const double D = weighted_energy(u, s);
    r.params[fmt::format("D@{:.6g}", rho)] = D;
    lr.push_back(std::log(s));
    ld.push_back(D > 0 ? std::log(D) : -kInfinity);
  }
  if (lr.size() < 3)
    throw InvalidArgument(fmt::format("verify_decay: only {} dyadic radii hold 4 radial cells (need 3)", lr.size()));
  if (std::any_of(ld.begin(), ld.end(), [](double x) { return !std::isfinite(x); })) {
    r.skipped = true;
    r.note = "D(rho) = 0 (u = 0)";
    return r;
  }
  const double slope = least_squares_slope(lr, ld);
  r.lhs = slope;
  r.rhs = 2 * alpha_min;
  r.ratio = r.rhs > 0 ? slope / r.rhs : kInfinity;
  r.pass = slope >= 2 * alpha_min;
  r.params["exponent"] = slope;
  r.params["alpha_min"] = alpha_min;
  return r;
}

EstimateReport verify_holefill(const ScalarField& u) {
  const Grid& g = u.grid();
  const double R = outer(g);
  EstimateReport r;
  r.id = EstimateId::holefill;
  r.rhs = 1;
  double worst = 0;
  std::size_t used = 0;
  bool any_energy = false;
  for (double rho : {1.0 / 64, 1.0 / 32, 1.0 / 16, 1.0 / 8}) {
    const double s = rho * R;
    if (radial_cells(g, s) < 4 || 8 * s > R * (1 + 1e-12)) continue;
    const double outer_energy = weighted_energy(u, 8 * s);
    const double theta = outer_energy > 0 ? weighted_energy(u, s) / outer_energy : 0.0;
    any_energy = any_energy || outer_energy > 0;
    r.params[fmt::format("theta@{:.6g}", rho)] = theta;
    worst = std::max(worst, theta);
    ++used;
  }
  if (used == 0) throw InvalidArgument("verify_holefill: no radius with rho, 8 rho resolvable in the grid");
  r.lhs = worst;
  r.ratio = worst;
  r.pass = worst < 1;
  if (!any_energy) {
    r.skipped = true;
    r.note = "vacuous: weighted energy is zero";
  }
  return r;
}

std::vector<EstimateReport> verify_annuli_bounds(const ScalarField& u, double gamma, const std::array<double, 4>& radii) {
  if (!(radii[0] > 0 && radii[0] < radii[1] && radii[1] < radii[2] && radii[2] < radii[3] && radii[3] <= 1))
    throw InvalidArgument("verify_annuli_bounds: need 0 < r1 < r2 < r3 < r4 <= 1");
  const Grid& g = u.grid();
  const double R = outer(g);
  const Region inner = annulus_region(g, radii[1] * R, radii[2] * R);
  const Region wide = annulus_region(g, radii[0] * R, radii[3] * R);
  const double base = lp_norm(u, 1, wide);
  auto a = make(EstimateId::annuli, lp_norm(grad_norm(u), 2 + gamma, inner), base);
  a.params["gamma"] = gamma;
  std::vector<EstimateReport> out{a};
  if (is_planar(g)) {
    auto b = make(EstimateId::annuli, lp_norm(hessian(u).frobenius(), 1, inner), base);
    out.push_back(b);
  }
  out[0].note = out[0].skipped ? "gradient; " + out[0].note : "gradient";
  if (out.size() > 1) out[1].note = out[1].skipped ? "hessian; " + out[1].note : "hessian";
  return out;
}

EstimateReport verify_interpolation(const ScalarField& u, double delta, const std::array<double, 4>& radii) {
  if (!(delta > 0 && delta < 1)) throw InvalidArgument("verify_interpolation: delta must lie in (0, 1)");
  const Grid& g = u.grid();
  Region Q = Region::whole(), Qw = Region::whole();
  if (g.kind() == GridKind::polar_half_disk) {
    const double R = outer(g);
    Q = annulus_region(g, radii[1] * R, radii[2] * R);
    Qw = annulus_region(g, radii[0] * R, radii[3] * R);
  } else if (g.kind() != GridKind::cartesian_rect) {
    throw InvalidArgument("verify_interpolation needs a cartesian or half-disk grid");
  }
  const double lhs = lp_norm(grad_norm(u), 1, Q);
  const double d2 = lp_norm(hessian(u).frobenius(), 1, Qw);
  const double l1 = lp_norm(u, 1, Qw);
  auto r = make(EstimateId::interpolation, lhs, delta * d2 + l1 / delta);
  r.params["delta"] = delta;
  r.params["hessian_l1"] = d2;
  r.params["u_l1"] = l1;
  return r;
}

std::vector<ScalarField> random_trig_fields(const GridPtr& grid, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N(0.0, 1.0);
  std::uniform_real_distribution<double> U(0.0, 2 * kPi);
  std::vector<ScalarField> out;
  out.reserve(count);
  for (std::size_t c = 0; c < count; ++c) {
    struct Mode {
      int k1, k2;
      double a, phase;
    };
    std::vector<Mode> modes;
    for (int k1 = -3; k1 <= 3; ++k1)
      for (int k2 = -3; k2 <= 3; ++k2) modes.push_back({k1, k2, N(rng) / (1.0 + k1 * k1 + k2 * k2), U(rng)});
    out.push_back(ScalarField::sample(grid, [&](const Point& x) {
      double s = 0;
      for (const auto& m : modes) s += m.a * std::cos(2 * kPi * (m.k1 * x[0] + m.k2 * x[1]) + m.phase);
      return s;
    }));
  }
  return out;
}

InterpolationSummary verify_interpolation_family(const std::vector<ScalarField>& fields,
                                                 const std::vector<double>& deltas) {
  InterpolationSummary s;
  s.fields = fields.size();
  for (std::size_t i = 0; i < fields.size(); ++i)
    for (double d : deltas) {
      auto r = verify_interpolation(fields[i], d);
      r.member_id = fmt::format("trig{:03d}", i);
      if (!r.skipped) s.constant = std::max(s.constant, r.ratio);
      s.reports.push_back(std::move(r));
    }
  return s;
}

std::vector<CoefficientPerturbation> standard_perturbations() {
  return {
      {"identity", CoefficientModel::laplacian(), 1.0, 1.0, 0.0},
      {"shear", CoefficientModel::planar("1 + 0.04*x1", "0.03*x2", "1 - 0.04*x1", "0", "0"), 0.9, 1.1, 0.1},
      {"drift", CoefficientModel::planar("1", "0", "1", "0.06", "-0.04"), 1.0, 1.0, 0.1},
      {"mixed",
       CoefficientModel::planar("1 + 0.02*sin(x2)", "0.015*x1", "1 + 0.02*x1*x2", "0.02*x2", "0.02*cos(x1)"), 0.9,
       1.1, 0.1},
  };
}

ExperimentFamily build_family(const FamilySpec& spec) {
  if (spec.lambda_fractions.empty() || spec.perturbations.empty())
    throw InvalidArgument("build_family: empty lambda or perturbation list");
  for (double f : spec.lambda_fractions)
    if (!(f > 0 && f < 1)) throw InvalidArgument("build_family: lambda fractions must lie in (0, 1)");
  const bool radial = spec.geometry == FamilySpec::Geometry::radial_ball;
  for (const auto& p : spec.perturbations)
    if (radial != p.model.is_radial() && !(p.name == "identity"))
      throw InvalidArgument(fmt::format("perturbation '{}' does not match the family geometry", p.name));

  ExperimentFamily fam;
  fam.spec = spec;
  fam.grid = radial ? make_grid(Grid::radial(0, 1, spec.n_r, spec.n_dim))
                    : make_grid(Grid::polar_half_disk(1, spec.n_r, spec.n_theta));
  const GridPtr coarse = radial ? make_grid(Grid::radial_stretched(0, 1, spec.coarse_n_r, spec.n_dim, 10))
                                : make_grid(Grid::polar_half_disk(1, spec.coarse_n_r, spec.coarse_n_theta));
  const BoundarySpec bc = radial ? BoundarySpec::ball() : BoundarySpec::half_disk(BoundaryKind::dirichlet);
  auto field_on = [&](const GridPtr& g, const CoefficientPerturbation& p) {
    if (p.name == "identity" && !p.model.is_radial() && radial) return CoefficientField::identity(g);
    return CoefficientField::sample(g, p.model, p.c0, p.C0, p.eps_size);
  };

  const std::size_t P = spec.perturbations.size(), F = spec.lambda_fractions.size();
  fam.lambda_star.resize(P);
  fam.members.resize(P * F);
  parallel_for(P, spec.threads, [&](std::size_t p) {
    const auto& pert = spec.perturbations[p];
    GelfandProblem cp(field_on(coarse, pert), bc, spec.f);
    ContinuationOptions co;
    co.sup_max = radial && spec.n_dim >= 10 ? 12 : 6;
    fam.lambda_star[p] = estimate_lambda_star(continue_branch(cp, co));

    GelfandProblem problem(field_on(fam.grid, pert), bc, spec.f);
    MinimalOptions mo;
    mo.tol = spec.tol;
    const double reference = principal_eigenpair(jacobi_operator(problem.op())).mu1;
    for (std::size_t k = 0; k < F; ++k) {
      auto& m = fam.members[p * F + k];
      m.perturbation = p;
      m.fraction = spec.lambda_fractions[k];
      m.lambda = m.fraction * fam.lambda_star[p].value;
      m.eps_size = pert.eps_size;
      m.h = fam.grid->spacing(0);
      m.id = pert.name + "/" + fraction_label(m.fraction);
      const auto res = minimal_solution(problem, m.lambda, mo);
      m.u = res.point.u;
      m.residual = res.point.residual;
      if (res.status != MinimalResult::Status::converged) {
        m.note = "minimal iteration " + to_string(res.status);
        continue;
      }
      m.mu1 = principal_eigenpair(jacobi_operator(problem, res.point)).mu1;
      if (!(m.residual <= 10 * spec.tol)) {
        m.note = fmt::format("residual {:.3e} above tolerance", m.residual);
      } else if (m.mu1 < -1e-8 * std::abs(reference)) {
        m.note = "not stable";
      } else {
        m.admitted = true;
      }
    }
  });
  return fam;
}

std::vector<EstimateReport> verify_family(const ExperimentFamily& family, const VerifyOptions& o) {
  std::vector<std::vector<EstimateReport>> per(family.members.size());
  const bool planar = is_planar(*family.grid);
  parallel_for(family.members.size(), o.threads, [&](std::size_t i) {
    const auto& m = family.members[i];
    if (!m.admitted) return;
    auto& out = per[i];
    out.push_back(verify_energy(m.u, o.gamma, false));
    out.push_back(verify_energy(m.u, o.gamma, true));
    out.push_back(verify_holder(m.u, o.alpha, false));
    out.push_back(verify_holder(m.u, o.alpha, true));
    if (planar) out.push_back(verify_hessian(m.u));
    for (double rho : {1.0 / 16, 1.0 / 8, 1.0 / 4}) {
      if (rho > o.rho_weighted) continue;
      auto r = verify_radial_weighted(m.u, m.eps_size, rho);
      r.params["group_rho"] = rho;
      out.push_back(std::move(r));
    }
    out.push_back(verify_l1_radial(m.u));
    out.push_back(verify_decay(m.u, o.alpha_min));
    out.push_back(verify_holefill(m.u));
    for (auto& r : verify_annuli_bounds(m.u, o.gamma)) out.push_back(std::move(r));
    for (auto& r : out) {
      r.member_id = m.id;
      r.lambda = m.lambda;
      r.eps_size = m.eps_size;
      r.h = m.h;
    }
  });
  std::vector<EstimateReport> all;
  for (auto& v : per)
    for (auto& r : v) all.push_back(std::move(r));
  std::stable_sort(all.begin(), all.end(),
                   [](const EstimateReport& a, const EstimateReport& b) { return a.id < b.id; });
  return all;
}

std::vector<EstimateStatistics> summarize(const std::vector<EstimateReport>& reports) {
  std::vector<EstimateStatistics> out;
  auto group_of = [](const EstimateReport& r) {
    std::string g = r.id == EstimateId::annuli ? r.note.substr(0, r.note.find(';')) : "";
    if (auto it = r.params.find("group_rho"); it != r.params.end()) g = fmt::format("rho={:.6g}", it->second);
    return g;
  };
  for (const auto& r : reports) {
    const std::string g = group_of(r);
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& s) { return s.id == r.id && s.note == g; });
    if (it == out.end()) {
      EstimateStatistics s;
      s.id = r.id;
      s.note = g;
      s.min_ratio = kInfinity;
      s.max_ratio = 0;
      out.push_back(s);
      it = out.end() - 1;
    }
    if (r.skipped) continue;
    ++it->count;
    it->min_ratio = std::min(it->min_ratio, r.ratio);
    it->max_ratio = std::max(it->max_ratio, r.ratio);
    it->all_pass = it->all_pass && r.pass;
  }
  for (auto& s : out) {
    if (s.count == 0) {
      s.min_ratio = s.max_ratio = 0;
      s.variation = 1;
    } else {
      s.variation = s.min_ratio > 0 ? s.max_ratio / s.min_ratio : kInfinity;
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return out;
}

std::string reports_csv(const std::vector<EstimateReport>& reports) {
  std::ostringstream os;
  os << "member_id,lambda,eps_size,h,lhs,rhs,ratio,pass\n";
  for (const auto& r : reports)
    os << fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{}\n", r.member_id,
                      r.lambda, r.eps_size, r.h, r.lhs, r.rhs, r.ratio,
                      r.skipped ? "skipped" : (r.pass ? "true" : "false"));
  return os.str();
}

UniquenessVerdict uniqueness_probe(const GelfandProblem& problem, double lambda, const UniquenessOptions& o) {
  UniquenessVerdict v;
  v.lambda = lambda;
  const auto& f = problem.f();

  // f(u) = c u on the sampled range: solutions are eigenfunction multiples when lambda c = mu1[L].
  bool linear = f.f(0.0) == 0.0;
  const double c = f.df(0.0);
  for (double s : {0.25, 0.5, 1.0, 2.0, 4.0})
    linear = linear && std::abs(f.f(s) - c * s) <= 1e-12 * (1 + std::abs(c * s));
  if (linear) {
    const auto base = principal_eigenpair(jacobi_operator(problem.op()));
    if (std::abs(lambda * c - base.mu1) <= 1e-6 * std::abs(base.mu1)) {
      v.degenerate = true;
      v.pass = true;
      for (double amp : {0.5, 1.0, 2.0}) {
        ++v.runs;
        const auto pt = make_branch_point(problem, lambda, problem.op().restrict(amp * base.phi));
        if (pt.residual <= 1e-6 * amp) ++v.converged;
        const auto verdict = is_stable(problem, pt);
        v.mu1.push_back(verdict.mu1);
        if (verdict.mu1 >= -1e-6 * std::abs(base.mu1)) ++v.stable;
      }
      v.spread = 1.5 * base.phi.max_abs();
      v.note = fmt::format(
          "degenerate case f(u) = mu1 u (lambda f' = {:.10g}, mu1[L] = {:.10g}): every multiple of the principal "
          "eigenfunction is a stable solution, so uniqueness does not apply",
          lambda * c, base.mu1);
      return v;
    }
  }

  const auto minimal = minimal_solution(problem, lambda, MinimalOptions{.tol = o.tol});
  if (minimal.status != MinimalResult::Status::converged)
    throw SolverError("estimates_lab", fmt::format("uniqueness probe: no minimal solution at lambda = {}", lambda));
  const ScalarField& um = minimal.point.u;
  const auto phi = principal_eigenpair(jacobi_operator(problem.op())).phi;
  const double sup = std::max(um.max_abs(), 1e-3);

  std::vector<ScalarField> starts;
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> amp(-0.5, 1.0), mix(0.0, 1.0);
  for (std::size_t s = 0; s < o.starts; ++s) {
    if (s == 0) {
      starts.emplace_back(problem.grid_ptr());
      continue;
    }
    const double a = amp(rng) * sup, b = mix(rng);
    starts.push_back(um + a * ((1 - b) * (1.0 / std::max(um.max_abs(), 1e-300)) * um + b * phi));
  }
  for (const auto& e : o.extra_starts) starts.push_back(e);

  std::vector<ScalarField> kept;
  for (const auto& s : starts) {
    ++v.runs;
    BranchPoint pt;
    try {
      pt = newton_solve(problem, lambda, s, NewtonOptions{.tol = o.tol});
    } catch (const SolverError&) {
      continue;
    }
    ++v.converged;
    const auto verdict = is_stable(problem, pt, o.mu_tol);
    v.mu1.push_back(verdict.mu1);
    if (verdict.cls == StabilityClass::unstable) {
      ++v.excluded_unstable;
      continue;
    }
    ++v.stable;
    kept.push_back(pt.u);
  }
  if (v.converged == 0)
    throw SolverError("estimates_lab", fmt::format("uniqueness probe: no Newton run converged at lambda = {}", lambda));
  for (std::size_t i = 1; i < kept.size(); ++i) v.spread = std::max(v.spread, (kept[i] - kept[0]).max_abs());
  if (!kept.empty()) v.spread = std::max(v.spread, (kept[0] - um).max_abs());
  v.pass = !kept.empty() && v.spread <= 10 * o.tol;
  v.note = fmt::format("{} of {} runs converged; {} stable, {} unstable excluded", v.converged, v.runs, v.stable,
                       v.excluded_unstable);
  return v;
}

}  // namespace gelfand
