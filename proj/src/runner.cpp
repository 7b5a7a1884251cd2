#include "gelfand/runner.hpp"

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fmt/chrono.h>
#include <fmt/format.h>
#include <fstream>
#include <json.hpp>
#include <map>
#include <set>
#include <sstream>
#include <thread>
#include <toml.hpp>
#include <unistd.h>

#include "gelfand/branch.hpp"
#include "gelfand/domain_approx.hpp"
#include "gelfand/errors.hpp"
#include "gelfand/estimates.hpp"
#include "gelfand/flatten.hpp"
#include "gelfand/stability.hpp"

#ifndef GELFAND_VERSION
#define GELFAND_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace gelfand {

struct ExperimentConfig::Impl {
  std::string source;
  toml::table root;
};

namespace {

// ---------------------------------------------------------------------------------------------
// Config access with located errors

[[noreturn]] void fail_at(const toml::source_region& where, const std::string& msg) {
  throw ParseError(msg, std::max<std::size_t>(where.begin.line, 1), std::max<std::size_t>(where.begin.column, 1));
}

class Section {
 public:
  Section(const toml::table* t, std::string name) : t_(t), name_(std::move(name)) {}

  bool present() const noexcept { return t_ != nullptr; }
  const std::string& name() const noexcept { return name_; }
  bool has(std::string_view key) const { return node(key) != nullptr; }

  [[noreturn]] void fail(std::string_view key, const std::string& msg) const {
    const toml::node* n = node(key);
    const auto where = n ? n->source() : (t_ ? t_->source() : toml::source_region{});
    fail_at(where, fmt::format("{}: {}", label(key), msg));
  }

  std::string label(std::string_view key) const { return fmt::format("[{}].{}", name_, key); }

  std::optional<double> number_opt(std::string_view key) const {
    const toml::node* n = node(key);
    if (!n) return std::nullopt;
    if (!n->is_number()) fail(key, "expected a number");
    return n->value<double>();
  }
  double number(std::string_view key, double def) const { return number_opt(key).value_or(def); }
  double positive(std::string_view key, double def) const {
    const double v = number(key, def);
    if (!(v > 0)) fail(key, fmt::format("must be positive (got {})", v));
    return v;
  }
  long long integer(std::string_view key, long long def) const {
    const toml::node* n = node(key);
    if (!n) return def;
    if (!n->is_integer()) fail(key, "expected an integer");
    return *n->value<long long>();
  }
  std::size_t count(std::string_view key, std::size_t def, std::size_t min = 1) const {
    const long long v = integer(key, static_cast<long long>(def));
    if (v < static_cast<long long>(min)) fail(key, fmt::format("must be at least {} (got {})", min, v));
    return static_cast<std::size_t>(v);
  }
  bool flag(std::string_view key, bool def) const {
    const toml::node* n = node(key);
    if (!n) return def;
    if (!n->is_boolean()) fail(key, "expected true or false");
    return *n->value<bool>();
  }
  std::string text(std::string_view key, const std::string& def) const {
    const toml::node* n = node(key);
    if (!n) return def;
    if (!n->is_string()) fail(key, "expected a string");
    return *n->value<std::string>();
  }
  std::vector<double> numbers(std::string_view key, std::vector<double> def) const {
    const toml::node* n = node(key);
    if (!n) return def;
    const toml::array* a = n->as_array();
    if (!a) fail(key, "expected an array of numbers");
    std::vector<double> out;
    for (const auto& e : *a) {
      if (!e.is_number()) fail_at(e.source(), label(key) + ": expected an array of numbers");
      out.push_back(*e.value<double>());
    }
    return out;
  }
  std::vector<std::string> texts(std::string_view key, std::vector<std::string> def) const {
    const toml::node* n = node(key);
    if (!n) return def;
    const toml::array* a = n->as_array();
    if (!a) fail(key, "expected an array of strings");
    std::vector<std::string> out;
    for (const auto& e : *a) {
      if (!e.is_string()) fail_at(e.source(), label(key) + ": expected an array of strings");
      out.push_back(*e.value<std::string>());
    }
    return out;
  }
  /// Expression text, parsed once here so errors point into the file.
  std::string expression(std::string_view key, const std::string& def, std::vector<std::string> vars) const {
    const std::string s = text(key, def);
    try {
      Expression::parse(s, std::move(vars));
    } catch (const ParseError& e) {
      const toml::node* n = node(key);
      const auto where = n ? n->source() : toml::source_region{};
      std::string msg = e.what();
      msg = msg.substr(0, msg.rfind(" at line "));
      throw ParseError(fmt::format("{} = \"{}\": {} (column {} of the expression)", label(key), s, msg, e.column()), std::max<std::size_t>(where.begin.line, 1),
                       std::max<std::size_t>(where.begin.column, 1) + e.column());
    }
    return s;
  }
  Section sub(std::string_view key) const {
    const toml::node* n = node(key);
    if (n && !n->is_table()) fail(key, "expected a table");
    return Section(n ? n->as_table() : nullptr, qualified(key));
  }
  std::vector<Section> tables(std::string_view key) const {
    const toml::node* n = node(key);
    std::vector<Section> out;
    if (!n) return out;
    const toml::array* a = n->as_array();
    if (!a || !a->is_array_of_tables()) fail(key, "expected an array of tables ([[...]])");
    for (const auto& e : *a) out.emplace_back(e.as_table(), qualified(key));
    return out;
  }
  void only(std::initializer_list<std::string_view> keys) const {
    if (!t_) return;
    for (const auto& [k, v] : *t_) {
      if (std::find(keys.begin(), keys.end(), k.str()) == keys.end()) {
        std::string allowed;
        for (auto a : keys) allowed += (allowed.empty() ? "" : ", ") + std::string(a);
        fail_at(k.source().begin.line ? k.source() : v.source(),
                fmt::format("unknown key '{}' in {} (allowed: {})", k.str(),
                            name_.empty() ? std::string("the top level") : "[" + name_ + "]", allowed));
      }
    }
  }

 private:
  const toml::node* node(std::string_view key) const { return t_ ? t_->get(key) : nullptr; }
  std::string qualified(std::string_view key) const {
    return name_.empty() ? std::string(key) : name_ + "." + std::string(key);
  }
  const toml::table* t_;
  std::string name_;
};

// ---------------------------------------------------------------------------------------------
// Output helpers

std::string num(double x) { return fmt::format("{:.17g}", x); }

std::string yes(bool b) { return b ? "true" : "false"; }

json jnum(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

std::string dump(const json& j) { return j.dump(2) + "\n"; }

struct Outcome {
  std::vector<std::pair<std::string, std::string>> files;
  std::vector<std::string> failed_checks;
  std::vector<std::string> failed_cells;

  void add(std::string name, std::string content) { files.emplace_back(std::move(name), std::move(content)); }
  void check(bool ok, std::string what) {
    if (!ok) failed_checks.push_back(std::move(what));
  }
};

struct Context {
  std::uint64_t seed = 42;
  int threads = 1;
};

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

// ---------------------------------------------------------------------------------------------
// Shared builders

struct Geometry {
  GridPtr grid;
  BoundarySpec bc;
  bool radial = true;
};

BoundaryKind boundary_kind(const Section& s, std::string_view key, BoundaryKind def) {
  const std::string v = s.text(key, def == BoundaryKind::dirichlet ? "dirichlet" : "neumann");
  if (v == "dirichlet") return BoundaryKind::dirichlet;
  if (v == "neumann") return BoundaryKind::neumann;
  s.fail(key, "expected \"dirichlet\" or \"neumann\"");
}

void check_geometry_keys(const Section& g) {
  g.only({"type", "n_dim", "nodes", "r_min", "radius", "stretch", "center", "n_r", "n_theta", "arc"});
}

/// `nodes_override` replaces the node count along r (sweeps over h).
Geometry geometry(const Section& g, std::optional<std::size_t> nodes_override = {}) {
  check_geometry_keys(g);
  const std::string type = g.text("type", "radial_ball");
  Geometry out;
  if (type == "radial_ball") {
    const int n = static_cast<int>(g.count("n_dim", 2));
    const double r_min = g.number("r_min", 0.0), radius = g.positive("radius", 1.0);
    if (r_min < 0 || r_min >= radius) g.fail("r_min", "must lie in [0, radius)");
    const std::size_t nodes = nodes_override.value_or(g.count("nodes", 801, 5));
    const double beta = g.number("stretch", 0.0);
    out.grid = make_grid(beta > 0 ? Grid::radial_stretched(r_min, radius, nodes, n, beta)
                                  : Grid::radial(r_min, radius, nodes, n));
    const auto def = r_min > 0 ? BoundaryKind::dirichlet : BoundaryKind::neumann;
    out.bc = BoundarySpec::radial(boundary_kind(g, "center", def), BoundaryKind::dirichlet);
    out.radial = true;
  } else if (type == "half_disk") {
    const std::size_t n_r = nodes_override.value_or(g.count("n_r", 129, 5));
    out.grid = make_grid(Grid::polar_half_disk(g.positive("radius", 1.0), n_r, g.count("n_theta", 41, 5)));
    out.bc = BoundarySpec::half_disk(boundary_kind(g, "arc", BoundaryKind::dirichlet));
    out.radial = false;
  } else {
    g.fail("type", "expected \"radial_ball\" or \"half_disk\"");
  }
  return out;
}

struct CoefficientSpec {
  CoefficientModel model = CoefficientModel::laplacian();
  double c0 = 1, C0 = 1, eps = 0;
  bool identity = true;
};

CoefficientSpec coefficient_spec(const Section& c, bool radial) {
  c.only({"a", "b", "a11", "a12", "a22", "b1", "b2", "c0", "C0", "eps_size"});
  CoefficientSpec s;
  s.c0 = c.positive("c0", 1.0);
  s.C0 = c.positive("C0", 1.0);
  s.eps = c.number("eps_size", 0.0);
  if (s.C0 < s.c0) c.fail("C0", "must be at least c0");
  if (s.eps < 0) c.fail("eps_size", "must be nonnegative");
  if (radial) {
    for (auto k : {"a11", "a12", "a22", "b1", "b2"})
      if (c.has(k)) c.fail(k, "planar coefficient on a radial geometry (use a and b)");
    if (c.has("a") || c.has("b")) {
      s.model = CoefficientModel::radial(c.expression("a", "1", {"r"}), c.expression("b", "0", {"r"}));
      s.identity = false;
    }
  } else {
    for (auto k : {"a", "b"})
      if (c.has(k)) c.fail(k, "radial coefficient on a planar geometry (use a11 ... b2)");
    if (c.has("a11") || c.has("a12") || c.has("a22") || c.has("b1") || c.has("b2")) {
      const std::vector<std::string> v{"x1", "x2"};
      s.model = CoefficientModel::planar(c.expression("a11", "1", v), c.expression("a12", "0", v),
                                         c.expression("a22", "1", v), c.expression("b1", "0", v),
                                         c.expression("b2", "0", v));
      s.identity = false;
    }
  }
  return s;
}

CoefficientField coefficients(const CoefficientSpec& s, const GridPtr& grid, const Section& where) {
  if (s.identity && s.c0 <= 1 && s.C0 >= 1) return CoefficientField::identity(grid);
  auto field = CoefficientField::sample(grid, s.model, s.c0, s.C0, s.eps);
  const auto rep = validate_ellipticity(field);
  if (!rep.pass)
    where.fail("c0", fmt::format("sampled eigenvalues [{:.6g}, {:.6g}] leave the declared band [c0, C0]",
                                 rep.min_eigenvalue, rep.max_eigenvalue));
  return field;
}

Nonlinearity nonlinearity(const Section& s) {
  s.only({"kind", "m", "f", "fprime"});
  const std::string kind = s.text("kind", "exponential");
  if (kind == "exponential") return Nonlinearity::exponential();
  if (kind == "mce") return Nonlinearity::mce();
  if (kind == "power") {
    const double m = s.number("m", 2.0);
    if (!(m > 1)) s.fail("m", "power nonlinearity needs m > 1");
    return Nonlinearity::power(m);
  }
  if (kind == "custom") {
    if (!s.has("f")) s.fail("kind", "custom nonlinearity needs f");
    return Nonlinearity::custom(s.expression("f", "", {"u"}), s.has("fprime") ? s.expression("fprime", "", {"u"}) : "");
  }
  s.fail("kind", "expected exponential, power, mce or custom");
}

LevelSetDomain level_set(const Section& d) {
  d.only({"name", "phi", "box", "center", "lipschitz_grad"});
  if (d.has("name") == d.has("phi")) d.fail(d.has("name") ? "phi" : "name", "give exactly one of name or phi");
  if (d.has("name")) {
    try {
      return LevelSetDomain::catalog(d.text("name", ""));
    } catch (const InvalidArgument& e) {
      d.fail("name", e.what());
    }
  }
  const auto box = d.numbers("box", {-1.5, 1.5, -1.5, 1.5});
  if (box.size() != 4 || !(box[0] < box[1] && box[2] < box[3])) d.fail("box", "expected [x1_lo, x1_hi, x2_lo, x2_hi]");
  const auto c = d.numbers("center", {0.0, 0.0});
  if (c.size() != 2) d.fail("center", "expected [x1, x2]");
  Box b;
  b.lo[0] = box[0];
  b.hi[0] = box[1];
  b.lo[1] = box[2];
  b.hi[1] = box[3];
  return LevelSetDomain("custom", d.expression("phi", "", {"x1", "x2"}), b, d.number_opt("lipschitz_grad"),
                        Vec2(c[0], c[1]));
}

ContinuationOptions continuation_options(const Section& s) {
  s.only({"lambda_start", "ds", "ds_min", "ds_max", "sup_max", "lambda_max", "lambda_min", "max_points", "newton_tol",
          "newton_max_iter", "mu1"});
  ContinuationOptions o;
  o.lambda_start = s.positive("lambda_start", o.lambda_start);
  o.ds = s.positive("ds", o.ds);
  o.ds_min = s.positive("ds_min", o.ds_min);
  o.ds_max = s.positive("ds_max", o.ds_max);
  o.sup_max = s.positive("sup_max", 20.0);
  o.lambda_max = s.positive("lambda_max", o.lambda_max);
  o.lambda_min = s.number("lambda_min", o.lambda_min);
  o.max_points = static_cast<int>(s.count("max_points", static_cast<std::size_t>(o.max_points)));
  o.newton_tol = s.positive("newton_tol", o.newton_tol);
  o.newton_max_iter = static_cast<int>(s.count("newton_max_iter", static_cast<std::size_t>(o.newton_max_iter)));
  return o;
}

// ---------------------------------------------------------------------------------------------
// branch

std::string branch_csv(const BifurcationDiagram& d) {
  std::string s = "index,lambda,sup_norm,mu1,is_fold,residual,arclength,dlambda_ds\n";
  for (std::size_t i = 0; i < d.points.size(); ++i) {
    const auto& p = d.points[i];
    s += fmt::format("{},{},{},{},{},{},{},{}\n", i, num(p.lambda), num(p.sup_norm),
                     std::isnan(p.mu1) ? "" : num(p.mu1), yes(p.is_fold), num(p.residual), num(p.arclength),
                     std::isnan(p.dlambda_ds) ? "" : num(p.dlambda_ds));
  }
  return s;
}

Outcome run_branch(const toml::table& root, const Context&) {
  Section top(&root, "");
  top.only({"run", "geometry", "coefficients", "nonlinearity", "continuation", "checks"});
  const auto geo = geometry(top.sub("geometry"));
  const auto cs = coefficient_spec(top.sub("coefficients"), geo.radial);
  const Section cont = top.sub("continuation");
  const auto co = continuation_options(cont);
  const Section checks = top.sub("checks");
  checks.only({"lambda_star", "lambda_star_rtol", "min_folds", "max_folds", "monotone"});

  GelfandProblem problem(coefficients(cs, geo.grid, top.sub("coefficients")), geo.bc,
                         nonlinearity(top.sub("nonlinearity")));
  auto d = continue_branch(problem, co);
  if (cont.flag("mu1", false)) annotate_mu1(problem, d);
  const auto ls = estimate_lambda_star(d);

  Outcome out;
  json rep;
  rep["lambda_star"] = {{"value", jnum(ls.value)}, {"uncertainty", jnum(ls.uncertainty)}, {"lower_bound", ls.lower_bound}};
  rep["fold_lambdas"] = json::array();
  for (double f : d.fold_lambdas) rep["fold_lambdas"].push_back(jnum(f));
  rep["folds"] = d.fold_indices.size();
  rep["points"] = d.points.size();
  rep["termination"] = d.termination;
  rep["divergence_bracket"] = d.divergence_bracket ? jnum(*d.divergence_bracket) : json(nullptr);
  double sup = 0;
  for (const auto& p : d.points) sup = std::max(sup, p.sup_norm);
  rep["sup_norm_max"] = jnum(sup);

  json jc = json::object();
  if (auto expected = checks.number_opt("lambda_star")) {
    const double rtol = checks.positive("lambda_star_rtol", 0.02);
    const bool ok = !ls.lower_bound && std::abs(ls.value - *expected) <= rtol * std::abs(*expected);
    jc["lambda_star"] = {{"expected", *expected}, {"rtol", rtol}, {"pass", ok}};
    out.check(ok, fmt::format("lambda* = {:.6g} (expected {:.6g} +- {:.3g}%)", ls.value, *expected, 100 * rtol));
  }
  if (checks.has("min_folds")) {
    const auto m = checks.count("min_folds", 0, 0);
    jc["min_folds"] = {{"expected", m}, {"pass", d.fold_indices.size() >= m}};
    out.check(d.fold_indices.size() >= m, fmt::format("{} folds < {}", d.fold_indices.size(), m));
  }
  if (checks.has("max_folds")) {
    const auto m = checks.count("max_folds", 0, 0);
    jc["max_folds"] = {{"expected", m}, {"pass", d.fold_indices.size() <= m}};
    out.check(d.fold_indices.size() <= m, fmt::format("{} folds > {}", d.fold_indices.size(), m));
  }
  if (checks.flag("monotone", false)) {
    bool mono = d.fold_indices.empty();
    for (std::size_t i = 1; i < d.points.size(); ++i) mono = mono && d.points[i].lambda > d.points[i - 1].lambda;
    jc["monotone"] = {{"pass", mono}};
    out.check(mono, "branch lambda is not monotone");
  }
  rep["checks"] = jc;
  rep["pass"] = out.failed_checks.empty();
  out.add("branch.csv", branch_csv(d));
  out.add("lambda_star.json", dump(rep));
  return out;
}

// ---------------------------------------------------------------------------------------------
// stability

Outcome run_stability(const toml::table& root, const Context& ctx) {
  Section top(&root, "");
  top.only({"run", "geometry", "coefficients", "nonlinearity", "solver", "stability", "hardy", "checks"});
  const auto geo = geometry(top.sub("geometry"));
  const auto cs = coefficient_spec(top.sub("coefficients"), geo.radial);
  const Section solver = top.sub("solver");
  solver.only({"tol"});
  const Section st = top.sub("stability");
  st.only({"lambdas", "upper_points", "sup_max", "corpus_count", "inequality_tol", "adapted"});
  const Section hardy = top.sub("hardy");
  hardy.only({"dims", "nodes", "r_min", "tol"});
  top.sub("checks").only({});

  GelfandProblem problem(coefficients(cs, geo.grid, top.sub("coefficients")), geo.bc,
                         nonlinearity(top.sub("nonlinearity")));
  const double tol = solver.positive("tol", 1e-10);
  const double itol = st.positive("inequality_tol", 1e-9);
  const bool adapted = st.flag("adapted", true);
  const auto lambdas = st.numbers("lambdas", {});
  for (double l : lambdas)
    if (!(l > 0)) st.fail("lambdas", "lambda values must be positive");
  const auto corpus = test_function_corpus(problem.op(), problem.coeffs(), ctx.seed,
                                           static_cast<int>(st.count("corpus_count", 50)));

  struct Row {
    double lambda;
    std::string branch;
    BranchPoint point;
  };
  std::vector<Row> rows;
  for (double l : lambdas) {
    auto m = minimal_solution(problem, l, MinimalOptions{.tol = tol});
    if (m.status != MinimalResult::Status::converged)
      throw SolverError("gelfand_branch",
                        fmt::format("no minimal solution at lambda = {} ({})", l, to_string(m.status)));
    rows.push_back({l, "minimal", m.point});
  }
  if (const auto upper = st.count("upper_points", 0, 0); upper > 0) {
    ContinuationOptions co;
    co.sup_max = st.positive("sup_max", 8.0);
    const auto d = continue_branch(problem, co);
    if (d.fold_indices.empty())
      throw SolverError("gelfand_branch", "no fold found: the branch has no unstable part up to sup_max");
    const std::size_t first = d.fold_indices.front() + 1, avail = d.points.size() - first;
    for (std::size_t k = 0; k < std::min(upper, avail); ++k) {
      const auto& p = d.points[first + (avail - 1) * (k + 1) / (std::min(upper, avail))];
      rows.push_back({p.lambda, "post_fold", p});
    }
  }

  Outcome out;
  std::string table = "lambda,branch,sup_norm,mu1,class,worst_excess,worst_id,worst_fixed_excess,inequality_holds\n";
  std::string detail = "lambda,branch,xi_id,lhs,rhs\n";
  for (const auto& r : rows) {
    const auto v = is_stable(problem, r.point);
    const auto rep = check_corpus(problem, r.point, corpus, adapted);
    const bool holds = rep.worst_excess <= itol;
    table += fmt::format("{},{},{},{},{},{},{},{},{}\n", num(r.lambda), r.branch, num(r.point.sup_norm), num(v.mu1),
                         to_string(v.cls), num(rep.worst_excess), csv_field(rep.worst_id),
                         num(rep.worst_fixed_excess), yes(holds));
    for (const auto& c : rep.checks)
      detail += fmt::format("{},{},{},{},{}\n", num(r.lambda), r.branch, csv_field(c.xi_id), num(c.lhs), num(c.rhs));
    // stable points must satisfy the inequality; unstable ones must be caught by some test function
    if (v.cls == StabilityClass::stable)
      out.check(holds, fmt::format("stable point lambda = {:.6g}: inequality fails for {}", r.lambda, rep.worst_id));
    if (v.cls == StabilityClass::unstable)
      out.check(!holds,
                fmt::format("unstable point lambda = {:.6g}: no corpus function violates the inequality", r.lambda));
  }
  out.add("stability.csv", table);
  out.add("corpus.csv", detail);

  if (hardy.present()) {
    const auto dims = hardy.numbers("dims", {9, 10, 12});
    const double r_min = hardy.positive("r_min", 1e-4);
    const std::size_t nodes = hardy.count("nodes", 2000, 10);
    if (r_min >= 1) hardy.fail("r_min", "must lie in (0, 1)");
    std::string h = "n,stable_form,expected,worst_ratio,witness\n";
    for (double dn : dims) {
      const int n = static_cast<int>(dn);
      if (n != dn || n < 3) hardy.fail("dims", "dimensions must be integers >= 3");
      const auto rep = hardy_threshold_check(n, make_grid(Grid::radial_geometric(r_min, 1, nodes, n)),
                                             hardy.positive("tol", 1e-3));
      h += fmt::format("{},{},{},{},{}\n", n, yes(rep.stable_form), yes(n >= 10), num(rep.worst_ratio),
                       csv_field(rep.witness));
      out.check(rep.stable_form == (n >= 10), fmt::format("Hardy threshold: n = {} gives stable_form = {}", n,
                                                         rep.stable_form));
    }
    out.add("hardy.csv", h);
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// flatten

Outcome run_flatten(const toml::table& root, const Context& ctx) {
  Section top(&root, "");
  top.only({"run", "domain", "coefficients", "flatten", "checks"});
  const Section fl = top.sub("flatten");
  fl.only({"points", "x0", "samples", "chart_n_r", "chart_n_theta"});
  const Section checks = top.sub("checks");
  checks.only({"ellipticity_tol", "roundtrip_tol"});
  auto domain = std::make_shared<const LevelSetDomain>(level_set(top.sub("domain")));
  const auto cs = coefficient_spec(top.sub("coefficients"), false);

  std::vector<Vec2> points;
  if (fl.has("x0")) {
    const toml::array* a = nullptr;
    if (const auto* n = root.get("flatten")->as_table()->get("x0")) a = n->as_array();
    if (!a) fl.fail("x0", "expected an array of [x1, x2] pairs");
    for (const auto& e : *a) {
      const toml::array* p = e.as_array();
      if (!p || p->size() != 2 || !(*p)[0].is_number() || !(*p)[1].is_number())
        fail_at(e.source(), "[flatten].x0: expected [x1, x2]");
      points.emplace_back(*(*p)[0].value<double>(), *(*p)[1].value<double>());
    }
  } else {
    points = ray_boundary(*domain, fl.count("points", 8)).points;
  }
  const std::size_t samples = fl.count("samples", 10000);
  const double etol = checks.positive("ellipticity_tol", 1e-9), rtol = checks.positive("roundtrip_tol", 1e-10);
  const std::size_t cn_r = fl.count("chart_n_r", 41, 5), cn_t = fl.count("chart_n_theta", 41, 5);

  struct Row {
    FlatteningMap map;
    InclusionReport inc;
    TransformedEllipticity te;
  };
  std::vector<std::optional<Row>> rows(points.size());
  parallel_for(points.size(), ctx.threads, [&](std::size_t i) {
    FlatteningMap map(domain, points[i]);
    const auto inc = verify_inclusions(map, samples, ctx.seed + i);
    auto chart = make_grid(Grid::polar_half_disk(map.rho, cn_r, cn_t));
    const auto tc = transform_coefficients(cs.model, cs.c0, cs.C0, map, chart);
    rows[i] = Row{map, inc, verify_transformed_ellipticity(tc, cs.c0, cs.C0, etol)};
  });

  Outcome out;
  std::string csv =
      "point,x0_1,x0_2,R1,R2,rho,first,second,third,roundtrip_error,det_min,eig_min,eig_max,pass\n";
  const double diam = domain->diameter();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = *rows[i];
    const bool ok = r.inc.all() && r.inc.roundtrip_error <= rtol * diam && r.inc.det_min > 0 && r.te.pass;
    csv += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", i, num(points[i].x()), num(points[i].y()),
                       num(r.map.R1), num(r.map.R2), num(r.map.rho), yes(r.inc.first), yes(r.inc.second),
                       yes(r.inc.third), num(r.inc.roundtrip_error), num(r.inc.det_min), num(r.te.min_eigenvalue),
                       num(r.te.max_eigenvalue), yes(ok));
    out.check(ok, fmt::format("boundary point {} ({:.6g}, {:.6g})", i, points[i].x(), points[i].y()));
  }
  json j;
  j["domain"] = {{"name", domain->name()},
                 {"phi", domain->phi_text()},
                 {"lipschitz_grad", jnum(domain->lipschitz_grad())},
                 {"inv_grad_bound", jnum(domain->inv_grad_bound())},
                 {"grad_sup", jnum(domain->grad_sup())}};
  j["points"] = rows.size();
  j["samples"] = samples;
  j["pass"] = out.failed_checks.empty();
  out.add("flatten.csv", csv);
  out.add("flatten.json", dump(j));
  return out;
}

// ---------------------------------------------------------------------------------------------
// approx

Outcome run_approx(const toml::table& root, const Context& ctx) {
  Section top(&root, "");
  top.only({"run", "domain", "approx", "checks"});
  const Section ap = top.sub("approx");
  ap.only({"eps1", "k_max"});
  top.sub("checks").only({});
  const auto domain = level_set(top.sub("domain"));
  std::optional<double> eps1;
  if (ap.has("eps1")) eps1 = ap.positive("eps1", 0);
  const auto rep = approximate_domain(domain, eps1, static_cast<int>(ap.count("k_max", 6)), ctx.threads);

  Outcome out;
  std::string csv = "k,eps,nested,hausdorff,hausdorff_bound,resolution,grad_min,grad_floor,grad_pass,lipschitz\n";
  for (const auto& e : rep.entries) {
    csv += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", e.k, num(e.eps), yes(e.nested), num(e.hausdorff),
                       num(e.hausdorff_bound), num(e.resolution), num(e.grad.min_grad), num(e.grad.floor),
                       yes(e.grad.pass), num(e.lipschitz));
    out.check(e.nested, fmt::format("k = {}: nesting fails", e.k));
    out.check(e.hausdorff <= e.hausdorff_bound + e.resolution, fmt::format("k = {}: Hausdorff bound", e.k));
    out.check(e.grad.pass, fmt::format("k = {}: gradient floor", e.k));
  }
  out.check(rep.recursion_exact, "eps recursion is not exact");
  out.check(rep.exhaustion.violations == 0, "exhaustion check found interior points outside Omega_k");
  json j;
  j["L"] = jnum(rep.L);
  j["L_raw"] = jnum(rep.L_raw);
  j["rho"] = jnum(rep.rho);
  j["eps1_bound"] = jnum(rep.eps1_bound);
  j["recursion_exact"] = rep.recursion_exact;
  j["exhaustion"] = {{"checked", rep.exhaustion.checked}, {"violations", rep.exhaustion.violations}};
  j["pass"] = rep.all();
  out.add("approx.csv", csv);
  out.add("approx.json", dump(j));
  return out;
}

// ---------------------------------------------------------------------------------------------
// verify

std::string file_group(const EstimateReport& r) {
  std::string g;
  if (r.id == EstimateId::annuli) g = r.note.substr(0, r.note.find(';'));
  if (auto it = r.params.find("group_rho"); it != r.params.end()) g = fmt::format("rho{:.6g}", it->second);
  return to_string(r.id) + (g.empty() ? "" : "_" + g);
}

Outcome run_verify(const toml::table& root, const Context& ctx) {
  Section top(&root, "");
  top.only({"run", "family", "nonlinearity", "estimates", "interpolation", "uniqueness", "checks"});
  const Section fam = top.sub("family");
  fam.only({"geometry", "n_dim", "n_r", "n_theta", "coarse_n_r", "coarse_n_theta", "fractions", "standard", "custom",
            "tol"});
  const Section est = top.sub("estimates");
  est.only({"gamma", "alpha", "alpha_min", "rho_weighted"});
  const Section ip = top.sub("interpolation");
  ip.only({"fields", "deltas", "nodes", "half_annulus"});
  const Section un = top.sub("uniqueness");
  un.only({"fractions", "starts", "tol"});
  const Section checks = top.sub("checks");
  checks.only({"variation_bound", "require_admitted"});

  FamilySpec spec;
  const std::string geo = fam.text("geometry", "half_disk");
  if (geo == "half_disk") {
    spec.geometry = FamilySpec::Geometry::half_disk;
  } else if (geo == "radial_ball") {
    spec.geometry = FamilySpec::Geometry::radial_ball;
    spec.n_r = 401;
    spec.coarse_n_r = 401;
  } else {
    fam.fail("geometry", "expected \"half_disk\" or \"radial_ball\"");
  }
  spec.n_dim = static_cast<int>(fam.count("n_dim", 2));
  spec.n_r = fam.count("n_r", spec.n_r, 5);
  spec.n_theta = fam.count("n_theta", spec.n_theta, 5);
  spec.coarse_n_r = fam.count("coarse_n_r", spec.coarse_n_r, 5);
  spec.coarse_n_theta = fam.count("coarse_n_theta", spec.coarse_n_theta, 5);
  spec.lambda_fractions = fam.numbers("fractions", spec.lambda_fractions);
  spec.tol = fam.positive("tol", spec.tol);
  spec.f = nonlinearity(top.sub("nonlinearity"));
  spec.threads = ctx.threads;
  const auto standard = standard_perturbations();
  spec.perturbations.clear();
  for (const auto& name : fam.texts("standard", {"identity", "shear", "drift", "mixed"})) {
    auto it = std::find_if(standard.begin(), standard.end(), [&](const auto& p) { return p.name == name; });
    if (it == standard.end()) fam.fail("standard", fmt::format("unknown perturbation '{}'", name));
    spec.perturbations.push_back(*it);
  }
  for (const auto& c : fam.tables("custom")) {
    c.only({"name", "a11", "a12", "a22", "b1", "b2", "a", "b", "c0", "C0", "eps_size"});
    CoefficientPerturbation p;
    p.name = c.text("name", "");
    if (p.name.empty() || p.name.find_first_of(",\"/\n\r") != std::string::npos)
      c.fail("name", "needs a nonempty name without commas, quotes or slashes");
    const bool radial = spec.geometry == FamilySpec::Geometry::radial_ball;
    const auto cs = [&] {
      // reuse the coefficient schema on the custom table, minus the name
      CoefficientSpec s;
      s.c0 = c.positive("c0", 1.0);
      s.C0 = c.positive("C0", 1.0);
      s.eps = c.number("eps_size", 0.0);
      if (radial) {
        s.model = CoefficientModel::radial(c.expression("a", "1", {"r"}), c.expression("b", "0", {"r"}));
      } else {
        const std::vector<std::string> v{"x1", "x2"};
        s.model = CoefficientModel::planar(c.expression("a11", "1", v), c.expression("a12", "0", v),
                                           c.expression("a22", "1", v), c.expression("b1", "0", v),
                                           c.expression("b2", "0", v));
      }
      return s;
    }();
    p.model = cs.model;
    p.c0 = cs.c0;
    p.C0 = cs.C0;
    p.eps_size = cs.eps;
    spec.perturbations.push_back(p);
  }
  if (spec.perturbations.empty()) fam.fail("standard", "the family needs at least one perturbation");
  {
    std::set<std::string> names;
    for (const auto& p : spec.perturbations)
      if (!names.insert(p.name).second) fam.fail("custom", fmt::format("duplicate perturbation name '{}'", p.name));
  }

  VerifyOptions vo;
  vo.gamma = est.positive("gamma", vo.gamma);
  vo.alpha = est.positive("alpha", vo.alpha);
  vo.alpha_min = est.positive("alpha_min", vo.alpha_min);
  vo.rho_weighted = est.positive("rho_weighted", vo.rho_weighted);
  vo.threads = ctx.threads;
  const double bound = checks.positive("variation_bound", 10.0);

  const auto family = build_family(spec);
  const auto reports = verify_family(family, vo);
  const auto stats = summarize(reports);

  Outcome out;
  std::string members = "member_id,perturbation,fraction,lambda,eps_size,residual,mu1,admitted,note\n";
  for (const auto& m : family.members) {
    members += fmt::format("{},{},{},{},{},{},{},{},{}\n", csv_field(m.id),
                           csv_field(spec.perturbations[m.perturbation].name), num(m.fraction), num(m.lambda),
                           num(m.eps_size), num(m.residual), num(m.mu1), yes(m.admitted), csv_field(m.note));
    if (checks.flag("require_admitted", true))
      out.check(m.admitted, fmt::format("member {} not admitted: {}", m.id, m.note));
  }
  out.add("members.csv", members);

  std::map<std::string, std::vector<EstimateReport>> by_file;
  for (const auto& r : reports) by_file[file_group(r)].push_back(r);
  for (const auto& [name, rs] : by_file) out.add("estimates/" + name + ".csv", reports_csv(rs));

  json j;
  j["lambda_star"] = json::object();
  for (std::size_t p = 0; p < spec.perturbations.size(); ++p)
    j["lambda_star"][spec.perturbations[p].name] = {{"value", jnum(family.lambda_star[p].value)},
                                                    {"uncertainty", jnum(family.lambda_star[p].uncertainty)},
                                                    {"lower_bound", family.lambda_star[p].lower_bound}};
  j["statistics"] = json::array();
  for (const auto& s : stats) {
    const bool varies_ok = s.id == EstimateId::decay || s.variation < bound;
    j["statistics"].push_back({{"estimate", to_string(s.id)},
                               {"group", s.note},
                               {"count", s.count},
                               {"min_ratio", jnum(s.min_ratio)},
                               {"max_ratio", jnum(s.max_ratio)},
                               {"variation", jnum(s.variation)},
                               {"all_pass", s.all_pass}});
    const std::string label = to_string(s.id) + (s.note.empty() ? "" : " (" + s.note + ")");
    out.check(s.all_pass, label + ": a member fails the pass criterion");
    out.check(varies_ok, fmt::format("{}: variation {:.4g} >= {:.4g}", label, s.variation, bound));
  }
  j["options"] = {{"gamma", vo.gamma}, {"alpha", vo.alpha}, {"alpha_min", vo.alpha_min}, {"rho_weighted", vo.rho_weighted},
                  {"variation_bound", bound}};

  if (ip.present()) {
    const auto deltas = ip.numbers("deltas", {0.1, 0.5});
    for (double d : deltas)
      if (!(d > 0 && d < 1)) ip.fail("deltas", "delta values must lie in (0, 1)");
    const std::size_t nf = ip.count("fields", 100), nodes = ip.count("nodes", 101, 5);
    std::string csv = "member_id,lambda,eps_size,h,lhs,rhs,ratio,pass\n";
    json ji;
    auto run_cover = [&](const std::string& label, const GridPtr& g, std::uint64_t seed) {
      auto s = verify_interpolation_family(random_trig_fields(g, nf, seed), deltas);
      for (auto& r : s.reports) r.member_id = label + "/" + r.member_id + fmt::format("/delta{:.6g}", r.params["delta"]);
      std::string body = reports_csv(s.reports);
      csv += body.substr(body.find('\n') + 1);
      ji[label] = {{"constant", jnum(s.constant)}, {"fields", s.fields}};
      out.check(std::isfinite(s.constant) && s.constant > 0, "interpolation constant on " + label);
    };
    run_cover("square", make_grid(Grid::cartesian(0, 1, nodes, 0, 1, nodes)), ctx.seed);
    if (ip.flag("half_annulus", true))
      run_cover("half_annulus", make_grid(Grid::polar_half_disk(1, nodes, 41)), ctx.seed + 1);
    ji["deltas"] = deltas;
    j["interpolation"] = ji;
    out.add("interpolation.csv", csv);
  }

  if (un.present()) {
    const auto fractions = un.numbers("fractions", {0.2, 0.4, 0.6, 0.8});
    UniquenessOptions uo;
    uo.starts = un.count("starts", 10);
    uo.tol = un.positive("tol", 1e-10);
    uo.seed = ctx.seed;
    const auto& p0 = spec.perturbations.front();
    const auto& grid = family.grid;
    const bool radial = spec.geometry == FamilySpec::Geometry::radial_ball;
    const BoundarySpec bc = radial ? BoundarySpec::ball() : BoundarySpec::half_disk(BoundaryKind::dirichlet);
    GelfandProblem problem(p0.name == "identity" ? CoefficientField::identity(grid)
                                                 : CoefficientField::sample(grid, p0.model, p0.c0, p0.C0, p0.eps_size),
                           bc, spec.f);
    std::string csv = "lambda,runs,converged,stable,excluded_unstable,spread,degenerate,pass,note\n";
    for (double f : fractions) {
      if (!(f > 0 && f < 1)) un.fail("fractions", "fractions of lambda* must lie in (0, 1)");
      const double lambda = f * family.lambda_star.front().value;
      const auto v = uniqueness_probe(problem, lambda, uo);
      csv += fmt::format("{},{},{},{},{},{},{},{},{}\n", num(lambda), v.runs, v.converged, v.stable,
                         v.excluded_unstable, num(v.spread), yes(v.degenerate), yes(v.pass), csv_field(v.note));
      out.check(v.pass, fmt::format("uniqueness at lambda = {:.6g}: spread {:.3e}", lambda, v.spread));
    }
    out.add("uniqueness.csv", csv);
  }

  j["pass"] = out.failed_checks.empty();
  out.add("summary.json", dump(j));
  return out;
}

// ---------------------------------------------------------------------------------------------
// sweep

Outcome run_sweep(const toml::table& root, const Context& ctx) {
  Section top(&root, "");
  top.only({"run", "geometry", "nonlinearity", "sweep", "checks"});
  const Section sw = top.sub("sweep");
  sw.only({"lambda", "h", "eps_size", "tol", "perturbation"});
  const Section pert = sw.sub("perturbation");
  const Section checks = top.sub("checks");
  checks.only({"max_failed_cells"});
  const Section gs = top.sub("geometry");
  geometry(gs);  // validates the base geometry
  const bool radial = gs.text("type", "radial_ball") == "radial_ball";
  pert.only({"a", "b", "a11", "a12", "a22", "b1", "b2", "c0", "C0"});
  const auto f = nonlinearity(top.sub("nonlinearity"));

  auto lambdas = sw.numbers("lambda", {});
  auto hs = sw.numbers("h", {});
  auto eps = sw.numbers("eps_size", {0.0});
  if (lambdas.empty()) sw.fail("lambda", "the sweep needs at least one lambda");
  if (hs.empty()) sw.fail("h", "the sweep needs at least one h");
  for (double l : lambdas)
    if (!(l > 0) || !std::isfinite(l)) sw.fail("lambda", "lambda values must be finite and positive");
  for (double h : hs)
    if (!(h > 0 && h <= 0.5)) sw.fail("h", "h must lie in (0, 1/2]");
  for (double e : eps)
    if (!(e >= 0) || !std::isfinite(e)) sw.fail("eps_size", "eps_size values must be finite and >= 0");
  for (auto* v : {&lambdas, &hs, &eps}) {
    std::sort(v->begin(), v->end());
    v->erase(std::unique(v->begin(), v->end()), v->end());
  }
  const double tol = sw.positive("tol", 1e-10);
  const double radius = gs.positive("radius", 1.0);
  const double c0 = pert.positive("c0", 0.5), C0 = pert.positive("C0", 2.0);
  std::vector<std::string> dir;
  if (radial) {
    dir = {pert.expression("a", "0", {"r"}), pert.expression("b", "0", {"r"})};
  } else {
    const std::vector<std::string> v{"x1", "x2"};
    for (auto k : {"a11", "a12", "a22", "b1", "b2"}) dir.push_back(pert.expression(k, "0", v));
  }

  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  struct Cell {
    double lambda = 0, h = 0, eps = 0;
    std::size_t nodes = 0;
    std::string status;
    double sup = nan, mu1 = nan, residual = nan;
    int iterations = 0;
    std::string note;
  };
  std::vector<Cell> cells;
  for (double l : lambdas)
    for (double h : hs)
      for (double e : eps) {
        Cell c;
        c.lambda = l;
        c.h = h;
        c.eps = e;
        cells.push_back(c);
      }

  parallel_for(cells.size(), ctx.threads, [&](std::size_t i) {
    Cell& c = cells[i];
    c.nodes = static_cast<std::size_t>(std::llround(radius / c.h)) + 1;
    try {
      const auto geo = geometry(gs, c.nodes);
      const std::string e = num(c.eps);
      CoefficientField coeffs = CoefficientField::identity(geo.grid);
      if (c.eps > 0) {
        if (radial) {
          coeffs = CoefficientField::sample(
              geo.grid, CoefficientModel::radial("1 + " + e + "*(" + dir[0] + ")", e + "*(" + dir[1] + ")"), c0, C0,
              c.eps);
        } else {
          coeffs = CoefficientField::sample(
              geo.grid,
              CoefficientModel::planar("1 + " + e + "*(" + dir[0] + ")", e + "*(" + dir[1] + ")",
                                       "1 + " + e + "*(" + dir[2] + ")", e + "*(" + dir[3] + ")",
                                       e + "*(" + dir[4] + ")"),
              c0, C0, c.eps);
        }
      }
      GelfandProblem problem(coeffs, geo.bc, f);
      const auto m = minimal_solution(problem, c.lambda, MinimalOptions{.tol = tol});
      c.iterations = m.iterations;
      switch (m.status) {
        case MinimalResult::Status::converged: {
          c.status = "Converged";
          c.sup = m.point.sup_norm;
          c.residual = m.point.residual;
          c.mu1 = principal_eigenpair(jacobi_operator(problem, m.point)).mu1;
          break;
        }
        case MinimalResult::Status::diverged:
          c.status = "Diverged";
          c.note = m.note;
          break;
        case MinimalResult::Status::not_converged:
          c.status = "NotConverged";
          c.note = m.note;
          break;
      }
    } catch (const Error& e) {
      c.status = "Failed";
      c.note = e.what();
    }
  });

  Outcome out;
  std::string csv = "lambda,h,eps_size,nodes,status,sup_norm,mu1,residual,iterations,note\n";
  for (const auto& c : cells) {
    csv += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", num(c.lambda), num(c.h), num(c.eps), c.nodes, c.status,
                       num(c.sup), num(c.mu1), num(c.residual), c.iterations, csv_field(c.note));
    if (c.status != "Converged")
      out.failed_cells.push_back(
          fmt::format("lambda={:.6g} h={:.6g} eps_size={:.6g}: {}", c.lambda, c.h, c.eps, c.status));
  }
  const auto allowed = checks.count("max_failed_cells", 0, 0);
  out.check(out.failed_cells.size() <= allowed,
            fmt::format("{} failed cells (allowed {})", out.failed_cells.size(), allowed));
  out.add("sweep.csv", csv);
  return out;
}

std::string utc_now() {
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}",
                     fmt::gmtime(std::chrono::system_clock::to_time_t(std::chrono::system_clock::now())));
}

json to_json(const toml::node& n) {
  if (const auto* t = n.as_table()) {
    json j = json::object();
    for (const auto& [k, v] : *t) j[std::string(k.str())] = to_json(v);
    return j;
  }
  if (const auto* a = n.as_array()) {
    json j = json::array();
    for (const auto& v : *a) j.push_back(to_json(v));
    return j;
  }
  if (n.is_integer()) return *n.value<long long>();
  if (n.is_floating_point()) return jnum(*n.value<double>());
  if (n.is_boolean()) return *n.value<bool>();
  if (n.is_string()) return *n.value<std::string>();
  std::ostringstream os;
  n.visit([&](const auto& v) { os << v; });  // dates and times
  return os.str();
}

}  // namespace

// ---------------------------------------------------------------------------------------------

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::branch: return "branch";
    case ExperimentKind::stability: return "stability";
    case ExperimentKind::flatten: return "flatten";
    case ExperimentKind::approx: return "approx";
    case ExperimentKind::verify: return "verify";
    case ExperimentKind::sweep: return "sweep";
  }
  return "";
}

ExperimentKind parse_kind(std::string_view name) {
  for (auto k : {ExperimentKind::branch, ExperimentKind::stability, ExperimentKind::flatten, ExperimentKind::approx,
                 ExperimentKind::verify, ExperimentKind::sweep})
    if (to_string(k) == name) return k;
  throw InvalidArgument(fmt::format("unknown experiment kind '{}'", name));
}

ExperimentConfig ExperimentConfig::parse(std::string_view text, std::string source) {
  auto impl = std::make_shared<Impl>();
  impl->source = std::move(source);
  try {
    impl->root = toml::parse(text, impl->source);
  } catch (const toml::parse_error& e) {
    throw ParseError(fmt::format("{}: {}", impl->source, e.description()), e.source().begin.line,
                     e.source().begin.column);
  }
  ExperimentConfig c;
  c.impl_ = std::move(impl);
  Section run(c.impl_->root.get_as<toml::table>("run"), "run");
  if (c.impl_->root.contains("run") && !c.impl_->root.get("run")->is_table())
    fail_at(c.impl_->root.get("run")->source(), "[run] must be a table");
  run.only({"kind", "seed", "threads"});
  c.kind();  // validates the name
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument(fmt::format("cannot read config file {}", path.string()));
  std::ostringstream os;
  os << in.rdbuf();
  return parse(os.str(), path.string());
}

const std::string& ExperimentConfig::source() const noexcept { return impl_->source; }

std::optional<ExperimentKind> ExperimentConfig::kind() const {
  Section run(impl_->root.get_as<toml::table>("run"), "run");
  if (!run.has("kind")) return std::nullopt;
  const std::string k = run.text("kind", "");
  try {
    return parse_kind(k);
  } catch (const InvalidArgument& e) {
    run.fail("kind", e.what());
  }
}

std::string ExperimentConfig::canonical() const { return to_json(impl_->root).dump(); }

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256: digest failed");
  std::string out;
  for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", md[i]);
  return out;
}

std::string csv_field(std::string_view text) {
  if (text.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(text);
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void write_atomic(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + fmt::format(".tmp-{}", static_cast<long>(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write {}", tmp.string()));
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      out.close();
      fs::remove(tmp);
      throw Error(fmt::format("short write to {}", tmp.string()));
    }
  }
  fs::rename(tmp, path);
}

RunManifest run_experiment(ExperimentKind kind, const ExperimentConfig& config, const RunOptions& options) {
  RunManifest m;
  m.kind = to_string(kind);
  m.version = GELFAND_VERSION;
  m.started = utc_now();
  Outcome out;
  try {
    const auto& root = config.impl().root;
    if (auto k = config.kind(); k && *k != kind)
      Section(root.get_as<toml::table>("run"), "run")
          .fail("kind", fmt::format("config is for '{}', not '{}'", to_string(*k), m.kind));
    Section run(root.get_as<toml::table>("run"), "run");
    Context ctx;
    if (options.seed) {
      ctx.seed = *options.seed;
    } else if (run.has("seed")) {
      const auto s = run.integer("seed", 42);
      if (s < 0) run.fail("seed", "must be nonnegative");
      ctx.seed = static_cast<std::uint64_t>(s);
    }
    if (options.threads) {
      ctx.threads = *options.threads;
    } else if (const char* env = std::getenv("GELFAND_LAB_THREADS"); env && *env) {
      char* end = nullptr;
      const long t = std::strtol(env, &end, 10);
      if (*end != '\0') throw InvalidArgument(fmt::format("GELFAND_LAB_THREADS = '{}' is not an integer", env));
      ctx.threads = static_cast<int>(t);
    } else {
      ctx.threads = static_cast<int>(run.count("threads", 1));
    }
    if (ctx.threads < 1) throw InvalidArgument(fmt::format("thread count must be at least 1 (got {})", ctx.threads));
    m.seed = ctx.seed;
    m.threads = ctx.threads;
    m.config_hash = sha256_hex(json{{"config", json::parse(config.canonical())}, {"seed", ctx.seed}}.dump());

    switch (kind) {
      case ExperimentKind::branch: out = run_branch(root, ctx); break;
      case ExperimentKind::stability: out = run_stability(root, ctx); break;
      case ExperimentKind::flatten: out = run_flatten(root, ctx); break;
      case ExperimentKind::approx: out = run_approx(root, ctx); break;
      case ExperimentKind::verify: out = run_verify(root, ctx); break;
      case ExperimentKind::sweep: out = run_sweep(root, ctx); break;
    }
    m.failed_checks = out.failed_checks;
    m.failed_cells = out.failed_cells;
    m.exit_code = out.failed_checks.empty() ? ExitCode::ok : ExitCode::check_failed;
  } catch (const ParseError& e) {
    m.error = e.what();
    m.exit_code = ExitCode::config_error;
    out.files.clear();
  } catch (const InvalidArgument& e) {
    m.error = e.what();
    m.exit_code = ExitCode::config_error;
    out.files.clear();
  } catch (const std::exception& e) {
    m.error = e.what();
    m.exit_code = ExitCode::solver_error;
    out.files.clear();
  }

  try {
    for (const auto& [name, content] : out.files) {
      write_atomic(options.out / name, content);
      m.files.push_back(name);
    }
    std::sort(m.files.begin(), m.files.end());
    m.finished = utc_now();
    json j;
    j["kind"] = m.kind;
    j["artifact_version"] = m.version;
    j["config_hash"] = m.config_hash;
    j["config_source"] = config.source();
    j["seed"] = m.seed;
    j["threads"] = m.threads;
    j["started"] = m.started;
    j["finished"] = m.finished;
    j["files"] = m.files;
    j["failed_checks"] = m.failed_checks;
    j["failed_cells"] = m.failed_cells;
    j["error"] = m.error.empty() ? json(nullptr) : json(m.error);
    j["exit_code"] = static_cast<int>(m.exit_code);
    write_atomic(options.out / "manifest.json", dump(j));
  } catch (const std::exception& e) {
    m.error = m.error.empty() ? std::string(e.what()) : m.error + "; " + e.what();
    if (m.exit_code == ExitCode::ok || m.exit_code == ExitCode::check_failed) m.exit_code = ExitCode::solver_error;
  }
  return m;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"gelfand_lab: stable solutions of -Lu = lambda f(u), branch tracking and estimate verification"};
  app.require_subcommand(1);
  std::string config_path, out_dir = "out";
  std::optional<int> threads;
  std::optional<std::uint64_t> seed;
  for (auto k : {ExperimentKind::branch, ExperimentKind::stability, ExperimentKind::flatten, ExperimentKind::approx,
                 ExperimentKind::verify, ExperimentKind::sweep}) {
    static const std::map<ExperimentKind, const char*> about{
        {ExperimentKind::branch, "trace the solution branch and locate lambda*"},
        {ExperimentKind::stability, "classify branch points and test the stability inequality"},
        {ExperimentKind::flatten, "flatten the boundary and check the transformed coefficients"},
        {ExperimentKind::approx, "approximate a domain by a nested family of smooth domains"},
        {ExperimentKind::verify, "build a family of stable solutions and measure the estimates"},
        {ExperimentKind::sweep, "sweep lambda, mesh size and perturbation size"}};
    auto* sub = app.add_subcommand(to_string(k), about.at(k));
    sub->add_option("--config", config_path, "TOML experiment file")->required();
    sub->add_option("--out", out_dir, "output directory")->capture_default_str();
    sub->add_option("--threads", threads, "worker threads (overrides GELFAND_LAB_THREADS)");
    sub->add_option("--seed", seed, "random seed (default 42)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::config_error);
  }
  const auto kind = parse_kind(app.get_subcommands().front()->get_name());

  ExperimentConfig config;
  try {
    config = ExperimentConfig::load(config_path);
  } catch (const Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return static_cast<int>(ExitCode::config_error);
  }
  RunOptions o;
  o.out = out_dir;
  o.threads = threads;
  o.seed = seed;
  const auto m = run_experiment(kind, config, o);
  for (const auto& f : m.files) fmt::print("wrote {}\n", (o.out / f).string());
  for (const auto& c : m.failed_cells) fmt::print("failed cell: {}\n", c);
  for (const auto& c : m.failed_checks) fmt::print("check failed: {}\n", c);
  if (!m.error.empty()) fmt::print(stderr, "error: {}\n", m.error);
  fmt::print("{} {}\n", m.kind,
             m.exit_code == ExitCode::ok ? "passed" : (m.exit_code == ExitCode::check_failed ? "failed" : "aborted"));
  return static_cast<int>(m.exit_code);
}

}  // namespace gelfand
