#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fmt/format.h>
#include <fstream>
#include <sstream>
#include <unistd.h>
#include <vector>

#include "gelfand/errors.hpp"
#include "gelfand/runner.hpp"

using namespace gelfand;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / fmt::format("gelfand_runner_{}_{}", name, ::getpid());
  fs::remove_all(p);
  return p;
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  for (std::string l; std::getline(is, l);) out.push_back(l);
  return out;
}

const char* kSweep = R"(
[run]
kind = "sweep"

[geometry]
type = "radial_ball"
n_dim = 2

[sweep]
lambda = [1.5, 0.5, 1.0]
h = [0.02, 0.01, 0.04]

[checks]
max_failed_cells = 3
)";

RunManifest run(ExperimentKind kind, const std::string& text, const fs::path& out, std::optional<int> threads = {}) {
  RunOptions o;
  o.out = out;
  o.threads = threads;
  return run_experiment(kind, ExperimentConfig::parse(text), o);
}

ParseError parse_error(const std::string& text) {
  try {
    ExperimentConfig::parse(text);
  } catch (const ParseError& e) {
    return e;
  }
  FAIL("no ParseError");
  return ParseError("", 0, 0);
}

}  // namespace

TEST_SUITE("cli_runner") {
  TEST_CASE("helpers") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(csv_field("plain") == "plain");
    CHECK(csv_field("a,b") == "\"a,b\"");
    CHECK(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
    CHECK(csv_field("two\nlines") == "\"two\nlines\"");

    const auto dir = scratch("atomic");
    write_atomic(dir / "sub" / "f.txt", "x\n");
    CHECK(slurp(dir / "sub" / "f.txt") == "x\n");
    write_atomic(dir / "sub" / "f.txt", "y\n");
    CHECK(slurp(dir / "sub" / "f.txt") == "y\n");
    CHECK(std::distance(fs::directory_iterator(dir / "sub"), fs::directory_iterator()) == 1);
    fs::remove_all(dir);

    CHECK(parse_kind("verify") == ExperimentKind::verify);
    CHECK(to_string(ExperimentKind::sweep) == "sweep");
    CHECK_THROWS_AS(parse_kind("solve"), InvalidArgument);
  }

  TEST_CASE("config hash ignores field order") {
    const auto a = ExperimentConfig::parse("[run]\nkind = \"sweep\"\nseed = 5\n[sweep]\nlambda = [1.0]\nh = [0.1]\n");
    const auto b = ExperimentConfig::parse("[sweep]\nh = [0.1]\nlambda = [1.0]\n\n[run]\nseed = 5\nkind = \"sweep\"\n");
    const auto c = ExperimentConfig::parse("[run]\nkind = \"sweep\"\nseed = 5\n[sweep]\nlambda = [1.0]\nh = [0.2]\n");
    CHECK(a.canonical() == b.canonical());
    CHECK(a.canonical() != c.canonical());
    CHECK(a.kind() == ExperimentKind::sweep);

    const auto d1 = scratch("hash1"), d2 = scratch("hash2");
    RunOptions o;
    o.out = d1;
    const auto m1 = run_experiment(ExperimentKind::sweep, a, o);
    o.out = d2;
    const auto m2 = run_experiment(ExperimentKind::sweep, b, o);
    CHECK(m1.config_hash.size() == 64);
    CHECK(m1.config_hash == m2.config_hash);
    // the effective seed is part of the hash
    o.seed = 6;
    const auto m3 = run_experiment(ExperimentKind::sweep, a, o);
    CHECK(m3.config_hash != m1.config_hash);
    CHECK(m3.seed == 6);
    CHECK(m1.seed == 5);
    fs::remove_all(d1);
    fs::remove_all(d2);
  }

  TEST_CASE("parse errors carry positions") {
    const auto syntax = parse_error("[run]\nkind = \"sweep\"\nseed = = 3\n");
    CHECK(syntax.line() == 3);

    const auto unknown = parse_error("[run]\nkind = \"sweep\"\n\nthreadz = 2\n");
    CHECK(unknown.line() == 4);
    CHECK(std::string(unknown.what()).find("threadz") != std::string::npos);

    const auto kind = parse_error("[run]\nkind = \"solve\"\n");
    CHECK(kind.line() == 2);

    // expression errors surface through run_experiment with the config line
    const std::string bad = "[run]\nkind = \"branch\"\n[geometry]\ntype = \"half_disk\"\n[coefficients]\na11 = \"sin(\"\n";
    const auto dir = scratch("badexpr");
    const auto m = run(ExperimentKind::branch, bad, dir);
    CHECK(m.exit_code == ExitCode::config_error);
    CHECK(m.error.find("a11") != std::string::npos);
    CHECK(m.error.find("line 6") != std::string::npos);
    CHECK(m.files.empty());
    // the manifest is still written, and no data files
    CHECK(fs::exists(dir / "manifest.json"));
    CHECK(std::distance(fs::directory_iterator(dir), fs::directory_iterator()) == 1);
    CHECK(slurp(dir / "manifest.json").find("\"exit_code\": 2") != std::string::npos);
    fs::remove_all(dir);
  }

  TEST_CASE("configuration errors") {
    const auto dir = scratch("cfg");
    // kind mismatch
    CHECK(run(ExperimentKind::branch, kSweep, dir).exit_code == ExitCode::config_error);
    // coefficients outside the declared band
    const std::string band =
        "[geometry]\ntype = \"half_disk\"\nn_r = 21\nn_theta = 11\n[coefficients]\na11 = \"2\"\nc0 = 0.5\nC0 = 1.5\n";
    const auto m = run(ExperimentKind::branch, band, dir);
    CHECK(m.exit_code == ExitCode::config_error);
    CHECK(m.error.find("band") != std::string::npos);
    // planar coefficients on a radial geometry
    CHECK(run(ExperimentKind::branch, "[coefficients]\na11 = \"1\"\n", dir).exit_code == ExitCode::config_error);
    // bad sweep values
    CHECK(run(ExperimentKind::sweep, "[sweep]\nlambda = [1.0]\nh = [0.0]\n", dir).exit_code ==
          ExitCode::config_error);
    CHECK(run(ExperimentKind::sweep, "[sweep]\nlambda = [1.0]\n", dir).exit_code == ExitCode::config_error);
    CHECK(run(ExperimentKind::sweep, "[sweep]\nlambda = [1.0]\nh = [0.1]\n", dir, 0).exit_code ==
          ExitCode::config_error);
    fs::remove_all(dir);
  }

  TEST_CASE("sweep grid, ordering and failed cells") {
    const auto dir = scratch("sweep");
    const auto m = run(ExperimentKind::sweep, kSweep, dir);
    CHECK(m.exit_code == ExitCode::ok);
    CHECK(m.failed_cells.empty());
    const auto rows = lines(slurp(dir / "sweep.csv"));
    REQUIRE(rows.size() == 10);
    CHECK(rows[0] == "lambda,h,eps_size,nodes,status,sup_norm,mu1,residual,iterations,note");
    CHECK(rows[1].rfind("0.5,0.01,0,101,Converged,", 0) == 0);
    CHECK(rows[3].rfind("0.5,0.040000000000000001,0,26,Converged,", 0) == 0);
    CHECK(rows[9].rfind("1.5,0.040000000000000001,", 0) == 0);
    CHECK(m.files == std::vector<std::string>{"sweep.csv"});

    // past lambda* = 2 the cells diverge and are reported, not fatal
    std::string diverging = kSweep;
    diverging.replace(diverging.find("[1.5, 0.5, 1.0]"), 15, "[2.5, 0.5]");
    const auto d = run(ExperimentKind::sweep, diverging, dir);
    CHECK(d.exit_code == ExitCode::ok);
    CHECK(d.failed_cells.size() == 3);
    const auto drows = lines(slurp(dir / "sweep.csv"));
    REQUIRE(drows.size() == 7);
    CHECK(drows[4].find(",Diverged,nan,nan,nan,") != std::string::npos);

    // more failed cells than allowed fails the run
    diverging.replace(diverging.find("max_failed_cells = 3"), 20, "max_failed_cells = 2");
    const auto f = run(ExperimentKind::sweep, diverging, dir);
    CHECK(f.exit_code == ExitCode::check_failed);
    CHECK(f.failed_checks.size() == 1);
    fs::remove_all(dir);
  }

  TEST_CASE("reruns and thread counts give identical bytes") {
    const auto a = scratch("det_a"), b = scratch("det_b"), c = scratch("det_c");
    run(ExperimentKind::sweep, kSweep, a);
    run(ExperimentKind::sweep, kSweep, b);
    run(ExperimentKind::sweep, kSweep, c, 3);
    CHECK(slurp(a / "sweep.csv") == slurp(b / "sweep.csv"));
    CHECK(slurp(a / "sweep.csv") == slurp(c / "sweep.csv"));

    ::setenv("GELFAND_LAB_THREADS", "2", 1);
    const auto m = run(ExperimentKind::sweep, kSweep, c);
    ::unsetenv("GELFAND_LAB_THREADS");
    CHECK(m.threads == 2);
    CHECK(slurp(a / "sweep.csv") == slurp(c / "sweep.csv"));
    CHECK(run(ExperimentKind::sweep, kSweep, c, 4).threads == 4);
    for (const auto& d : {a, b, c}) fs::remove_all(d);
  }

  TEST_CASE("branch run recovers lambda* on the disk") {
    const auto dir = scratch("branch");
    const std::string cfg = R"(
[geometry]
type = "radial_ball"
nodes = 401
[continuation]
sup_max = 8.0
[checks]
lambda_star = 2.0
max_folds = 1
)";
    const auto m = run(ExperimentKind::branch, cfg, dir);
    CHECK(m.exit_code == ExitCode::ok);
    CHECK(m.files == std::vector<std::string>{"branch.csv", "lambda_star.json"});
    CHECK(slurp(dir / "lambda_star.json").find("\"folds\": 1") != std::string::npos);
    const auto manifest = slurp(dir / "manifest.json");
    CHECK(manifest.find("\"artifact_version\"") != std::string::npos);
    CHECK(manifest.find("\"config_hash\": \"" + m.config_hash + "\"") != std::string::npos);

    // an expectation that does not hold is a failed check, exit code 1
    std::string wrong = cfg;
    wrong.replace(wrong.find("lambda_star = 2.0"), 17, "lambda_star = 3.0");
    const auto w = run(ExperimentKind::branch, wrong, dir);
    CHECK(w.exit_code == ExitCode::check_failed);
    CHECK(w.failed_checks.size() == 1);
    fs::remove_all(dir);
  }

  TEST_CASE("command line") {
    const auto dir = scratch("cli");
    fs::create_directories(dir);
    {
      std::ofstream(dir / "bad.toml") << "[run]\nkind = \"sweep\"\n[sweep]\nlambda = [1.0]\nh = [\"x\"]\n";
      std::ofstream(dir / "ok.toml") << "[sweep]\nlambda = [1.0]\nh = [0.1]\n";
    }
    auto cli = [](std::vector<std::string> args) {
      std::vector<char*> argv;
      for (auto& a : args) argv.push_back(a.data());
      return run_cli(static_cast<int>(argv.size()), argv.data());
    };
    const std::string out = (dir / "out").string();
    CHECK(cli({"gelfand_lab", "sweep", "--config", (dir / "ok.toml").string(), "--out", out}) == 0);
    CHECK(fs::exists(dir / "out" / "sweep.csv"));
    CHECK(cli({"gelfand_lab", "sweep", "--config", (dir / "bad.toml").string(), "--out", out}) == 2);
    CHECK(cli({"gelfand_lab", "sweep", "--config", (dir / "missing.toml").string()}) == 2);
    CHECK(cli({"gelfand_lab", "sweep"}) == 2);
    CHECK(cli({"gelfand_lab", "frobnicate", "--config", "x"}) == 2);
    CHECK(cli({"gelfand_lab", "sweep", "--config", (dir / "ok.toml").string(), "--threads", "two"}) == 2);
    fs::remove_all(dir);
  }
}
