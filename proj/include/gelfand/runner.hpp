#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gelfand {

/// Stable process exit codes.
enum class ExitCode : int { ok = 0, check_failed = 1, config_error = 2, solver_error = 3 };

enum class ExperimentKind { branch, stability, flatten, approx, verify, sweep };

std::string to_string(ExperimentKind kind);
/// Throws InvalidArgument on an unknown name.
ExperimentKind parse_kind(std::string_view name);

/// A parsed TOML experiment file. Schema: docs/config.md.
class ExperimentConfig {
 public:
  /// Throws ParseError (with line and column) on malformed text.
  static ExperimentConfig parse(std::string_view text, std::string source = "<config>");
  static ExperimentConfig load(const std::filesystem::path& path);

  const std::string& source() const noexcept;
  /// [run] kind, when given.
  std::optional<ExperimentKind> kind() const;
  /// Compact JSON with sorted keys; independent of the order of fields in the file.
  std::string canonical() const;

  struct Impl;
  const Impl& impl() const { return *impl_; }

 private:
  std::shared_ptr<const Impl> impl_;
};

struct RunOptions {
  std::filesystem::path out = "out";
  /// --threads; else GELFAND_LAB_THREADS; else [run] threads; else 1.
  std::optional<int> threads;
  /// --seed; else [run] seed; else 42.
  std::optional<std::uint64_t> seed;
};

struct RunManifest {
  std::string kind;
  /// SHA-256 (hex) of {"config": canonical config, "seed": effective seed}.
  std::string config_hash;
  std::string version;
  std::string started, finished;  // UTC, ISO 8601
  std::uint64_t seed = 42;
  int threads = 1;
  std::vector<std::string> files;  // relative to the output directory, sorted
  std::vector<std::string> failed_checks;
  std::vector<std::string> failed_cells;  // sweep only
  std::string error;
  ExitCode exit_code = ExitCode::ok;
};

/// Runs one experiment and writes its outputs plus manifest.json into options.out.
/// Data files are only written once the whole run has succeeded; every file is
/// written to a temporary name and renamed into place. Never throws for
/// configuration or solver failures: they are reported through exit_code and error.
RunManifest run_experiment(ExperimentKind kind, const ExperimentConfig& config, const RunOptions& options = {});

/// gelfand_lab command line; returns the process exit code.
int run_cli(int argc, char** argv);

std::string sha256_hex(std::string_view data);
/// RFC 4180 quoting: fields with a comma, quote, CR or LF are quoted, quotes doubled.
std::string csv_field(std::string_view text);
/// Writes `content` to `path` via a temporary file in the same directory and a rename.
void write_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace gelfand
