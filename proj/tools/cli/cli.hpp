#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "commlim/risk.hpp"

namespace commlim::cli {

inline constexpr const char* kToolVersion = "0.3.0";

enum ExitCode : int { exit_ok = 0, exit_check_failed = 1, exit_usage = 2, exit_runtime = 3 };

// Schema violation; `path` is the dotted key path of the offending entry.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& message);
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

// Typed reader over one JSON object. Every key read is recorded so that
// finish() can reject the rest as unknown.
class Fields {
 public:
  Fields(const nlohmann::json& object, std::string path);

  bool has(const std::string& key) const;
  const nlohmann::json& raw(const std::string& key);
  std::string path_of(const std::string& key) const;
  const std::string& path() const { return path_; }

  std::string text(const std::string& key, std::optional<std::string> fallback = std::nullopt);
  std::string choice(const std::string& key, const std::vector<std::string>& allowed,
                     std::optional<std::string> fallback = std::nullopt);
  long long integer(const std::string& key, long long min, std::optional<long long> fallback = std::nullopt);
  std::uint64_t unsigned_integer(const std::string& key, std::optional<std::uint64_t> fallback = std::nullopt);
  double number(const std::string& key, std::optional<double> fallback = std::nullopt);
  double positive(const std::string& key, std::optional<double> fallback = std::nullopt);
  bool flag(const std::string& key, bool fallback);
  std::vector<double> numbers(const std::string& key, std::optional<std::vector<double>> fallback = std::nullopt);
  std::vector<int> integers(const std::string& key, int min, std::optional<std::vector<int>> fallback = std::nullopt);
  Fields object(const std::string& key);
  // Elements of an array of objects, each with its own path.
  std::vector<Fields> objects(const std::string& key);

  void finish() const;

 private:
  const nlohmann::json& at(const std::string& key, const char* expected, bool (*ok)(const nlohmann::json&));

  const nlohmann::json* object_;
  std::string path_;
  std::set<std::string> used_;
};

nlohmann::json load_config(const std::filesystem::path& path);
// key.path=value; value is parsed as JSON when it parses, else taken as a string.
void apply_override(nlohmann::json& config, const std::string& assignment);
// --threads, else COMMLIM_THREADS, else unset (the config's threads key,
// then all cores).
std::optional<int> resolve_threads(std::optional<int> flag);

ModelSpec parse_model(Fields f);
GridSpec parse_grid(Fields f);
// Experiment keys shared by the risk and scaling modes.
ExperimentConfig parse_experiment(Fields& f, const std::string& experiment_id, std::uint64_t seed, int threads);

struct CsvArtifact {
  std::string name;
  std::string body;
};

struct RunResult {
  std::string mode;
  nlohmann::json report;
  std::vector<CsvArtifact> csv;
  bool passed = true;
  std::vector<std::string> failures;
};

struct RunOptions {
  std::optional<int> threads;
  // Relative file references in the config resolve against this.
  std::filesystem::path base_dir = ".";
  // Parse and validate only; the result carries an empty report.
  bool dry_run = false;
};

// Validates `config` (ConfigError on schema violations) and executes it.
RunResult run_config(const nlohmann::json& config, const RunOptions& options);

struct Manifest {
  std::string config_digest;
  std::string tool_version = kToolVersion;
  std::uint64_t seed = 0;
  std::string started_at;
  std::string finished_at;
  std::vector<std::string> outputs;
  std::string status;
  bool partial = false;
  std::string error;
};

// SHA-256 of the canonical (key-sorted, compact) serialization.
std::string config_digest(const nlohmann::json& config);
std::string utc_timestamp(std::chrono::system_clock::time_point t);
nlohmann::json to_json(const Manifest& m);

// Writes report.json, the CSV artifacts and manifest.json into `dir`.
void write_artifacts(const std::filesystem::path& dir, const RunResult& result, Manifest& manifest);

// Long-format rows (x, y, series, se) from report.json files written by
// this tool. Throws ConfigError when the reports come from incompatible modes.
void emit_plotdata(const std::vector<std::filesystem::path>& reports, std::ostream& out);

int main_entry(int argc, char** argv);

}  // namespace commlim::cli
