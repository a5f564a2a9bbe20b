#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "cli.hpp"
#include "commlim/error.hpp"

namespace commlim::cli {

namespace {

struct Output {
  std::optional<std::filesystem::path> dir;
  // Artifact printed to stdout when no directory is given; empty means report.json.
  std::string primary;
};

int execute(const nlohmann::json& config, const RunOptions& options, const Output& output) {
  Manifest manifest;
  manifest.config_digest = config_digest(config);
  if (config.is_object() && config.contains("seed") && config["seed"].is_number_unsigned()) {
    manifest.seed = config["seed"].get<std::uint64_t>();
  }
  manifest.started_at = utc_timestamp(std::chrono::system_clock::now());
  RunResult result;
  try {
    result = run_config(config, options);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    manifest.finished_at = utc_timestamp(std::chrono::system_clock::now());
    manifest.status = "error";
    manifest.partial = true;
    manifest.error = e.what();
    if (output.dir) {
      std::filesystem::create_directories(*output.dir);
      std::ofstream(*output.dir / "manifest.json") << to_json(manifest).dump(2) << "\n";
    }
    std::cerr << "error: " << e.what() << "\n";
    return exit_runtime;
  }
  manifest.finished_at = utc_timestamp(std::chrono::system_clock::now());
  manifest.status = result.passed ? "passed" : "failed";
  if (output.dir) {
    write_artifacts(*output.dir, result, manifest);
  } else {
    bool printed = false;
    for (const auto& csv : result.csv) {
      if (csv.name == output.primary) {
        std::cout << csv.body;
        printed = true;
      }
    }
    if (!printed) std::cout << result.report.dump(2) << "\n";
  }
  for (const auto& f : result.failures) std::cerr << "FAIL: " << f << "\n";
  return result.passed ? exit_ok : exit_check_failed;
}

nlohmann::json load_with_overrides(const std::string& path, const std::vector<std::string>& sets) {
  auto config = load_config(path);
  for (const auto& s : sets) apply_override(config, s);
  return config;
}

std::filesystem::path config_dir(const std::string& path) {
  auto dir = std::filesystem::path(path).parent_path();
  return dir.empty() ? std::filesystem::path(".") : dir;
}

}  // namespace

int main_entry(int argc, char** argv) {
  CLI::App app{"Distributed estimation under communication constraints: simulators, oracles and bound checks"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kToolVersion);

  std::optional<int> threads_flag;
  app.add_option("--threads", threads_flag, "Worker threads (0 = all cores); falls back to COMMLIM_THREADS");

  std::string config_path;
  std::vector<std::string> sets;
  std::string out_dir;

  auto* run = app.add_subcommand("run", "Run a JSON experiment config and write report, CSV and manifest");
  run->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  run->add_option("--set", sets, "Override a config key: key.path=value");
  run->add_option("--out", out_dir, "Output directory (default commlim-out/<experiment_id>)");
  bool dry_run = false;
  run->add_flag("--dry-run", dry_run, "Validate the config and exit");

  auto* scaling = app.add_subcommand("scaling", "Run a scaling sweep config and fit exponents");
  scaling->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  scaling->add_option("--set", sets, "Override a config key: key.path=value");
  scaling->add_option("--out", out_dir, "Output directory; prints scaling.csv when omitted");

  std::string tree_file;
  std::string family = "product_bernoulli";
  int dim = 1;
  std::vector<double> theta0;
  double delta = 0.1;
  bool terms = false;
  long long instances = 0;
  std::uint64_t seed = 0;
  auto* oracle = app.add_subcommand("oracle", "Exact I <= Dbar <= UB for a protocol tree or random instances");
  oracle->add_option("--tree", tree_file, "Protocol tree JSON")->check(CLI::ExistingFile);
  oracle->add_option("--family", family, "product_bernoulli or multinomial");
  oracle->add_option("--d", dim, "Dimension");
  oracle->add_option("--theta0", theta0, "Reference point");
  oracle->add_option("--delta", delta, "Cube radius");
  oracle->add_option("--instances", instances, "Random (tree, cube) instances");
  oracle->add_option("--seed", seed, "Seed for random instances");
  oracle->add_flag("--terms", terms, "Print per-(sensor, transcript) UB terms as CSV");
  oracle->add_option("--out", out_dir, "Output directory");

  std::vector<int> scan_dims;
  std::vector<int> max_norm_dims;
  std::vector<double> halfspaces;
  int cap_d = 0;
  auto* geometry = app.add_subcommand("verify-geometry", "Conditional-mean bounds; prints the slack CSV");
  geometry->add_option("--scan", scan_dims, "Exhaustive hypercube scan dimensions (<= 4)");
  geometry->add_option("--max-norm", max_norm_dims, "Exhaustive max norm at |A| = 2^(d-1)");
  geometry->add_option("--halfspaces", halfspaces, "Gaussian halfspace grid: from to points")->expected(3);
  geometry->add_option("--cap-sweep", cap_d, "Hamming-ball radius sweep dimension");
  geometry->add_option("--out", out_dir, "Output directory");

  long long trees = 1000;
  auto* identities = app.add_subcommand("verify-protocol-identities", "Cut-paste identities on random trees");
  identities->add_option("--trees", trees, "Number of random trees");
  identities->add_option("--seed", seed, "Seed");
  identities->add_option("--out", out_dir, "Output directory");

  std::string theorem;
  long long qn = 1, qd = 1, qk = 1, qs = 0;
  std::optional<double> i0, sigma2, radius;
  auto* bounds = app.add_subcommand("bounds", "Evaluate a constant-free lower-bound rate");
  bounds->add_option("--theorem", theorem, "thm1_general, thm2_subgaussian, cor3_multinomial, cor4_gaussian, "
                                           "prop5_bernoulli_cube, prop5_bernoulli_simplex, thm6_sparse")
      ->required();
  bounds->add_option("--n", qn, "Sensors")->required();
  bounds->add_option("--d", qd, "Dimension")->required();
  bounds->add_option("--k", qk, "Bits per sensor")->required();
  bounds->add_option("--s", qs, "Sparsity");
  bounds->add_option("--i0", i0, "Fisher information");
  bounds->add_option("--sigma2", sigma2, "Score psi2 parameter or noise variance");
  bounds->add_option("--R", radius, "Score diameter");

  std::vector<std::string> reports;
  std::string plot_out;
  auto* plot = app.add_subcommand("emit-plotdata", "Long-format CSV (x, y, series, se) from report.json files");
  plot->add_option("reports", reports, "report.json files");
  plot->add_option("-o,--output", plot_out, "Output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_ok : exit_usage;
  }

  try {
    RunOptions options;
    options.threads = resolve_threads(threads_flag);
    Output output;
    if (!out_dir.empty()) output.dir = out_dir;

    if (run->parsed() || scaling->parsed()) {
      auto config = load_with_overrides(config_path, sets);
      if (scaling->parsed()) {
        if (!config.is_object()) throw ConfigError("", "expected an object");
        if (config.contains("mode") && config["mode"] != "scaling") throw ConfigError("mode", "scaling needs mode 'scaling'");
        config["mode"] = "scaling";
        output.primary = "scaling.csv";
      } else if (!output.dir) {
        const auto id = config.is_object() && config.contains("experiment_id") && config["experiment_id"].is_string()
                            ? config["experiment_id"].get<std::string>()
                            : std::filesystem::path(config_path).stem().string();
        output.dir = std::filesystem::path("commlim-out") / id;
      }
      options.base_dir = config_dir(config_path);
      if (dry_run) {
        options.dry_run = true;
        run_config(config, options);
        std::cout << "config ok: " << config_path << "\n";
        return exit_ok;
      }
      return execute(config, options, output);
    }
    if (oracle->parsed()) {
      nlohmann::json config{{"mode", "oracle"}, {"seed", seed}, {"instances", instances}, {"terms", terms}};
      if (!tree_file.empty()) {
        nlohmann::json model{{"family", family}, {"d", dim}};
        if (!theta0.empty()) model["theta0"] = theta0;
        config["cases"] = nlohmann::json::array({{{"tree_file", std::filesystem::absolute(tree_file).string()},
                                                   {"model", model},
                                                   {"delta", delta}}});
      }
      if (terms) output.primary = "terms.csv";
      return execute(config, options, output);
    }
    if (geometry->parsed()) {
      nlohmann::json config{{"mode", "verify-geometry"}};
      if (!scan_dims.empty()) config["hypercube_scan"] = {{"dims", scan_dims}};
      if (!max_norm_dims.empty()) config["max_norm"] = {{"dims", max_norm_dims}, {"expect", 1.0}};
      if (!halfspaces.empty()) {
        if (halfspaces[2] != std::floor(halfspaces[2])) throw ConfigError("halfspaces", "points must be an integer");
        config["halfspaces"] = {{"from", halfspaces[0]}, {"to", halfspaces[1]}, {"points", static_cast<long long>(halfspaces[2])}};
      }
      if (cap_d > 0) config["cap_sweep"] = {{"d", cap_d}};
      output.primary = "slack.csv";
      return execute(config, options, output);
    }
    if (identities->parsed()) {
      nlohmann::json config{{"mode", "verify-protocol-identities"}, {"trees", trees}, {"seed", seed}};
      return execute(config, options, output);
    }
    if (bounds->parsed()) {
      nlohmann::json q{{"theorem", theorem}, {"n", qn}, {"d", qd}, {"k", qk}, {"s", qs}};
      if (i0) q["i0"] = *i0;
      if (sigma2) q["sigma2"] = *sigma2;
      if (radius) q["R"] = *radius;
      nlohmann::json config{{"mode", "bounds"}, {"queries", nlohmann::json::array({q})}};
      return execute(config, options, output);
    }
    std::vector<std::filesystem::path> paths(reports.begin(), reports.end());
    if (plot_out.empty()) {
      emit_plotdata(paths, std::cout);
    } else {
      std::ofstream out(plot_out);
      emit_plotdata(paths, out);
      if (!out) throw std::runtime_error("cannot write '" + plot_out + "'");
    }
    return exit_ok;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return exit_usage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_runtime;
  }
}

}  // namespace commlim::cli
