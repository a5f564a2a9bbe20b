#include <charconv>
#include <cstdlib>
#include <fstream>

#include "cli.hpp"
#include "commlim/error.hpp"

namespace commlim::cli {

namespace {

std::string join_path(const std::string& base, const std::string& key) { return base.empty() ? key : base + "." + key; }

bool is_string(const nlohmann::json& j) { return j.is_string(); }
bool is_integer(const nlohmann::json& j) { return j.is_number_integer(); }
bool is_unsigned(const nlohmann::json& j) { return j.is_number_unsigned() || (j.is_number_integer() && j.get<long long>() >= 0); }
bool is_number(const nlohmann::json& j) { return j.is_number(); }
bool is_bool(const nlohmann::json& j) { return j.is_boolean(); }
bool is_array(const nlohmann::json& j) { return j.is_array(); }
bool is_object(const nlohmann::json& j) { return j.is_object(); }

}  // namespace

ConfigError::ConfigError(std::string path, const std::string& message)
    : std::runtime_error(path.empty() ? message : "'" + path + "': " + message), path_(std::move(path)) {}

Fields::Fields(const nlohmann::json& object, std::string path) : object_(&object), path_(std::move(path)) {
  if (!object.is_object()) throw ConfigError(path_, "expected an object");
}

bool Fields::has(const std::string& key) const { return object_->contains(key); }

std::string Fields::path_of(const std::string& key) const { return join_path(path_, key); }

const nlohmann::json& Fields::raw(const std::string& key) {
  used_.insert(key);
  if (!has(key)) throw ConfigError(path_of(key), "required key is missing");
  return object_->at(key);
}

const nlohmann::json& Fields::at(const std::string& key, const char* expected, bool (*ok)(const nlohmann::json&)) {
  const auto& v = raw(key);
  if (!ok(v)) throw ConfigError(path_of(key), std::string("expected ") + expected);
  return v;
}

std::string Fields::text(const std::string& key, std::optional<std::string> fallback) {
  used_.insert(key);
  if (!has(key) && fallback) return *fallback;
  return at(key, "a string", is_string).get<std::string>();
}

std::string Fields::choice(const std::string& key, const std::vector<std::string>& allowed,
                           std::optional<std::string> fallback) {
  const auto v = text(key, fallback);
  for (const auto& a : allowed) {
    if (a == v) return v;
  }
  std::string list;
  for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
  throw ConfigError(path_of(key), "'" + v + "' is not one of: " + list);
}

long long Fields::integer(const std::string& key, long long min, std::optional<long long> fallback) {
  used_.insert(key);
  if (!has(key) && fallback) return *fallback;
  const auto v = at(key, "an integer", is_integer).get<long long>();
  if (v < min) throw ConfigError(path_of(key), "must be >= " + std::to_string(min) + ", got " + std::to_string(v));
  return v;
}

std::uint64_t Fields::unsigned_integer(const std::string& key, std::optional<std::uint64_t> fallback) {
  used_.insert(key);
  if (!has(key) && fallback) return *fallback;
  return at(key, "a nonnegative integer", is_unsigned).get<std::uint64_t>();
}

double Fields::number(const std::string& key, std::optional<double> fallback) {
  used_.insert(key);
  if (!has(key) && fallback) return *fallback;
  return at(key, "a number", is_number).get<double>();
}

double Fields::positive(const std::string& key, std::optional<double> fallback) {
  const double v = number(key, fallback);
  if (!(v > 0.0)) throw ConfigError(path_of(key), "must be positive");
  return v;
}

bool Fields::flag(const std::string& key, bool fallback) {
  used_.insert(key);
  if (!has(key)) return fallback;
  return at(key, "a boolean", is_bool).get<bool>();
}

std::vector<double> Fields::numbers(const std::string& key, std::optional<std::vector<double>> fallback) {
  used_.insert(key);
  if (!has(key) && fallback) return *fallback;
  const auto& arr = at(key, "an array of numbers", is_array);
  std::vector<double> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number()) throw ConfigError(path_of(key) + "[" + std::to_string(i) + "]", "expected a number");
    out.push_back(arr[i].get<double>());
  }
  return out;
}

std::vector<int> Fields::integers(const std::string& key, int min, std::optional<std::vector<int>> fallback) {
  used_.insert(key);
  if (!has(key) && fallback) return *fallback;
  const auto& arr = at(key, "an array of integers", is_array);
  std::vector<int> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const auto p = path_of(key) + "[" + std::to_string(i) + "]";
    if (!arr[i].is_number_integer()) throw ConfigError(p, "expected an integer");
    const auto v = arr[i].get<long long>();
    if (v < min || v > 1000000000LL) throw ConfigError(p, "out of range");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

Fields Fields::object(const std::string& key) { return Fields(at(key, "an object", is_object), path_of(key)); }

std::vector<Fields> Fields::objects(const std::string& key) {
  const auto& arr = at(key, "an array of objects", is_array);
  std::vector<Fields> out;
  for (std::size_t i = 0; i < arr.size(); ++i) out.emplace_back(arr[i], path_of(key) + "[" + std::to_string(i) + "]");
  return out;
}

void Fields::finish() const {
  for (const auto& [key, value] : object_->items()) {
    if (!used_.contains(key)) throw ConfigError(path_of(key), "unknown key");
  }
}

nlohmann::json load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("", "'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void apply_override(nlohmann::json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("", "override '" + assignment + "' is not key=value");
  const auto key = assignment.substr(0, eq);
  const auto text = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  nlohmann::json* node = &config;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const auto part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError(key, "empty path component");
    if (!node->is_object()) throw ConfigError(key.substr(0, start ? start - 1 : 0), "cannot descend into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = nlohmann::json::object();
    start = dot + 1;
  }
}

std::optional<int> resolve_threads(std::optional<int> flag) {
  if (flag) {
    if (*flag < 0) throw ConfigError("threads", "must be >= 0");
    return *flag;
  }
  const char* env = std::getenv("COMMLIM_THREADS");
  if (env == nullptr || *env == '\0') return std::nullopt;
  int v = 0;
  const char* end = env + std::char_traits<char>::length(env);
  const auto [ptr, ec] = std::from_chars(env, end, v);
  if (ec != std::errc() || ptr != end || v < 0) throw ConfigError("COMMLIM_THREADS", "must be a nonnegative integer");
  return v;
}

ModelSpec parse_model(Fields f) {
  ModelSpec spec;
  try {
    spec.family = family_from_string(
        f.choice("family", {"gaussian_location", "product_bernoulli", "multinomial", "sparse_gaussian"}));
  } catch (const Error& e) {
    throw ConfigError(f.path_of("family"), e.what());
  }
  spec.d = static_cast<int>(f.integer("d", 1));
  spec.sigma = f.positive("sigma", 1.0);
  spec.s = static_cast<int>(f.integer("s", 0, 0));
  spec.theta0 = f.numbers("theta0", std::vector<double>{});
  f.finish();
  try {
    Model check(spec);
  } catch (const Error& e) {
    throw ConfigError(f.path(), e.what());
  }
  return spec;
}

GridSpec parse_grid(Fields f) {
  GridSpec grid;
  const auto kind = f.choice("kind", {"center", "cube", "simplex_uniform", "points"}, "center");
  if (kind == "cube") grid.kind = GridSpec::Kind::cube;
  else if (kind == "simplex_uniform") grid.kind = GridSpec::Kind::simplex_uniform;
  else if (kind == "points") grid.kind = GridSpec::Kind::points;
  grid.delta = f.number("delta", 0.0);
  grid.corners = static_cast<int>(f.integer("corners", 0, 2));
  if (f.has("points")) {
    const auto& arr = f.raw("points");
    if (!arr.is_array()) throw ConfigError(f.path_of("points"), "expected an array of arrays");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      Fields holder(nlohmann::json{{"p", arr[i]}}, f.path_of("points") + "[" + std::to_string(i) + "]");
      grid.points.push_back(holder.numbers("p"));
    }
  }
  f.finish();
  return grid;
}

ExperimentConfig parse_experiment(Fields& f, const std::string& experiment_id, std::uint64_t seed, int threads) {
  ExperimentConfig cfg;
  cfg.experiment_id = experiment_id;
  cfg.seed = seed;
  cfg.threads = threads;
  cfg.model = parse_model(f.object("model"));
  cfg.protocol = f.choice("protocol", {"sharded_bits", "probit_grouping", "simulate_and_infer"});
  cfg.n = static_cast<int>(f.integer("n", 1));
  cfg.k = static_cast<int>(f.integer("k", 1, 1));
  if (cfg.k > 24) throw ConfigError(f.path_of("k"), "must be <= 24");
  if (f.has("grid")) cfg.grid = parse_grid(f.object("grid"));
  cfg.replications = static_cast<int>(f.integer("replications", 2));
  cfg.clamp = f.positive("clamp", 1.0);
  cfg.exclude_degenerate = f.flag("exclude_degenerate", false);
  return cfg;
}

}  // namespace commlim::cli
