#include <array>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "cli.hpp"

namespace commlim::cli {

std::string config_digest(const nlohmann::json& config) {
  const std::string text = config.dump();
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 digest failed");
  }
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return out.str();
}

std::string utc_timestamp(std::chrono::system_clock::time_point t) {
  const std::time_t secs = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

nlohmann::json to_json(const Manifest& m) {
  nlohmann::json j{{"config_digest", m.config_digest},
                   {"tool_version", m.tool_version},
                   {"seed", m.seed},
                   {"started_at", m.started_at},
                   {"finished_at", m.finished_at},
                   {"outputs", m.outputs},
                   {"status", m.status},
                   {"partial", m.partial}};
  if (!m.error.empty()) j["error"] = m.error;
  return j;
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  out << body;
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
}

}  // namespace

void write_artifacts(const std::filesystem::path& dir, const RunResult& result, Manifest& manifest) {
  std::filesystem::create_directories(dir);
  auto report = result.report;
  report["manifest"] = "manifest.json";
  report["config_digest"] = manifest.config_digest;
  write_file(dir / "report.json", report.dump(2) + "\n");
  manifest.outputs.push_back((dir / "report.json").string());
  for (const auto& csv : result.csv) {
    write_file(dir / csv.name, csv.body);
    manifest.outputs.push_back((dir / csv.name).string());
  }
  write_file(dir / "manifest.json", to_json(manifest).dump(2) + "\n");
}

}  // namespace commlim::cli
