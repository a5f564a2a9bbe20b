#include <charconv>
#include <fstream>
#include <ostream>
#include <sstream>

#include "cli.hpp"

namespace commlim::cli {

namespace {

enum class PlotKind { risk_curve, slack_table };

// Shortest text that reads back to the same double.
std::string num(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

void emit_plotdata(const std::vector<std::filesystem::path>& reports, std::ostream& out) {
  std::vector<nlohmann::json> docs;
  std::optional<PlotKind> kind;
  for (const auto& path : reports) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string(), "cannot open report");
    auto doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.is_object() || !doc.contains("mode")) {
      throw ConfigError(path.string(), "not a report written by this tool");
    }
    const auto mode = doc["mode"].get<std::string>();
    PlotKind k;
    if (mode == "risk" || mode == "scaling") k = PlotKind::risk_curve;
    else if (mode == "verify-geometry" && doc.contains("halfspaces")) k = PlotKind::slack_table;
    else throw ConfigError(path.string(), "mode '" + mode + "' has no plot data");
    if (kind && *kind != k) throw ConfigError(path.string(), "cannot mix risk curves and slack tables");
    kind = k;
    docs.push_back(std::move(doc));
  }

  out << "x,y,series,se\n";
  for (const auto& doc : docs) {
    const auto id = doc.value("experiment_id", std::string("experiment"));
    const auto mode = doc["mode"].get<std::string>();
    if (mode == "risk") {
      for (const auto& row : doc["per_theta"]) {
        out << doc["n"].get<int>() << ',' << num(row["risk"].get<double>()) << ',' << id << ":theta"
            << row["theta_id"].get<std::size_t>() << ',' << num(row["se"].get<double>()) << '\n';
      }
    } else if (mode == "scaling") {
      const auto series = id + ":" + doc["axis"].get<std::string>();
      for (const auto& p : doc["points"]) {
        if (!p.contains("report")) continue;
        const auto& rep = p["report"];
        out << p["value"].get<int>() << ',' << num(rep["sup_risk"].get<double>()) << ',' << series << ','
            << num(rep["sup_se"].get<double>()) << '\n';
      }
    } else {
      for (const auto& s : doc["halfspaces"]["slack"]) {
        out << num(s["P"].get<double>()) << ',' << num(s["slack"].get<double>()) << ',' << id << ':'
            << s["bound"].get<std::string>() << ",\n";
      }
    }
  }
}

}  // namespace commlim::cli
