#pragma once

// Experiment reports: one row per query or trial plus aggregates, written as
// CSV or JSON. Rows carry everything needed to replay them.

#include <map>
#include <ostream>

#include "json.hpp"
#include "oracle.hpp"

namespace pmatch {

inline constexpr const char* kReportSchema = "pmatch-report/1";

struct Report {
  std::string experiment;
  nlohmann::ordered_json params = nlohmann::ordered_json::object();
  std::vector<std::string> columns;
  std::vector<nlohmann::ordered_json> rows;
  nlohmann::ordered_json aggregates = nlohmann::ordered_json::object();
  nlohmann::ordered_json checks = nlohmann::ordered_json::object();

  void add_row(nlohmann::ordered_json row) {
    for (auto it = row.begin(); it != row.end(); ++it)
      if (std::find(columns.begin(), columns.end(), it.key()) == columns.end()) columns.push_back(it.key());
    rows.push_back(std::move(row));
  }

  std::vector<double> column(const std::string& name) const {
    std::vector<double> out;
    for (const auto& r : rows)
      if (r.contains(name) && r[name].is_number()) out.push_back(r[name].get<double>());
    return out;
  }

  // Mean and standard error of a numeric column, stored under aggregates.
  void aggregate(const std::string& name) {
    const auto xs = column(name);
    double m = 0, v = 0;
    for (double x : xs) m += x;
    if (!xs.empty()) m /= static_cast<double>(xs.size());
    for (double x : xs) v += (x - m) * (x - m);
    const double se = xs.size() > 1 ? std::sqrt(v / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size())) : 0.0;
    aggregates[name] = {{"mean", m}, {"stderr", se}, {"count", xs.size()}};
  }

  bool passed() const {
    for (auto it = checks.begin(); it != checks.end(); ++it)
      if (!it.value().value("pass", false)) return false;
    return true;
  }

  nlohmann::ordered_json to_json(bool with_rows = true) const {
    nlohmann::ordered_json j;
    j["schema"] = kReportSchema;
    j["experiment"] = experiment;
    j["params"] = params;
    j["aggregates"] = aggregates;
    j["checks"] = checks;
    if (with_rows) j["rows"] = rows;
    return j;
  }

  void write_csv(std::ostream& os) const {
    os << "# schema=" << kReportSchema << " experiment=" << experiment << " params=" << params.dump() << '\n';
    for (std::size_t c = 0; c < columns.size(); ++c) os << (c ? "," : "") << columns[c];
    os << '\n';
    for (const auto& r : rows) {
      for (std::size_t c = 0; c < columns.size(); ++c) {
        if (c) os << ',';
        if (!r.contains(columns[c])) continue;
        const auto& v = r[columns[c]];
        if (v.is_string()) os << v.get<std::string>();
        else os << v.dump();
      }
      os << '\n';
    }
  }
};

// Least-squares slope of log y against log x.
inline double loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  require(xs.size() == ys.size() && xs.size() >= 2, "need at least two points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    require(xs[i] > 0 && ys[i] > 0, "log-log fit needs positive values");
    const double lx = std::log(xs[i]), ly = std::log(ys[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace pmatch
