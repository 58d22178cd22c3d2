#pragma once

// Plain-file table helpers shared by the pipeline stages.

#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "engage/error.hpp"
#include "engage/ingest.hpp"
#include "engage/metrics.hpp"
#include "json.hpp"

namespace engage::io {

/// Shortest representation that round-trips exactly.
inline std::string format_double(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline std::optional<double> parse_double(const std::string& s) {
  double x = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
  return x;
}

/// First line of every table: "# engage <stage> <config as compact JSON>".
inline void write_metadata(std::ostream& os, const std::string& stage, const nlohmann::ordered_json& config) {
  os << "# engage " << stage << ' ' << config.dump() << '\n';
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot open output file " + path);
  return os;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open input file " + path);
  return is;
}

inline void write_json_file(const std::string& path, const nlohmann::ordered_json& j) {
  auto os = open_output(path);
  os << j.dump(2) << '\n';
}

/// A row of the per-volunteer metrics table.
struct MetricsRow {
  EngagementVector metrics;
  std::size_t active_days = 0;
  double devoted_hours = 0.0;
};

inline void write_metrics_table(std::ostream& os, const std::vector<MetricsRow>& rows) {
  os << "volunteer_id,a,d,r,v,active_days,devoted_hours\n";
  for (const auto& row : rows) {
    const auto& m = row.metrics;
    os << m.volunteer_id << ',' << format_double(m.a) << ',' << format_double(m.d) << ',' << format_double(m.r) << ','
       << format_double(m.v) << ',' << row.active_days << ',' << format_double(row.devoted_hours) << '\n';
  }
}

struct MetricsTable {
  std::vector<MetricsRow> rows;
  bool has_devoted_hours = false;
};

/// Reads a metrics table. Columns volunteer_id, a, d, r, v are required;
/// active_days and devoted_hours are optional. '#' lines are skipped.
inline MetricsTable read_metrics_table(std::istream& is) {
  std::string line;
  std::size_t line_no = 0;
  std::optional<std::map<std::string, std::size_t>> columns;
  MetricsTable table;
  auto field = [](const std::vector<std::string>& f, std::size_t i) { return detail::trim(f[i]); };
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto trimmed = detail::trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    const char delim = line.find('\t') != std::string::npos ? '\t' : ',';
    auto fields = detail::split_row(line, delim);
    if (!columns) {
      columns.emplace();
      for (std::size_t i = 0; i < fields.size(); ++i) (*columns)[detail::trim(fields[i])] = i;
      std::string missing;
      for (const char* c : {"volunteer_id", "a", "d", "r", "v"}) {
        if (!columns->count(c)) missing += std::string(missing.empty() ? "" : ", ") + c;
      }
      if (!missing.empty()) throw FormatError("metrics table: missing columns " + missing);
      table.has_devoted_hours = columns->count("devoted_hours") > 0;
      continue;
    }
    auto need = [&](const char* name) -> double {
      const std::size_t idx = columns->at(name);
      if (idx >= fields.size()) {
        throw DataError("metrics table line " + std::to_string(line_no) + ": missing field " + name);
      }
      const auto x = parse_double(field(fields, idx));
      if (!x || !std::isfinite(*x)) {
        throw DataError("metrics table line " + std::to_string(line_no) + ": non-numeric " + name);
      }
      return *x;
    };
    MetricsRow row;
    row.metrics.volunteer_id = field(fields, columns->at("volunteer_id"));
    if (row.metrics.volunteer_id.empty()) {
      throw DataError("metrics table line " + std::to_string(line_no) + ": empty volunteer_id");
    }
    row.metrics.a = need("a");
    row.metrics.d = need("d");
    row.metrics.r = need("r");
    row.metrics.v = need("v");
    if (columns->count("active_days")) row.active_days = static_cast<std::size_t>(need("active_days"));
    if (table.has_devoted_hours) row.devoted_hours = need("devoted_hours");
    table.rows.push_back(std::move(row));
  }
  if (!columns) throw FormatError("metrics table: missing header");
  return table;
}

}  // namespace engage::io
