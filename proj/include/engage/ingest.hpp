#pragma once

// Task-execution log parsing, project windows and participant eligibility.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_set>
#include <vector>

#include "engage/error.hpp"
#include "engage/time.hpp"
#include "json.hpp"

namespace engage {

struct TaskEvent {
  std::string project_id;
  std::string task_id;
  std::string volunteer_id;
  Instant timestamp;

  friend bool operator==(const TaskEvent&, const TaskEvent&) = default;
};

/// All events of one volunteer, ordered by timestamp.
struct VolunteerEvents {
  std::string volunteer_id;
  std::vector<TaskEvent> events;
};

struct RejectedRow {
  std::size_t line = 0;
  std::string reason;
};

struct ParseReport {
  std::size_t rows = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t duplicates_dropped = 0;
  char delimiter = ',';
  std::map<std::string, std::size_t> reasons;
  std::vector<RejectedRow> rejects;  // first kMaxListedRejects only
  std::set<std::string> projects;

  static constexpr std::size_t kMaxListedRejects = 1000;
};

struct ParsedLog {
  std::vector<VolunteerEvents> volunteers;  // sorted by volunteer_id
  ParseReport report;

  std::size_t event_count() const {
    std::size_t n = 0;
    for (const auto& v : volunteers) n += v.events.size();
    return n;
  }
};

/// Delimited-table descriptor. An empty delimiter means auto-detect from the
/// header line (tab if present, comma otherwise).
struct LogFormat {
  std::optional<char> delimiter;
  double max_reject_fraction = 0.5;
};

namespace detail {

inline std::vector<std::string> split_row(std::string_view line, char delim) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"' && field.empty()) {
      quoted = true;
    } else if (c == delim) {
      out.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  out.push_back(std::move(field));
  return out;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace detail

/// Parses a task-execution log. Header columns project_id, task_id, user_id and
/// datetime may appear in any order; extra columns are ignored. Lines starting
/// with '#' before the header are metadata and skipped. Malformed rows
/// are rejected and tallied, exact duplicate rows are dropped and counted.
/// Throws FormatError on a missing header or when more than half of the data
/// rows are rejected.
inline ParsedLog parse_log(std::istream& in, const LogFormat& format = {}) {
  ParsedLog out;
  ParseReport& report = out.report;

  std::string line;
  std::size_t line_no = 0;
  std::string header;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = detail::trim(line);
    if (!t.empty() && t.front() != '#') {
      header = line;
      break;
    }
  }
  if (header.empty()) throw FormatError("missing header: input is empty");

  const char delim = format.delimiter.value_or(header.find('\t') != std::string::npos ? '\t' : ',');
  report.delimiter = delim;

  constexpr std::string_view kColumns[] = {"project_id", "task_id", "user_id", "datetime"};
  std::size_t col_index[4] = {};
  bool seen[4] = {};
  auto names = detail::split_row(header, delim);
  for (std::size_t i = 0; i < names.size(); ++i) {
    std::string name = detail::trim(names[i]);
    std::transform(name.begin(), name.end(), name.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (name == "volunteer_id") name = "user_id";
    for (std::size_t c = 0; c < 4; ++c) {
      if (name == kColumns[c] && !seen[c]) {
        seen[c] = true;
        col_index[c] = i;
      }
    }
  }
  std::string missing;
  for (std::size_t c = 0; c < 4; ++c) {
    if (!seen[c]) missing += (missing.empty() ? "" : ", ") + std::string(kColumns[c]);
  }
  if (!missing.empty()) throw FormatError("missing header columns: " + missing);

  const std::size_t needed = *std::max_element(std::begin(col_index), std::end(col_index)) + 1;
  std::map<std::string, std::vector<TaskEvent>> groups;
  std::unordered_set<std::string> seen_rows;
  std::string row_key;

  auto reject = [&](const std::string& reason) {
    ++report.rejected;
    ++report.reasons[reason];
    if (report.rejects.size() < ParseReport::kMaxListedRejects) {
      report.rejects.push_back({line_no, reason});
    }
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    ++report.rows;
    auto fields = detail::split_row(line, delim);
    if (fields.size() < needed) {
      reject("bad_field_count");
      continue;
    }
    std::string project = detail::trim(fields[col_index[0]]);
    std::string task = detail::trim(fields[col_index[1]]);
    std::string user = detail::trim(fields[col_index[2]]);
    std::string when = detail::trim(fields[col_index[3]]);
    if (project.empty() || task.empty() || user.empty() || when.empty()) {
      reject("empty_field");
      continue;
    }
    auto ts = parse_instant(when);
    if (!ts) {
      reject("bad_timestamp");
      continue;
    }
    row_key.clear();
    row_key.append(project).push_back('\x1f');
    row_key.append(task).push_back('\x1f');
    row_key.append(user).push_back('\x1f');
    row_key.append(std::to_string(to_unix(*ts)));
    if (!seen_rows.insert(row_key).second) {
      ++report.duplicates_dropped;
      continue;
    }
    ++report.accepted;
    report.projects.insert(project);
    groups[user].push_back(TaskEvent{std::move(project), std::move(task), user, *ts});
  }

  if (report.rows > 0 &&
      static_cast<double>(report.rejected) > format.max_reject_fraction * static_cast<double>(report.rows)) {
    throw FormatError("too many rejected rows: " + std::to_string(report.rejected) + " of " +
                      std::to_string(report.rows));
  }

  out.volunteers.reserve(groups.size());
  for (auto& [id, events] : groups) {
    std::sort(events.begin(), events.end(), [](const TaskEvent& l, const TaskEvent& r) {
      return std::tie(l.timestamp, l.task_id, l.project_id) <
             std::tie(r.timestamp, r.task_id, r.project_id);
    });
    out.volunteers.push_back({id, std::move(events)});
  }
  return out;
}

struct ProjectWindow {
  Date start;
  Date end;
  Date eligibility_cutoff;

  std::int64_t length_days() const { return days_between(start, end) + 1; }
};

/// Builds a window from explicit bounds: cutoff = start + floor(q * (end - start)) days.
inline ProjectWindow make_project_window(Date start, Date end, double join_quantile) {
  if (!(join_quantile > 0.0 && join_quantile <= 1.0)) {
    throw ConfigError("join quantile must lie in (0, 1]");
  }
  if (end < start) throw ConfigError("project window end precedes start");
  const auto span = days_between(start, end);
  const auto offset = static_cast<std::int64_t>(std::floor(join_quantile * static_cast<double>(span)));
  return {start, end, start + std::chrono::days{offset}};
}

/// Window spanning the observed events unless bounds are overridden.
inline ProjectWindow derive_project_window(const std::vector<VolunteerEvents>& volunteers,
                                           double join_quantile,
                                           std::optional<Date> start_override = std::nullopt,
                                           std::optional<Date> end_override = std::nullopt) {
  std::optional<Instant> first, last;
  for (const auto& v : volunteers) {
    if (v.events.empty()) continue;
    if (!first || v.events.front().timestamp < *first) first = v.events.front().timestamp;
    if (!last || v.events.back().timestamp > *last) last = v.events.back().timestamp;
  }
  if (!first && !(start_override && end_override)) {
    throw DataError("cannot derive a project window from an empty event set");
  }
  const Date start = start_override ? *start_override : date_of(*first);
  const Date end = end_override ? *end_override : date_of(*last);
  return make_project_window(start, end, join_quantile);
}

struct EligibilityPolicy {
  int min_active_days = 2;
  double join_quantile = 0.75;

  void validate() const {
    if (min_active_days < 2) throw ConfigError("min_active_days must be >= 2");
    if (!(join_quantile > 0.0 && join_quantile <= 1.0)) {
      throw ConfigError("join quantile must lie in (0, 1]");
    }
  }
};

struct Exclusion {
  std::string volunteer_id;
  std::vector<std::string> rules;  // "min_active_days", "late_join", "no_events_in_window"
};

struct FilterResult {
  std::vector<VolunteerEvents> eligible;
  std::vector<Exclusion> exclusions;
  std::size_t events_outside_window = 0;
};

inline std::size_t count_active_dates(const std::vector<TaskEvent>& events) {
  std::size_t n = 0;
  std::optional<Date> prev;
  for (const auto& e : events) {
    const Date d = date_of(e.timestamp);
    if (!prev || d != *prev) ++n;
    prev = d;
  }
  return n;
}

/// Keeps volunteers with at least `min_active_days` distinct UTC dates whose
/// first event falls on or before the eligibility cutoff. Events outside the
/// window are trimmed first and counted.
inline FilterResult filter_participants(const std::vector<VolunteerEvents>& volunteers,
                                        const ProjectWindow& window,
                                        const EligibilityPolicy& policy) {
  policy.validate();
  FilterResult result;
  for (const auto& v : volunteers) {
    VolunteerEvents kept{v.volunteer_id, {}};
    kept.events.reserve(v.events.size());
    for (const auto& e : v.events) {
      const Date d = date_of(e.timestamp);
      if (d < window.start || d > window.end) {
        ++result.events_outside_window;
      } else {
        kept.events.push_back(e);
      }
    }
    if (kept.events.empty()) {
      result.exclusions.push_back({v.volunteer_id, {"no_events_in_window"}});
      continue;
    }
    Exclusion ex{v.volunteer_id, {}};
    if (count_active_dates(kept.events) < static_cast<std::size_t>(policy.min_active_days)) {
      ex.rules.emplace_back("min_active_days");
    }
    if (date_of(kept.events.front().timestamp) > window.eligibility_cutoff) {
      ex.rules.emplace_back("late_join");
    }
    if (ex.rules.empty()) {
      result.eligible.push_back(std::move(kept));
    } else {
      result.exclusions.push_back(std::move(ex));
    }
  }
  return result;
}

inline void to_json(nlohmann::ordered_json& j, const ParseReport& r) {
  j = nlohmann::ordered_json{{"rows", r.rows},
                             {"accepted", r.accepted},
                             {"rejected", r.rejected},
                             {"duplicates_dropped", r.duplicates_dropped},
                             {"delimiter", r.delimiter == '\t' ? "tab" : "comma"},
                             {"projects", r.projects}};
  nlohmann::ordered_json reasons = nlohmann::ordered_json::object();
  for (const auto& [k, n] : r.reasons) reasons[k] = n;
  j["reasons"] = reasons;
  nlohmann::ordered_json rejects = nlohmann::ordered_json::array();
  for (const auto& row : r.rejects) rejects.push_back({{"line", row.line}, {"reason", row.reason}});
  j["rejects"] = rejects;
}

inline void to_json(nlohmann::ordered_json& j, const ProjectWindow& w) {
  j = nlohmann::ordered_json{{"start", format_date(w.start)},
                             {"end", format_date(w.end)},
                             {"eligibility_cutoff", format_date(w.eligibility_cutoff)}};
}

inline void to_json(nlohmann::ordered_json& j, const FilterResult& f) {
  std::map<std::string, std::size_t> tally;
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (const auto& ex : f.exclusions) {
    for (const auto& rule : ex.rules) ++tally[rule];
    list.push_back({{"volunteer_id", ex.volunteer_id}, {"rules", ex.rules}});
  }
  nlohmann::ordered_json by_rule = nlohmann::ordered_json::object();
  for (const auto& [k, n] : tally) by_rule[k] = n;
  j = nlohmann::ordered_json{{"eligible", f.eligible.size()},
                             {"excluded", f.exclusions.size()},
                             {"events_outside_window", f.events_outside_window},
                             {"by_rule", by_rule},
                             {"exclusions", list}};
}

}  // namespace engage
