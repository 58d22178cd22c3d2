#pragma once

// UTC instants and calendar dates. Everything in this library works on UTC
// days; no local time zone is ever consulted.

#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace engage {

using Instant = std::chrono::sys_seconds;
using Date = std::chrono::sys_days;

inline Date date_of(Instant t) { return std::chrono::floor<std::chrono::days>(t); }

inline std::int64_t to_unix(Instant t) { return t.time_since_epoch().count(); }
inline Instant from_unix(std::int64_t s) { return Instant{std::chrono::seconds{s}}; }

/// Whole days from `from` to `to` (negative if `to` precedes `from`).
inline std::int64_t days_between(Date from, Date to) { return (to - from).count(); }

namespace detail {

inline bool parse_fixed_int(std::string_view s, std::size_t pos, std::size_t len, int& out) {
  if (pos + len > s.size()) return false;
  for (std::size_t i = pos; i < pos + len; ++i) {
    if (s[i] < '0' || s[i] > '9') return false;
  }
  auto [ptr, ec] = std::from_chars(s.data() + pos, s.data() + pos + len, out);
  return ec == std::errc{} && ptr == s.data() + pos + len;
}

}  // namespace detail

/// Parses "YYYY-MM-DD".
inline std::optional<Date> parse_date(std::string_view s) {
  using namespace std::chrono;
  int y = 0, m = 0, d = 0;
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  if (!detail::parse_fixed_int(s, 0, 4, y) || !detail::parse_fixed_int(s, 5, 2, m) ||
      !detail::parse_fixed_int(s, 8, 2, d)) {
    return std::nullopt;
  }
  year_month_day ymd{year{y}, month{static_cast<unsigned>(m)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  return sys_days{ymd};
}

/// Parses "YYYY-MM-DDTHH:MM:SS[Z|+HH:MM|-HH:MM]" or "YYYY-MM-DD HH:MM:SS".
/// A missing zone designator means UTC; explicit offsets are converted to UTC.
inline std::optional<Instant> parse_instant(std::string_view s) {
  using namespace std::chrono;
  if (s.size() < 19 || (s[10] != 'T' && s[10] != ' ')) return std::nullopt;
  auto date = parse_date(s.substr(0, 10));
  if (!date) return std::nullopt;
  int hh = 0, mm = 0, ss = 0;
  if (s[13] != ':' || s[16] != ':' || !detail::parse_fixed_int(s, 11, 2, hh) ||
      !detail::parse_fixed_int(s, 14, 2, mm) || !detail::parse_fixed_int(s, 17, 2, ss)) {
    return std::nullopt;
  }
  if (hh > 23 || mm > 59 || ss > 59) return std::nullopt;
  std::string_view zone = s.substr(19);
  int offset_minutes = 0;
  if (zone.empty() || zone == "Z") {
  } else if (zone.size() == 6 && (zone[0] == '+' || zone[0] == '-') && zone[3] == ':') {
    int oh = 0, om = 0;
    if (!detail::parse_fixed_int(zone, 1, 2, oh) || !detail::parse_fixed_int(zone, 4, 2, om) ||
        oh > 23 || om > 59) {
      return std::nullopt;
    }
    offset_minutes = (oh * 60 + om) * (zone[0] == '+' ? 1 : -1);
  } else {
    return std::nullopt;
  }
  return Instant{*date} + hours{hh} + minutes{mm} + seconds{ss} - minutes{offset_minutes};
}

inline std::string format_date(Date d) {
  std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

/// ISO-8601 with a trailing 'Z'.
inline std::string format_instant(Instant t) {
  Date d = date_of(t);
  auto secs = (t - Instant{d}).count();
  char buf[64];
  std::snprintf(buf, sizeof buf, "T%02lld:%02lld:%02lldZ", static_cast<long long>(secs / 3600),
                static_cast<long long>(secs / 60 % 60), static_cast<long long>(secs % 60));
  return format_date(d) + buf;
}

}  // namespace engage
