#pragma once

// Working-session reconstruction and per-volunteer timelines.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "engage/error.hpp"
#include "engage/ingest.hpp"
#include "engage/parallel.hpp"
#include "engage/stats.hpp"
#include "engage/time.hpp"

namespace engage {

enum class ThresholdSource { kDetected, kFallback, kFixed };

inline const char* to_string(ThresholdSource s) {
  switch (s) {
    case ThresholdSource::kDetected: return "detected";
    case ThresholdSource::kFallback: return "fallback";
    case ThresholdSource::kFixed: return "fixed";
  }
  return "?";
}

struct GapThreshold {
  std::int64_t seconds = 0;
  ThresholdSource source = ThresholdSource::kFallback;
};

/// Parameters of the log-histogram valley detector.
struct ThresholdDetector {
  std::size_t min_gaps = 30;
  double bin_width = 0.1;  // log10 seconds
  double secondary_peak_ratio = 0.25;
  std::int64_t min_seconds = 300;
  std::int64_t max_seconds = 43200;
  std::int64_t fallback_seconds = 1800;
};

/// Positive gaps (seconds) between consecutive events. Same-second pairs are
/// skipped; they still join sessions but carry no information about the threshold.
inline std::vector<std::int64_t> compute_gaps(std::span<const TaskEvent> events) {
  std::vector<std::int64_t> gaps;
  if (events.size() < 2) return gaps;
  gaps.reserve(events.size() - 1);
  for (std::size_t i = 1; i < events.size(); ++i) {
    const auto g = (events[i].timestamp - events[i - 1].timestamp).count();
    if (g > 0) gaps.push_back(g);
  }
  return gaps;
}

namespace detail {

// Index range [lo, hi] of the valley between the global peak and the farthest
// qualifying secondary peak on one side, or nullopt. `step` is +1 or -1.
inline std::optional<std::pair<long, long>> find_valley(const std::vector<double>& s, long peak,
                                                        int step, double min_height) {
  const long n = static_cast<long>(s.size());
  long far = -1;
  for (long i = peak + step; i >= 0 && i < n; i += step) {
    if (s[i] >= min_height) far = i;
  }
  if (far < 0 || std::labs(far - peak) < 2) return std::nullopt;
  double lowest = s[peak];
  for (long i = peak + step; i != far; i += step) lowest = std::min(lowest, s[i]);
  if (!(lowest < s[far])) return std::nullopt;
  // Deepest bins may form several runs; keep the longest, nearest the peak on ties.
  long best_lo = -1, best_len = 0;
  long i = peak + step;
  while (i != far) {
    if (s[i] == lowest) {
      long j = i;
      while (j + step != far && s[j + step] == lowest) j += step;
      const long len = std::labs(j - i) + 1;
      if (len > best_len) {
        best_len = len;
        best_lo = i;
      }
      i = j + step;
    } else {
      i += step;
    }
  }
  const long a = best_lo, b = best_lo + step * (best_len - 1);
  return std::make_pair(std::min(a, b), std::max(a, b));
}

}  // namespace detail

/// Per-volunteer session threshold from a histogram of log10 gap lengths.
/// The histogram (bin width 0.1) is smoothed with a centred 3-bin moving
/// average; the threshold sits in the deepest valley separating the global
/// peak from a secondary peak of at least 25% of its height. Too few gaps or
/// a unimodal histogram yield the 30 minute fallback.
inline GapThreshold detect_session_threshold(std::span<const std::int64_t> gaps,
                                             const ThresholdDetector& cfg = {}) {
  const GapThreshold fallback{cfg.fallback_seconds, ThresholdSource::kFallback};
  std::vector<long> bins;
  bins.reserve(gaps.size());
  for (auto g : gaps) {
    if (g > 0) {
      bins.push_back(static_cast<long>(std::floor(std::log10(static_cast<double>(g)) / cfg.bin_width)));
    }
  }
  if (bins.size() < cfg.min_gaps) return fallback;

  const auto [min_it, max_it] = std::minmax_element(bins.begin(), bins.end());
  // One empty bin of padding on each side so edge peaks are treated uniformly.
  const long origin = *min_it - 1;
  const std::size_t width = static_cast<std::size_t>(*max_it - *min_it + 3);
  std::vector<double> hist(width, 0.0);
  for (long b : bins) hist[static_cast<std::size_t>(b - origin)] += 1.0;

  std::vector<double> smooth(width, 0.0);
  for (std::size_t i = 0; i < width; ++i) {
    double sum = hist[i];
    if (i > 0) sum += hist[i - 1];
    if (i + 1 < width) sum += hist[i + 1];
    smooth[i] = sum / 3.0;
  }

  const long peak = static_cast<long>(std::max_element(smooth.begin(), smooth.end()) - smooth.begin());
  const double min_height = cfg.secondary_peak_ratio * smooth[static_cast<std::size_t>(peak)];
  auto valley = detail::find_valley(smooth, peak, +1, min_height);
  if (!valley) valley = detail::find_valley(smooth, peak, -1, min_height);
  if (!valley) return fallback;

  // Midpoint of the valley run, in log10 seconds.
  const double lo_edge = static_cast<double>(valley->first + origin) * cfg.bin_width;
  const double hi_edge = static_cast<double>(valley->second + origin + 1) * cfg.bin_width;
  const double seconds = std::pow(10.0, 0.5 * (lo_edge + hi_edge));
  const auto clamped = std::clamp(static_cast<std::int64_t>(std::llround(seconds)), cfg.min_seconds,
                                  cfg.max_seconds);
  return {clamped, ThresholdSource::kDetected};
}

struct Session {
  std::size_t first_event = 0;  // index into the volunteer's event list
  std::size_t event_count = 0;
  Instant start;
  Instant end;
  double duration_hours = 0.0;  // raw span plus padding

  std::int64_t raw_span_seconds() const { return (end - start).count(); }
};

/// Splits a sorted event list wherever the gap exceeds the threshold.
/// Durations are the raw spans; see pad_sessions.
inline std::vector<Session> build_sessions(std::span<const TaskEvent> events, std::int64_t threshold_seconds) {
  std::vector<Session> sessions;
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (i == 0 || (events[i].timestamp - events[i - 1].timestamp).count() > threshold_seconds) {
      sessions.push_back(Session{i, 0, events[i].timestamp, events[i].timestamp, 0.0});
    }
    Session& s = sessions.back();
    ++s.event_count;
    s.end = events[i].timestamp;
    s.duration_hours = static_cast<double>(s.raw_span_seconds()) / 3600.0;
  }
  return sessions;
}

/// Positive gaps between consecutive events of the same session.
inline std::vector<std::int64_t> intra_session_gaps(std::span<const TaskEvent> events,
                                                    std::span<const Session> sessions) {
  std::vector<std::int64_t> gaps;
  for (const auto& s : sessions) {
    for (std::size_t i = s.first_event + 1; i < s.first_event + s.event_count; ++i) {
      const auto g = (events[i].timestamp - events[i - 1].timestamp).count();
      if (g > 0) gaps.push_back(g);
    }
  }
  return gaps;
}

inline void pad_sessions(std::vector<Session>& sessions, double pad_seconds) {
  for (auto& s : sessions) {
    s.duration_hours = (static_cast<double>(s.raw_span_seconds()) + pad_seconds) / 3600.0;
  }
}

struct VolunteerTimeline {
  std::string volunteer_id;
  Date join_date;
  std::int64_t window_days = 0;            // w
  std::vector<Date> active_days;           // A, strictly increasing
  std::vector<double> devoted_hours;       // D, aligned to A
  std::vector<std::int64_t> return_gaps;   // B, days between consecutive active days
  std::size_t orphan_days = 0;             // active days reached only by a session crossing midnight

  std::int64_t span_days() const {
    return days_between(active_days.front(), active_days.back()) + 1;
  }
  double total_devoted_hours() const {
    double t = 0.0;
    for (double h : devoted_hours) t += h;
    return t;
  }
};

/// Derives A, D, B and w. Session time is credited to the UTC date on which
/// the session starts. An active day that only holds the tail of a session
/// begun the day before is credited one padding unit so that D stays positive.
inline VolunteerTimeline build_timeline(const std::string& volunteer_id, std::span<const TaskEvent> events,
                                        std::span<const Session> sessions, const ProjectWindow& window,
                                        double pad_seconds) {
  if (events.empty() || sessions.empty()) throw DataError("timeline needs at least one session: " + volunteer_id);
  VolunteerTimeline tl;
  tl.volunteer_id = volunteer_id;
  for (const auto& e : events) {
    const Date d = date_of(e.timestamp);
    if (tl.active_days.empty() || tl.active_days.back() != d) tl.active_days.push_back(d);
  }
  tl.devoted_hours.assign(tl.active_days.size(), 0.0);
  for (const auto& s : sessions) {
    const Date d = date_of(s.start);
    if (d > window.end) {
      throw DataError("session of " + volunteer_id + " starts after the project window ends");
    }
    const auto it = std::lower_bound(tl.active_days.begin(), tl.active_days.end(), d);
    tl.devoted_hours[static_cast<std::size_t>(it - tl.active_days.begin())] += s.duration_hours;
  }
  for (auto& h : tl.devoted_hours) {
    if (h <= 0.0) {
      h = pad_seconds / 3600.0;
      ++tl.orphan_days;
    }
    h = std::min(h, 24.0);
  }
  for (std::size_t i = 1; i < tl.active_days.size(); ++i) {
    tl.return_gaps.push_back(days_between(tl.active_days[i - 1], tl.active_days[i]));
  }
  tl.join_date = tl.active_days.front();
  tl.window_days = days_between(tl.join_date, window.end) + 1;
  return tl;
}

/// Session threshold policy: automatic detection or a fixed value for every volunteer.
struct ThresholdMode {
  std::optional<std::int64_t> fixed_seconds;
  ThresholdDetector detector;
};

struct VolunteerSessions {
  std::string volunteer_id;
  GapThreshold threshold;
  std::vector<Session> sessions;
  double pad_seconds = 0.0;
  VolunteerTimeline timeline;
};

inline constexpr double kFinalPadSeconds = 30.0;

/// Thresholds, sessions and timelines for every volunteer. Two passes: the
/// first finds each volunteer's median intra-session gap, the second pads
/// sessions (falling back to the median of those medians) and builds timelines.
inline std::vector<VolunteerSessions> reconstruct_sessions(const std::vector<VolunteerEvents>& volunteers,
                                                           const ProjectWindow& window,
                                                           const ThresholdMode& mode = {},
                                                           unsigned threads = 1) {
  const std::size_t n = volunteers.size();
  std::vector<VolunteerSessions> out(n);
  std::vector<std::optional<double>> medians(n);
  parallel_for(n, threads, [&](std::size_t i) {
    const auto& v = volunteers[i];
    auto& r = out[i];
    r.volunteer_id = v.volunteer_id;
    if (mode.fixed_seconds) {
      r.threshold = {*mode.fixed_seconds, ThresholdSource::kFixed};
    } else {
      const auto gaps = compute_gaps(v.events);
      r.threshold = detect_session_threshold(gaps, mode.detector);
    }
    r.sessions = build_sessions(v.events, r.threshold.seconds);
    const auto intra = intra_session_gaps(v.events, r.sessions);
    if (!intra.empty()) {
      medians[i] = stats::median(std::vector<double>(intra.begin(), intra.end()));
    }
  });

  std::vector<double> known;
  for (const auto& m : medians) {
    if (m) known.push_back(*m);
  }
  const double global_pad = known.empty() ? kFinalPadSeconds : stats::median(known);

  parallel_for(n, threads, [&](std::size_t i) {
    auto& r = out[i];
    r.pad_seconds = medians[i].value_or(global_pad);
    pad_sessions(r.sessions, r.pad_seconds);
    r.timeline = build_timeline(r.volunteer_id, volunteers[i].events, r.sessions, window, r.pad_seconds);
  });
  return out;
}

}  // namespace engage
