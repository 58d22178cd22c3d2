#pragma once

// The four engagement metrics and corpus-level descriptive statistics.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "engage/error.hpp"
#include "engage/sessions.hpp"
#include "engage/stats.hpp"
#include "json.hpp"

namespace engage {

enum class Metric : std::size_t { kActivityRatio = 0, kDailyDevotedTime = 1, kRelativeDuration = 2, kPeriodicityVariation = 3 };

inline constexpr std::size_t kMetricCount = 4;
inline constexpr std::array<const char*, kMetricCount> kMetricNames = {"a", "d", "r", "v"};

struct EngagementVector {
  std::string volunteer_id;
  double a = 0.0;  // activity ratio
  double d = 0.0;  // daily devoted time, hours
  double r = 0.0;  // relative activity duration
  double v = 0.0;  // variation in periodicity, days

  std::array<double, kMetricCount> values() const { return {a, d, r, v}; }
};

/// |A| / ((max A - min A) + 1)
inline double activity_ratio(const VolunteerTimeline& tl) {
  if (tl.active_days.size() < 2) {
    throw DataError("activity ratio needs at least two active days: " + tl.volunteer_id);
  }
  return static_cast<double>(tl.active_days.size()) / static_cast<double>(tl.span_days());
}

/// avg(D), hours per active day.
inline double daily_devoted_time(const VolunteerTimeline& tl) {
  if (tl.devoted_hours.empty()) throw DataError("no devoted time recorded: " + tl.volunteer_id);
  return stats::mean(tl.devoted_hours);
}

/// ((max A - min A) + 1) / w
inline double relative_activity_duration(const VolunteerTimeline& tl) {
  if (tl.active_days.empty()) throw DataError("no active days: " + tl.volunteer_id);
  const auto span = tl.span_days();
  if (tl.window_days < span) {
    throw DataError("window shorter than the active span (inconsistent window): " + tl.volunteer_id);
  }
  return static_cast<double>(span) / static_cast<double>(tl.window_days);
}

enum class SdConvention { kPopulation, kSample };

/// sd(B). The population form gives v = 0 for a volunteer with two active days;
/// the sample form needs |B| >= 2 and reports 0 for a single gap.
inline double variation_in_periodicity(const VolunteerTimeline& tl,
                                       SdConvention convention = SdConvention::kPopulation) {
  if (tl.return_gaps.empty()) throw DataError("no return gaps: " + tl.volunteer_id);
  std::vector<double> gaps(tl.return_gaps.begin(), tl.return_gaps.end());
  if (convention == SdConvention::kSample) {
    return gaps.size() < 2 ? 0.0 : stats::sd(gaps, 1);
  }
  return stats::sd(gaps, 0);
}

inline EngagementVector engagement_vector(const VolunteerTimeline& tl,
                                          SdConvention convention = SdConvention::kPopulation) {
  return {tl.volunteer_id, activity_ratio(tl), daily_devoted_time(tl), relative_activity_duration(tl),
          variation_in_periodicity(tl, convention)};
}

/// Rows sorted by volunteer id; columns (a, d, r, v).
struct EngagementMatrix {
  std::vector<EngagementVector> rows;

  std::size_t size() const { return rows.size(); }
  std::vector<double> column(Metric m) const {
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& row : rows) out.push_back(row.values()[static_cast<std::size_t>(m)]);
    return out;
  }
};

inline EngagementMatrix engagement_matrix(std::span<const VolunteerTimeline> timelines,
                                          SdConvention convention = SdConvention::kPopulation) {
  EngagementMatrix m;
  m.rows.reserve(timelines.size());
  for (const auto& tl : timelines) m.rows.push_back(engagement_vector(tl, convention));
  std::sort(m.rows.begin(), m.rows.end(),
            [](const EngagementVector& l, const EngagementVector& r) { return l.volunteer_id < r.volunteer_id; });
  return m;
}

struct KsResult {
  double statistic = 0.0;
  double p_value = 0.0;
};

/// One-sample Kolmogorov-Smirnov test against a normal with mean and sd
/// estimated from the sample. With estimated parameters this is the
/// Lilliefors setting, so the asymptotic p-value is approximate (conservative).
/// A constant sample is degenerate and reported as (1, 0).
inline KsResult ks_normality(std::span<const double> sample) {
  if (sample.size() < 8) throw DataError("normality test needs at least 8 observations");
  const double m = stats::mean(sample);
  const double s = stats::sd(sample, 1);
  if (!(s > 0.0)) return {1.0, 0.0};
  std::vector<double> xs(sample.begin(), sample.end());
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double dmax = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = stats::normal_cdf((xs[i] - m) / s);
    const double above = static_cast<double>(i + 1) / n - f;
    const double below = f - static_cast<double>(i) / n;
    dmax = std::max({dmax, above, below});
  }
  const double root = std::sqrt(n);
  const double lambda = (root + 0.12 + 0.11 / root) * dmax;
  return {std::clamp(dmax, 0.0, 1.0), stats::kolmogorov_q(lambda)};
}

struct MetricSummary {
  double mean = 0.0;
  double sd = 0.0;  // sample convention
  double min = 0.0;
  double max = 0.0;
  double median = 0.0;
  std::optional<KsResult> ks;  // absent below 8 observations
};

struct DescriptiveStats {
  std::size_t n = 0;
  std::array<MetricSummary, kMetricCount> metrics;
};

inline MetricSummary summarize(std::span<const double> col) {
  MetricSummary s;
  s.mean = stats::mean(col);
  s.sd = stats::sd(col, 1);
  const auto [lo, hi] = std::minmax_element(col.begin(), col.end());
  s.min = *lo;
  s.max = *hi;
  s.median = stats::median(std::vector<double>(col.begin(), col.end()));
  if (col.size() >= 8) s.ks = ks_normality(col);
  return s;
}

inline DescriptiveStats descriptive_stats(const EngagementMatrix& m) {
  if (m.size() < 2) throw DataError("descriptive statistics need at least two volunteers");
  DescriptiveStats out;
  out.n = m.size();
  for (std::size_t c = 0; c < kMetricCount; ++c) {
    out.metrics[c] = summarize(m.column(static_cast<Metric>(c)));
  }
  return out;
}

inline void to_json(nlohmann::ordered_json& j, const DescriptiveStats& s) {
  static constexpr std::array<const char*, kMetricCount> kLong = {
      "activity_ratio", "daily_devoted_time", "relative_activity_duration", "variation_in_periodicity"};
  j = nlohmann::ordered_json{{"volunteers", s.n}};
  nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
  for (std::size_t c = 0; c < kMetricCount; ++c) {
    const auto& m = s.metrics[c];
    nlohmann::ordered_json e{{"symbol", kMetricNames[c]}, {"mean", m.mean}, {"sd", m.sd},
                             {"min", m.min},              {"max", m.max},   {"median", m.median}};
    if (m.ks) {
      e["ks_statistic"] = m.ks->statistic;
      e["ks_p_value"] = m.ks->p_value;
      e["ks_p_value_approximate"] = true;
      e["normal_at_0.05"] = m.ks->p_value >= 0.05;
    } else {
      e["ks_statistic"] = nullptr;
      e["ks_p_value"] = nullptr;
    }
    metrics[kLong[c]] = e;
  }
  j["metrics"] = metrics;
}

}  // namespace engage
