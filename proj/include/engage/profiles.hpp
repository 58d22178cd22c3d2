#pragma once

// Engagement-profile labelling, within-profile rank correlations and the
// importance (volunteers / devoted time) table.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "engage/cluster.hpp"
#include "engage/error.hpp"
#include "engage/metrics.hpp"
#include "engage/stats.hpp"
#include "json.hpp"

namespace engage {

enum class ProfileKind { kHardworking, kSpasmodic, kPersistent, kLasting, kModerate, kGeneric };

struct ProfileLabel {
  ProfileKind kind = ProfileKind::kGeneric;
  std::size_t index = 0;  // cluster index, used for generic names

  std::string name() const {
    switch (kind) {
      case ProfileKind::kHardworking: return "hardworking";
      case ProfileKind::kSpasmodic: return "spasmodic";
      case ProfileKind::kPersistent: return "persistent";
      case ProfileKind::kLasting: return "lasting";
      case ProfileKind::kModerate: return "moderate";
      case ProfileKind::kGeneric: return "cluster-" + std::to_string(index);
    }
    return "?";
  }
  /// Report ordering: the five named profiles first, then generic clusters by index.
  friend bool operator<(const ProfileLabel& l, const ProfileLabel& r) {
    return std::pair(static_cast<int>(l.kind), l.index) < std::pair(static_cast<int>(r.kind), r.index);
  }
};

struct LabeledCluster {
  std::size_t cluster = 0;
  ProfileLabel label;
  std::string rule;  // audit trail
};

namespace detail {

inline std::string centroid_summary(std::span<const double> c) {
  std::string out;
  char buf[48];
  for (std::size_t j = 0; j < c.size() && j < kMetricCount; ++j) {
    std::snprintf(buf, sizeof buf, "%s%s=%.3f", j ? " " : "", kMetricNames[j], c[j]);
    out += buf;
  }
  return out;
}

// Index among `candidates` maximising column `col`, ties to the lowest cluster index.
inline std::pair<std::size_t, bool> argmax_column(const PointMatrix& c, const std::vector<std::size_t>& candidates,
                                                  std::size_t col) {
  std::size_t best = candidates.front();
  for (std::size_t idx : candidates) {
    if (c(idx, col) > c(best, col)) best = idx;
  }
  bool tied = false;
  for (std::size_t idx : candidates) {
    if (idx != best && c(idx, col) == c(best, col)) tied = true;
  }
  return {best, tied};
}

}  // namespace detail

/// Names clusters from their normalised centroids (a, d, r, v). With k = 5:
/// persistent has the largest r; hardworking the largest a of the rest;
/// moderate is the remaining centroid nearest their mean; of the last two the
/// higher a is spasmodic and the other lasting. Other k get generic names.
inline std::vector<LabeledCluster> label_profiles(const PointMatrix& centroids_normalized) {
  const std::size_t k = centroids_normalized.rows();
  std::vector<LabeledCluster> out(k);
  for (std::size_t c = 0; c < k; ++c) out[c].cluster = c;
  if (k != 5 || centroids_normalized.cols() != kMetricCount) {
    for (std::size_t c = 0; c < k; ++c) {
      out[c].label = {ProfileKind::kGeneric, c};
      out[c].rule = "generic (k=" + std::to_string(k) + "): " + detail::centroid_summary(centroids_normalized.row(c));
    }
    return out;
  }
  const auto& m = centroids_normalized;
  constexpr std::size_t kA = 0, kR = 2;
  std::vector<std::size_t> remaining(k);
  std::iota(remaining.begin(), remaining.end(), std::size_t{0});
  auto take = [&](std::size_t c, ProfileKind kind, std::string rule) {
    out[c].label = {kind, c};
    out[c].rule = std::move(rule);
    remaining.erase(std::find(remaining.begin(), remaining.end(), c));
  };
  auto tie_note = [](bool tied) { return tied ? " (tie broken toward lower cluster index)" : ""; };

  auto [persistent, tied_r] = detail::argmax_column(m, remaining, kR);
  take(persistent, ProfileKind::kPersistent, std::string("largest relative activity duration r") + tie_note(tied_r));

  auto [hardworking, tied_a] = detail::argmax_column(m, remaining, kA);
  take(hardworking, ProfileKind::kHardworking,
       std::string("largest activity ratio a among remaining clusters") + tie_note(tied_a));

  std::vector<double> mean(m.cols(), 0.0);
  for (std::size_t c : remaining) {
    for (std::size_t j = 0; j < m.cols(); ++j) mean[j] += m(c, j) / static_cast<double>(remaining.size());
  }
  std::size_t moderate = remaining.front();
  bool tied_mid = false;
  for (std::size_t c : remaining) {
    const double dc = squared_distance(m.row(c), mean), db = squared_distance(m.row(moderate), mean);
    if (dc < db) {
      moderate = c;
      tied_mid = false;
    } else if (c != moderate && dc == db) {
      tied_mid = true;
    }
  }
  take(moderate, ProfileKind::kModerate,
       std::string("nearest to the mean of the remaining centroids (intermediate values)") + tie_note(tied_mid));

  auto [spasmodic, tied_last] = detail::argmax_column(m, remaining, kA);
  take(spasmodic, ProfileKind::kSpasmodic, std::string("higher activity ratio a of the last two") + tie_note(tied_last));
  take(remaining.front(), ProfileKind::kLasting, "remaining cluster (higher r and v relative to spasmodic)");
  return out;
}

enum class CorrelationStrength { kVeryWeak, kWeak, kModerate, kStrong, kVeryStrong };

inline const char* to_string(CorrelationStrength s) {
  switch (s) {
    case CorrelationStrength::kVeryWeak: return "very weak";
    case CorrelationStrength::kWeak: return "weak";
    case CorrelationStrength::kModerate: return "moderate";
    case CorrelationStrength::kStrong: return "strong";
    case CorrelationStrength::kVeryStrong: return "very strong";
  }
  return "?";
}

inline CorrelationStrength correlation_strength(double rho) {
  const double m = std::fabs(rho);
  if (m < 0.2) return CorrelationStrength::kVeryWeak;
  if (m < 0.4) return CorrelationStrength::kWeak;
  if (m < 0.6) return CorrelationStrength::kModerate;
  if (m < 0.8) return CorrelationStrength::kStrong;
  return CorrelationStrength::kVeryStrong;
}

struct CorrelationEntry {
  std::string pair;            // e.g. "a,v"
  std::size_t n = 0;
  std::optional<double> rho;   // empty when a sample has zero variance
  std::optional<double> p_value;  // empty when rho is undefined or n < 5
  bool significant = false;    // p < 0.05
  CorrelationStrength strength = CorrelationStrength::kVeryWeak;
  bool exact_p = false;
};

struct SpearmanOptions {
  bool exact_permutation = false;  // only honoured for n < 12
  double alpha = 0.05;
};

namespace detail {

inline double pearson(std::span<const double> x, std::span<const double> y) {
  const double mx = stats::mean(x), my = stats::mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline bool constant(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [&](double v) { return v == x.front(); });
}

// Two-sided p from the full permutation distribution of y's ranks.
inline double exact_spearman_p(const std::vector<double>& rx, std::vector<double> ry, double rho) {
  std::vector<std::size_t> perm(ry.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::vector<double> permuted(ry.size());
  double hits = 0.0, total = 0.0;
  const double target = std::fabs(rho) - 1e-12;
  do {
    for (std::size_t i = 0; i < perm.size(); ++i) permuted[i] = ry[perm[i]];
    if (std::fabs(pearson(rx, permuted)) >= target) hits += 1.0;
    total += 1.0;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return hits / total;
}

}  // namespace detail

/// Spearman rank correlation: Pearson correlation of average ranks. The
/// two-sided p-value uses t = rho sqrt((n-2)/(1-rho^2)) with n-2 degrees of
/// freedom, or the exact permutation distribution on request for n < 12.
inline CorrelationEntry spearman(std::span<const double> x, std::span<const double> y,
                                 const SpearmanOptions& opts = {}) {
  if (x.size() != y.size()) throw DataError("spearman: samples differ in length");
  CorrelationEntry e;
  e.n = x.size();
  if (e.n < 2 || detail::constant(x) || detail::constant(y)) return e;
  const auto rx = stats::average_ranks(x);
  const auto ry = stats::average_ranks(y);
  const double rho = detail::pearson(rx, ry);
  e.rho = rho;
  e.strength = correlation_strength(rho);
  if (e.n < 5) return e;
  if (opts.exact_permutation && e.n < 12) {
    e.p_value = detail::exact_spearman_p(rx, ry, rho);
    e.exact_p = true;
  } else if (std::fabs(rho) >= 1.0) {
    e.p_value = 0.0;
  } else {
    const double dof = static_cast<double>(e.n - 2);
    const double t = rho * std::sqrt(dof / ((1.0 - rho) * (1.0 + rho)));
    boost::math::students_t_distribution<double> dist(dof);
    e.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
  }
  e.significant = *e.p_value < opts.alpha;
  return e;
}

/// Metric pairs in reporting order.
inline constexpr std::array<std::pair<Metric, Metric>, 6> kMetricPairs = {{
    {Metric::kActivityRatio, Metric::kRelativeDuration},
    {Metric::kActivityRatio, Metric::kPeriodicityVariation},
    {Metric::kActivityRatio, Metric::kDailyDevotedTime},
    {Metric::kRelativeDuration, Metric::kPeriodicityVariation},
    {Metric::kRelativeDuration, Metric::kDailyDevotedTime},
    {Metric::kPeriodicityVariation, Metric::kDailyDevotedTime},
}};

/// The six pairwise Spearman entries for the members of one cluster.
inline std::array<CorrelationEntry, 6> cluster_correlations(const PointMatrix& values,
                                                            std::span<const std::size_t> assignments,
                                                            std::size_t cluster, const SpearmanOptions& opts = {}) {
  std::array<std::vector<double>, kMetricCount> cols;
  for (std::size_t i = 0; i < values.rows(); ++i) {
    if (assignments[i] != cluster) continue;
    for (std::size_t j = 0; j < kMetricCount; ++j) cols[j].push_back(values(i, j));
  }
  std::array<CorrelationEntry, 6> out;
  for (std::size_t p = 0; p < kMetricPairs.size(); ++p) {
    const auto [m1, m2] = kMetricPairs[p];
    out[p] = spearman(cols[static_cast<std::size_t>(m1)], cols[static_cast<std::size_t>(m2)], opts);
    out[p].pair = std::string(kMetricNames[static_cast<std::size_t>(m1)]) + "," + kMetricNames[static_cast<std::size_t>(m2)];
  }
  return out;
}

struct ProfileCorrelations {
  ProfileLabel label;
  std::size_t cluster = 0;
  std::array<CorrelationEntry, 6> entries;
};

/// Per-profile correlations on raw metric values, ordered by label.
inline std::vector<ProfileCorrelations> profile_correlations(const PointMatrix& raw,
                                                             std::span<const std::size_t> assignments,
                                                             std::span<const LabeledCluster> labels,
                                                             const SpearmanOptions& opts = {}) {
  std::vector<ProfileCorrelations> out;
  for (const auto& lc : labels) out.push_back({lc.label, lc.cluster, cluster_correlations(raw, assignments, lc.cluster, opts)});
  std::sort(out.begin(), out.end(), [](const auto& l, const auto& r) { return l.label < r.label; });
  return out;
}

struct ImportanceRow {
  ProfileLabel label;
  std::size_t cluster = 0;
  std::size_t volunteers = 0;
  double volunteer_share = 0.0;  // percent
  double devoted_hours = 0.0;
  double devoted_share = 0.0;    // percent
};

/// Volunteer counts and total devoted hours per profile, with percentage
/// shares of the corpus totals. Rows ordered by label.
inline std::vector<ImportanceRow> importance_table(std::span<const std::size_t> assignments,
                                                   std::span<const LabeledCluster> labels,
                                                   std::span<const double> devoted_hours) {
  if (assignments.size() != devoted_hours.size()) throw DataError("importance: assignments and hours differ in length");
  std::vector<ImportanceRow> rows;
  for (const auto& lc : labels) rows.push_back({lc.label, lc.cluster, 0, 0.0, 0.0, 0.0});
  auto row_of = [&](std::size_t cluster) -> ImportanceRow& {
    for (auto& r : rows) {
      if (r.cluster == cluster) return r;
    }
    throw DataError("importance: assignment to an unlabelled cluster");
  };
  double total_hours = 0.0;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    auto& r = row_of(assignments[i]);
    ++r.volunteers;
    r.devoted_hours += devoted_hours[i];
    total_hours += devoted_hours[i];
  }
  const double total_volunteers = static_cast<double>(assignments.size());
  for (auto& r : rows) {
    r.volunteer_share = total_volunteers > 0 ? 100.0 * static_cast<double>(r.volunteers) / total_volunteers : 0.0;
    r.devoted_share = total_hours > 0 ? 100.0 * r.devoted_hours / total_hours : 0.0;
  }
  std::sort(rows.begin(), rows.end(), [](const auto& l, const auto& r) { return l.label < r.label; });
  return rows;
}

inline void to_json(nlohmann::ordered_json& j, const CorrelationEntry& e) {
  j = nlohmann::ordered_json{{"pair", e.pair}, {"n", e.n}};
  j["rho"] = e.rho ? nlohmann::ordered_json(*e.rho) : nlohmann::ordered_json(nullptr);
  j["p_value"] = e.p_value ? nlohmann::ordered_json(*e.p_value) : nlohmann::ordered_json(nullptr);
  j["p_method"] = !e.p_value ? "unavailable" : (e.exact_p ? "exact_permutation" : "t_approximation");
  j["significant"] = e.significant;
  j["strength"] = e.rho ? to_string(e.strength) : "undefined";
  j["highlight"] = e.rho && e.strength >= CorrelationStrength::kModerate;
}

}  // namespace engage
