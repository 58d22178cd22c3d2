#pragma once

// End-to-end stages behind the CLI subcommands. Each stage reads and writes
// plain files so it can be re-run and diffed on its own. Output bytes depend
// only on the inputs, flags and seed; never on the thread count or the
// output directory.

#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "engage/cluster.hpp"
#include "engage/error.hpp"
#include "engage/ingest.hpp"
#include "engage/io.hpp"
#include "engage/metrics.hpp"
#include "engage/profiles.hpp"
#include "engage/sessions.hpp"
#include "engage/synth.hpp"
#include "json.hpp"

namespace engage {

/// Parses "auto" or "fixed:<n>[s|m|h]" (bare numbers are seconds).
inline ThresholdMode parse_threshold_mode(const std::string& text) {
  ThresholdMode mode;
  if (text == "auto") return mode;
  const std::string prefix = "fixed:";
  if (text.rfind(prefix, 0) != 0 || text.size() == prefix.size()) {
    throw ConfigError("--threshold: expected 'auto' or 'fixed:<seconds|Nm|Nh>', got '" + text + "'");
  }
  std::string body = text.substr(prefix.size());
  std::int64_t scale = 1;
  switch (body.back()) {
    case 's': scale = 1; body.pop_back(); break;
    case 'm': scale = 60; body.pop_back(); break;
    case 'h': scale = 3600; body.pop_back(); break;
    default: break;
  }
  std::int64_t value = 0;
  const auto res = std::from_chars(body.data(), body.data() + body.size(), value);
  if (body.empty() || res.ec != std::errc{} || res.ptr != body.data() + body.size() || value <= 0) {
    throw ConfigError("--threshold: invalid duration in '" + text + "'");
  }
  mode.fixed_seconds = value * scale;
  return mode;
}

struct RunConfig {
  std::string input;
  std::optional<Date> start;
  std::optional<Date> end;
  EligibilityPolicy policy;
  std::string threshold = "auto";
  std::optional<std::size_t> k;
  std::size_t k_min = 2;
  std::size_t k_max = 10;
  std::optional<std::uint64_t> seed;
  std::size_t hier_cap = 10000;
  std::string out_dir = ".";
  unsigned threads = 1;
  SdConvention v_sd = SdConvention::kPopulation;
  bool exact_spearman = false;
  bool write_sessions = false;
  double kmeans_tol = 1e-9;
  std::size_t kmeans_max_iter = 100;
  std::size_t restarts = 10;
  bool hartigan = true;

  std::string path(const std::string& name) const { return (std::filesystem::path(out_dir) / name).string(); }
  std::uint64_t seed_or_zero() const { return seed.value_or(0); }
};

namespace detail {

inline nlohmann::ordered_json base_config(const RunConfig& c) {
  nlohmann::ordered_json j{{"input", c.input}};
  j["seed"] = c.seed ? nlohmann::ordered_json(*c.seed) : nlohmann::ordered_json(0);
  return j;
}

inline nlohmann::ordered_json metrics_config(const RunConfig& c) {
  auto j = base_config(c);
  j["start"] = c.start ? nlohmann::ordered_json(format_date(*c.start)) : nlohmann::ordered_json(nullptr);
  j["end"] = c.end ? nlohmann::ordered_json(format_date(*c.end)) : nlohmann::ordered_json(nullptr);
  j["join_quantile"] = c.policy.join_quantile;
  j["min_active_days"] = c.policy.min_active_days;
  j["threshold"] = c.threshold;
  j["v_sd"] = c.v_sd == SdConvention::kPopulation ? "population" : "sample";
  return j;
}

inline nlohmann::ordered_json cluster_config(const RunConfig& c) {
  auto j = base_config(c);
  j["hier_cap"] = c.hier_cap;
  j["linkage"] = "ward";
  j["distance"] = "euclidean";
  j["kmeans_tol"] = c.kmeans_tol;
  j["kmeans_max_iter"] = c.kmeans_max_iter;
  j["kmeans_restarts"] = c.restarts;
  j["hartigan_refinement"] = c.hartigan;
  return j;
}

inline ClusteringOptions clustering_options(const RunConfig& c) {
  ClusteringOptions o;
  o.cap = c.hier_cap;
  o.seed = c.seed_or_zero();
  o.kmeans.tol = c.kmeans_tol;
  o.kmeans.max_iter = c.kmeans_max_iter;
  o.kmeans.hartigan = c.hartigan;
  o.restarts = c.restarts;
  o.kmeans.threads = c.threads;
  return o;
}

inline void ensure_out_dir(const RunConfig& c) {
  std::error_code ec;
  std::filesystem::create_directories(c.out_dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + c.out_dir + ": " + ec.message());
}

inline PointMatrix raw_matrix(const std::vector<io::MetricsRow>& rows) {
  PointMatrix m(rows.size(), kMetricCount);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto v = rows[i].metrics.values();
    std::copy(v.begin(), v.end(), m.row(i).begin());
  }
  return m;
}

inline io::MetricsTable load_metrics(const RunConfig& c) {
  auto is = io::open_input(c.input);
  auto table = io::read_metrics_table(is);
  std::sort(table.rows.begin(), table.rows.end(),
            [](const auto& l, const auto& r) { return l.metrics.volunteer_id < r.metrics.volunteer_id; });
  return table;
}

}  // namespace detail

/// Parses a log and prints its report as JSON. Returns the exit code.
inline int run_validate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  auto is = io::open_input(cfg.input);
  try {
    const auto parsed = parse_log(is);
    nlohmann::ordered_json j = parsed.report;
    j["ok"] = true;
    j["volunteers"] = parsed.volunteers.size();
    out << j.dump(2) << '\n';
    return 0;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    out << nlohmann::ordered_json{{"ok", false}, {"error", e.what()}}.dump(2) << '\n';
    return static_cast<int>(e.code());
  }
}

struct MetricsRun {
  ParseReport parse_report;
  ProjectWindow window;
  FilterResult filter;  // eligible events are dropped after use
  std::vector<VolunteerSessions> sessions;
  std::vector<io::MetricsRow> rows;
  std::optional<DescriptiveStats> stats;
};

/// Ingest, eligibility, sessions and metrics. Writes metrics.csv,
/// thresholds.csv, stats.json, exclusions.json, parse_report.json and, on
/// request, sessions.csv.
inline MetricsRun run_metrics(const RunConfig& cfg, std::ostream& out) {
  const ThresholdMode mode = parse_threshold_mode(cfg.threshold);
  cfg.policy.validate();
  detail::ensure_out_dir(cfg);
  const auto config = detail::metrics_config(cfg);

  MetricsRun run;
  auto is = io::open_input(cfg.input);
  auto parsed = parse_log(is);
  run.parse_report = parsed.report;
  {
    nlohmann::ordered_json j{{"config", config}, {"report", parsed.report}};
    io::write_json_file(cfg.path("parse_report.json"), j);
  }
  if (parsed.volunteers.empty() && !(cfg.start && cfg.end)) throw DataError("no events in the log");
  run.window = derive_project_window(parsed.volunteers, cfg.policy.join_quantile, cfg.start, cfg.end);
  run.filter = filter_participants(parsed.volunteers, run.window, cfg.policy);
  parsed.volunteers.clear();
  {
    nlohmann::ordered_json j{{"config", config}, {"window", run.window}, {"filter", run.filter}};
    io::write_json_file(cfg.path("exclusions.json"), j);
  }
  if (run.filter.eligible.empty()) {
    nlohmann::ordered_json summary = run.filter;
    summary.erase("exclusions");
    throw DataError("no eligible volunteers: " + summary.dump());
  }

  run.sessions = reconstruct_sessions(run.filter.eligible, run.window, mode, cfg.threads);
  std::vector<VolunteerTimeline> timelines;
  timelines.reserve(run.sessions.size());
  for (const auto& s : run.sessions) timelines.push_back(s.timeline);
  const auto matrix = engagement_matrix(timelines, cfg.v_sd);
  std::map<std::string, const VolunteerTimeline*> by_id;
  for (const auto& tl : timelines) by_id[tl.volunteer_id] = &tl;
  std::size_t orphan_days = 0;
  for (const auto& row : matrix.rows) {
    const auto* tl = by_id.at(row.volunteer_id);
    orphan_days += tl->orphan_days;
    run.rows.push_back({row, tl->active_days.size(), tl->total_devoted_hours()});
  }

  {
    auto os = io::open_output(cfg.path("metrics.csv"));
    io::write_metadata(os, "metrics", config);
    io::write_metrics_table(os, run.rows);
  }
  {
    auto os = io::open_output(cfg.path("thresholds.csv"));
    io::write_metadata(os, "thresholds", config);
    os << "volunteer_id,threshold_seconds,source\n";
    for (const auto& s : run.sessions) {
      os << s.volunteer_id << ',' << s.threshold.seconds << ',' << to_string(s.threshold.source) << '\n';
    }
  }
  if (cfg.write_sessions) {
    auto os = io::open_output(cfg.path("sessions.csv"));
    io::write_metadata(os, "sessions", config);
    os << "volunteer_id,session_index,start,end,event_count,duration_hours\n";
    for (const auto& s : run.sessions) {
      for (std::size_t i = 0; i < s.sessions.size(); ++i) {
        const auto& ss = s.sessions[i];
        os << s.volunteer_id << ',' << i << ',' << format_instant(ss.start) << ',' << format_instant(ss.end) << ','
           << ss.event_count << ',' << io::format_double(ss.duration_hours) << '\n';
      }
    }
  }

  nlohmann::ordered_json stats_json{{"config", config}, {"window", run.window}, {"volunteers", matrix.size()}};
  std::map<std::string, std::size_t> sources;
  for (const auto& s : run.sessions) ++sources[to_string(s.threshold.source)];
  stats_json["threshold_sources"] = sources;
  stats_json["midnight_crossing_days"] = orphan_days;
  if (matrix.size() >= 2) {
    run.stats = descriptive_stats(matrix);
    stats_json["descriptive"] = *run.stats;
  } else {
    stats_json["descriptive"] = nullptr;
  }
  io::write_json_file(cfg.path("stats.json"), stats_json);

  out << "eligible volunteers: " << matrix.size() << " (excluded " << run.filter.exclusions.size() << ")\n";
  run.filter.eligible.clear();
  return run;
}

/// Scans k over [k_min, k_max]; writes kscan.csv and kscan.json.
inline KScanReport run_scan_k(const RunConfig& cfg, std::ostream& out) {
  detail::ensure_out_dir(cfg);
  const auto table = detail::load_metrics(cfg);
  if (table.rows.size() < 3) throw DataError("scan-k needs at least three volunteers");
  const auto raw = detail::raw_matrix(table.rows);
  const auto [normalized, params] = range_normalize(raw);
  const auto report = scan_k(normalized, cfg.k_min, cfg.k_max, detail::clustering_options(cfg));

  auto config = detail::cluster_config(cfg);
  config["k_min"] = cfg.k_min;
  config["k_max"] = cfg.k_max;
  {
    auto os = io::open_output(cfg.path("kscan.csv"));
    io::write_metadata(os, "scan-k", config);
    os << "k,wss,avg_silhouette\n";
    for (const auto& e : report.entries) {
      os << e.k << ',' << io::format_double(e.wss) << ',' << io::format_double(e.avg_silhouette) << '\n';
    }
  }
  nlohmann::ordered_json j{{"config", config}, {"volunteers", raw.rows()}};
  j.update(nlohmann::ordered_json(report));
  io::write_json_file(cfg.path("kscan.json"), j);

  out << "k\twss\tavg_silhouette\n";
  for (const auto& e : report.entries) {
    out << e.k << '\t' << io::format_double(e.wss) << '\t' << io::format_double(e.avg_silhouette) << '\n';
  }
  out << "suggested_k=" << report.suggested_k << " (" << to_string(report.interpretation)
      << " structure), wss elbow at k=" << report.elbow_k << '\n';
  return report;
}

struct AnalyzeRun {
  std::vector<std::string> volunteer_ids;
  ClusteringResult clustering;
  std::vector<LabeledCluster> labels;
  std::vector<ProfileCorrelations> correlations;
  std::vector<ImportanceRow> importance;
};

/// Clusters at a fixed k and reports labelled profiles. Writes
/// profiles.json, profiles.csv, clustering.json and assignments.csv.
inline AnalyzeRun run_analyze(const RunConfig& cfg, std::ostream& out) {
  if (!cfg.k) throw ConfigError("analyze needs --k");
  if (!cfg.seed) throw ConfigError("analyze needs --seed");
  detail::ensure_out_dir(cfg);
  const auto table = detail::load_metrics(cfg);
  if (!table.has_devoted_hours) throw FormatError("metrics table: analyze needs the devoted_hours column");
  if (*cfg.k > table.rows.size()) {
    throw ConfigError("k=" + std::to_string(*cfg.k) + " exceeds the number of volunteers (" +
                      std::to_string(table.rows.size()) + ")");
  }
  const auto raw = detail::raw_matrix(table.rows);

  AnalyzeRun run;
  for (const auto& r : table.rows) run.volunteer_ids.push_back(r.metrics.volunteer_id);
  run.clustering = cluster_volunteers(raw, *cfg.k, detail::clustering_options(cfg));
  const auto& cl = run.clustering;
  run.labels = label_profiles(cl.centroids_normalized);
  run.correlations = profile_correlations(raw, cl.assignments, run.labels, {cfg.exact_spearman, 0.05});
  std::vector<double> hours;
  for (const auto& r : table.rows) hours.push_back(r.devoted_hours);
  run.importance = importance_table(cl.assignments, run.labels, hours);

  auto config = detail::cluster_config(cfg);
  config["k"] = *cfg.k;
  config["exact_spearman"] = cfg.exact_spearman;

  auto centroid_json = [](const PointMatrix& m, std::size_t c) {
    nlohmann::ordered_json j;
    for (std::size_t d = 0; d < kMetricCount; ++d) j[kMetricNames[d]] = m(c, d);
    return j;
  };
  nlohmann::ordered_json clustering{{"config", config},
                                    {"k", cl.k},
                                    {"volunteers", raw.rows()},
                                    {"wss", cl.wss},
                                    {"avg_silhouette", cl.silhouette.value},
                                    {"interpretation", to_string(cl.silhouette.interpretation)},
                                    {"iterations", cl.iterations},
                                    {"stop_reason", cl.stop_reason},
                                    {"kmeans_start", cl.start},
                                    {"hartigan_transfers", cl.transfers},
                                    {"seed", cl.seed},
                                    {"hierarchical_sample", cl.hierarchical_sample}};
  nlohmann::ordered_json norm = nlohmann::ordered_json::object();
  for (std::size_t d = 0; d < kMetricCount; ++d) {
    norm[kMetricNames[d]] = {{"min", cl.normalization.min[d]}, {"max", cl.normalization.max[d]}};
  }
  clustering["normalization"] = norm;
  nlohmann::ordered_json centroids = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < cl.k; ++c) {
    centroids.push_back({{"cluster", c},
                         {"normalized", centroid_json(cl.centroids_normalized, c)},
                         {"raw", centroid_json(cl.centroids_raw, c)}});
  }
  clustering["centroids"] = centroids;
  io::write_json_file(cfg.path("clustering.json"), clustering);

  std::map<std::size_t, const LabeledCluster*> label_of;
  for (const auto& lc : run.labels) label_of[lc.cluster] = &lc;
  {
    auto os = io::open_output(cfg.path("assignments.csv"));
    io::write_metadata(os, "assignments", config);
    os << "volunteer_id,cluster_id,profile\n";
    for (std::size_t i = 0; i < run.volunteer_ids.size(); ++i) {
      os << run.volunteer_ids[i] << ',' << cl.assignments[i] << ',' << label_of.at(cl.assignments[i])->label.name()
         << '\n';
    }
  }

  nlohmann::ordered_json profiles = nlohmann::ordered_json::array();
  for (const auto& imp : run.importance) {
    const auto& lc = *label_of.at(imp.cluster);
    nlohmann::ordered_json p{{"label", lc.label.name()},
                             {"cluster", imp.cluster},
                             {"rule", lc.rule},
                             {"centroid_raw", centroid_json(cl.centroids_raw, imp.cluster)},
                             {"centroid_normalized", centroid_json(cl.centroids_normalized, imp.cluster)},
                             {"volunteers", imp.volunteers},
                             {"volunteer_share_pct", imp.volunteer_share},
                             {"devoted_hours", imp.devoted_hours},
                             {"devoted_share_pct", imp.devoted_share}};
    for (const auto& pc : run.correlations) {
      if (pc.cluster == imp.cluster) p["correlations"] = pc.entries;
    }
    profiles.push_back(p);
  }
  double vol_total = 0.0, vol_share = 0.0, hours_total = 0.0, hours_share = 0.0;
  for (const auto& imp : run.importance) {
    vol_total += static_cast<double>(imp.volunteers);
    vol_share += imp.volunteer_share;
    hours_total += imp.devoted_hours;
    hours_share += imp.devoted_share;
  }
  nlohmann::ordered_json report{{"config", config},
                                {"k", cl.k},
                                {"avg_silhouette", cl.silhouette.value},
                                {"interpretation", to_string(cl.silhouette.interpretation)},
                                {"wss", cl.wss},
                                {"profiles", profiles},
                                {"totals",
                                 {{"volunteers", vol_total},
                                  {"volunteer_share_pct", vol_share},
                                  {"devoted_hours", hours_total},
                                  {"devoted_share_pct", hours_share}}}};
  io::write_json_file(cfg.path("profiles.json"), report);

  {
    auto os = io::open_output(cfg.path("profiles.csv"));
    io::write_metadata(os, "profiles", config);
    os << "profile,cluster,volunteers,volunteer_share_pct,devoted_hours,devoted_share_pct";
    for (const char* m : kMetricNames) os << ",centroid_" << m;
    for (const auto& [m1, m2] : kMetricPairs) {
      const std::string pair = std::string(kMetricNames[static_cast<std::size_t>(m1)]) + "_" +
                               kMetricNames[static_cast<std::size_t>(m2)];
      os << ",rho_" << pair << ",p_" << pair;
    }
    os << '\n';
    for (const auto& imp : run.importance) {
      os << label_of.at(imp.cluster)->label.name() << ',' << imp.cluster << ',' << imp.volunteers << ','
         << io::format_double(imp.volunteer_share) << ',' << io::format_double(imp.devoted_hours) << ','
         << io::format_double(imp.devoted_share);
      for (std::size_t d = 0; d < kMetricCount; ++d) os << ',' << io::format_double(cl.centroids_raw(imp.cluster, d));
      for (const auto& pc : run.correlations) {
        if (pc.cluster != imp.cluster) continue;
        for (const auto& e : pc.entries) {
          os << ',' << (e.rho ? io::format_double(*e.rho) : "") << ',' << (e.p_value ? io::format_double(*e.p_value) : "");
        }
      }
      os << '\n';
    }
  }

  out << "k=" << cl.k << " avg_silhouette=" << io::format_double(cl.silhouette.value) << " ("
      << to_string(cl.silhouette.interpretation) << ")\n";
  for (const auto& imp : run.importance) {
    out << "  " << label_of.at(imp.cluster)->label.name() << ": " << imp.volunteers << " volunteers, "
        << io::format_double(imp.devoted_hours) << " h\n";
  }
  return run;
}

/// Generates a corpus from a spec file; writes log.csv and truth.csv.
inline synth::GeneratedCorpus run_synth(const RunConfig& cfg, std::ostream& out) {
  if (!cfg.seed) throw ConfigError("synth needs --seed");
  std::ifstream is(cfg.input);
  if (!is) throw ConfigError("cannot open corpus spec " + cfg.input);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("spec: invalid JSON: ") + e.what());
  }
  auto spec = synth::parse_corpus_spec(doc);
  spec.seed = *cfg.seed;
  detail::ensure_out_dir(cfg);
  auto corpus = synth::generate_corpus(spec, cfg.threads);

  nlohmann::ordered_json config{{"spec", cfg.input}, {"seed", spec.seed}};
  {
    auto os = io::open_output(cfg.path("log.csv"));
    io::write_metadata(os, "synth", config);
    synth::write_log(os, corpus.events);
  }
  {
    auto os = io::open_output(cfg.path("truth.csv"));
    io::write_metadata(os, "synth", config);
    synth::write_truth(os, corpus.volunteers);
  }
  out << "generated " << corpus.volunteers.size() << " volunteers, " << corpus.events.size() << " events\n";
  return corpus;
}

}  // namespace engage
