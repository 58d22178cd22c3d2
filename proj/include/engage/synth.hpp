#pragma once

// Seeded synthetic task-execution logs built from engagement archetypes.
// Archetypes are specified in metric space (targets for a and r, an
// irregularity knob for v) and realised constructively, so every generated
// volunteer carries exact bookkeeping of its intended days and sessions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "engage/error.hpp"
#include "engage/ingest.hpp"
#include "engage/parallel.hpp"
#include "engage/random.hpp"
#include "engage/time.hpp"
#include "json.hpp"

namespace engage::synth {

/// Constant, uniform, or normal truncated to [min, max].
struct Distribution {
  enum class Kind { kConstant, kUniform, kTruncatedNormal } kind = Kind::kConstant;
  double a = 0.0;  // value | min | mean
  double b = 0.0;  // -     | max | sd
  double lo = 0.0;
  double hi = 0.0;

  static Distribution constant(double v) { return {Kind::kConstant, v, 0.0, v, v}; }
  static Distribution uniform(double lo, double hi) { return {Kind::kUniform, lo, hi, lo, hi}; }
  static Distribution normal(double mean, double sd, double lo, double hi) {
    return {Kind::kTruncatedNormal, mean, sd, lo, hi};
  }

  double lower() const { return lo; }
  double upper() const { return hi; }

  double sample(Rng& rng) const {
    switch (kind) {
      case Kind::kConstant: return a;
      case Kind::kUniform: return rng.uniform(a, b);
      case Kind::kTruncatedNormal:
        for (int i = 0; i < 1000; ++i) {
          const double x = rng.normal(a, b);
          if (x >= lo && x <= hi) return x;
        }
        return std::clamp(a, lo, hi);
    }
    return a;
  }
};

struct ArchetypeSpec {
  std::string name;
  std::int64_t count = 0;
  std::int64_t join_day_min = 0;  // days after the window start
  std::int64_t join_day_max = 0;
  Distribution target_a = Distribution::constant(0.5);
  Distribution target_r = Distribution::constant(0.5);
  Distribution sessions_per_active_day = Distribution::constant(1.0);
  Distribution session_length_minutes = Distribution::constant(20.0);
  Distribution intra_gap_seconds = Distribution::uniform(10.0, 120.0);
  double gap_irregularity = 0.0;  // log-sd of the return-gap weights; 0 spaces active days evenly
};

struct CorpusSpec {
  std::string project_id = "synthetic";
  Date start;
  Date end;
  std::uint64_t seed = 0;
  std::vector<ArchetypeSpec> archetypes;

  std::int64_t window_days() const { return days_between(start, end) + 1; }
};

/// Layout constants: sessions live in [01:00, 23:00) UTC and are at least two
/// hours apart, so every inter-session gap exceeds every intra-session gap by
/// more than 1.5 orders of magnitude.
inline constexpr std::int64_t kDayOpen = 3600;
inline constexpr std::int64_t kDayClose = 23 * 3600;
inline constexpr std::int64_t kMinInterSessionGap = 7200;
inline constexpr double kMaxIntraGap = 200.0;
inline constexpr int kMaxSessionsPerDay = 6;
inline constexpr int kMaxAttempts = 100;

struct PlannedSession {
  Instant start;
  Instant end;
  std::size_t event_count = 0;
};

struct GeneratedVolunteer {
  std::string volunteer_id;
  std::string archetype;
  std::vector<TaskEvent> events;  // time ordered
  std::vector<Date> active_days;
  std::vector<double> planned_hours;  // raw session spans per active day
  std::vector<std::int64_t> return_gaps;
  std::vector<PlannedSession> sessions;
  std::vector<std::int64_t> intra_gaps;
  std::vector<std::int64_t> inter_gaps;
  std::int64_t window_days = 0;  // w from the join day to the window end
};

inline std::string volunteer_name(std::size_t index) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "v%06zu", index);
  return buf;
}

namespace detail {

// Splits `total` into `parts` positive integers proportional to `weights`
// (largest remainder, ties to the lower index).
inline std::vector<std::int64_t> apportion(std::int64_t total, const std::vector<double>& weights) {
  const std::size_t parts = weights.size();
  std::vector<std::int64_t> out(parts, 1);
  const std::int64_t extra = total - static_cast<std::int64_t>(parts);
  if (extra <= 0) return out;
  double wsum = 0.0;
  for (double w : weights) wsum += w;
  std::vector<std::pair<double, std::size_t>> remainders;
  std::int64_t assigned = 0;
  for (std::size_t i = 0; i < parts; ++i) {
    const double quota = static_cast<double>(extra) * weights[i] / wsum;
    const auto whole = static_cast<std::int64_t>(std::floor(quota));
    out[i] += whole;
    assigned += whole;
    remainders.emplace_back(quota - static_cast<double>(whole), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& l, const auto& r) { return l.first > r.first; });
  for (std::int64_t i = 0; i < extra - assigned; ++i) ++out[remainders[static_cast<std::size_t>(i) % parts].second];
  return out;
}

}  // namespace detail

/// One volunteer of an archetype. Infeasible draws are retried up to 100 times.
inline GeneratedVolunteer generate_volunteer(const ArchetypeSpec& spec, const CorpusSpec& corpus, std::size_t index,
                                             Rng& rng, const std::string& project_id = "synthetic") {
  const std::int64_t window_days = corpus.window_days();
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const std::int64_t join = rng.uniform_int(spec.join_day_min, spec.join_day_max);
    const std::int64_t w = window_days - join;
    if (w < 2) continue;
    const double r = spec.target_r.sample(rng);
    const std::int64_t span = std::clamp<std::int64_t>(std::llround(r * static_cast<double>(w)), 2, w);
    const double a = spec.target_a.sample(rng);
    const std::int64_t active = std::clamp<std::int64_t>(std::llround(a * static_cast<double>(span)), 2, span);

    std::vector<double> weights(static_cast<std::size_t>(active - 1));
    for (auto& x : weights) x = std::exp(spec.gap_irregularity * rng.normal());
    const auto gaps = detail::apportion(span - 1, weights);

    GeneratedVolunteer gv;
    gv.volunteer_id = volunteer_name(index);
    gv.archetype = spec.name;
    gv.window_days = w;
    gv.return_gaps = gaps;
    std::int64_t offset = join;
    gv.active_days.push_back(corpus.start + std::chrono::days{offset});
    for (auto g : gaps) {
      offset += g;
      gv.active_days.push_back(corpus.start + std::chrono::days{offset});
    }

    std::size_t task = 0;
    std::optional<Instant> last_event;
    for (const Date day : gv.active_days) {
      const int wanted = std::clamp(static_cast<int>(std::llround(spec.sessions_per_active_day.sample(rng))), 1,
                                    kMaxSessionsPerDay);
      // Event offsets within each session, relative to the session start.
      std::vector<std::vector<std::int64_t>> layouts;
      std::int64_t used = 0;
      for (int s = 0; s < wanted; ++s) {
        const double length = std::max(0.0, spec.session_length_minutes.sample(rng)) * 60.0;
        std::vector<std::int64_t> offs{0};
        for (;;) {
          const auto g = std::max<std::int64_t>(1, std::llround(spec.intra_gap_seconds.sample(rng)));
          if (static_cast<double>(offs.back() + g) > length) break;
          offs.push_back(offs.back() + g);
        }
        const std::int64_t need = offs.back() + (layouts.empty() ? 0 : kMinInterSessionGap);
        if (used + need > kDayClose - kDayOpen) break;
        used += need;
        layouts.push_back(std::move(offs));
      }
      if (layouts.empty()) layouts.push_back({0});
      // Spread the free time of the day over the slots around the sessions.
      const std::int64_t slack = (kDayClose - kDayOpen) - used;
      std::vector<double> cuts(layouts.size() + 1);
      double csum = 0.0;
      for (auto& c : cuts) {
        c = -std::log(1.0 - rng.uniform());
        csum += c;
      }
      std::int64_t cursor = kDayOpen;
      double acc = 0.0;
      std::int64_t placed_slack = 0;
      double hours = 0.0;
      for (std::size_t s = 0; s < layouts.size(); ++s) {
        acc += cuts[s];
        const auto target = static_cast<std::int64_t>(std::floor(static_cast<double>(slack) * acc / csum));
        cursor += target - placed_slack;
        placed_slack = target;
        if (s > 0) cursor += kMinInterSessionGap;
        const Instant start = Instant{day} + std::chrono::seconds{cursor};
        PlannedSession ps{start, start + std::chrono::seconds{layouts[s].back()}, layouts[s].size()};
        for (std::size_t e = 0; e < layouts[s].size(); ++e) {
          const Instant t = start + std::chrono::seconds{layouts[s][e]};
          if (last_event) {
            const auto g = (t - *last_event).count();
            (e == 0 ? gv.inter_gaps : gv.intra_gaps).push_back(g);
          }
          last_event = t;
          gv.events.push_back({project_id, gv.volunteer_id + "-" + std::to_string(task++), gv.volunteer_id, t});
        }
        hours += static_cast<double>(layouts[s].back()) / 3600.0;
        cursor += layouts[s].back();
        gv.sessions.push_back(ps);
      }
      gv.planned_hours.push_back(hours);
    }
    return gv;
  }
  throw DataError("archetype '" + spec.name + "': no feasible volunteer after " + std::to_string(kMaxAttempts) +
                  " attempts (window too short for the join range?)");
}

/// Throws ConfigError naming the offending field.
inline void validate(const CorpusSpec& spec) {
  if (spec.end < spec.start) throw ConfigError("window: end precedes start");
  if (spec.window_days() < 2) throw ConfigError("window: must span at least two days");
  if (spec.archetypes.empty()) throw ConfigError("archetypes: must not be empty");
  for (std::size_t i = 0; i < spec.archetypes.size(); ++i) {
    const auto& a = spec.archetypes[i];
    const std::string at = "archetypes[" + std::to_string(i) + "].";
    auto within = [&](const Distribution& d, const std::string& field, double lo, double hi, bool open_lo) {
      if ((open_lo ? d.lower() <= lo : d.lower() < lo) || d.upper() > hi || d.lower() > d.upper()) {
        throw ConfigError(at + field + ": bounds must lie within " + (open_lo ? "(" : "[") + std::to_string(lo) +
                          ", " + std::to_string(hi) + "]");
      }
    };
    if (a.name.empty()) throw ConfigError(at + "name: must not be empty");
    if (a.count < 1) throw ConfigError(at + "count: must be >= 1");
    if (a.join_day_min < 0 || a.join_day_max < a.join_day_min || a.join_day_max > spec.window_days() - 2) {
      throw ConfigError(at + "join_day_range: must satisfy 0 <= min <= max <= window_days - 2");
    }
    within(a.target_a, "target_a", 0.0, 1.0, true);
    within(a.target_r, "target_r", 0.0, 1.0, true);
    within(a.sessions_per_active_day, "sessions_per_active_day", 1.0, kMaxSessionsPerDay, false);
    within(a.session_length_minutes, "session_length_minutes", 0.0, 600.0, false);
    within(a.intra_gap_seconds, "intra_gap_seconds", 1.0, kMaxIntraGap, false);
    if (!(a.gap_irregularity >= 0.0)) throw ConfigError(at + "gap_irregularity: must be >= 0");
  }
}

struct GeneratedCorpus {
  std::vector<GeneratedVolunteer> volunteers;  // in generation order
  std::vector<TaskEvent> events;               // all volunteers, shuffled
};

/// Volunteers are generated independently from per-volunteer substreams of
/// the corpus seed, so the output does not depend on `threads`.
inline GeneratedCorpus generate_corpus(const CorpusSpec& spec, unsigned threads = 1) {
  validate(spec);
  std::vector<std::size_t> archetype_of;
  for (std::size_t a = 0; a < spec.archetypes.size(); ++a) {
    archetype_of.insert(archetype_of.end(), static_cast<std::size_t>(spec.archetypes[a].count), a);
  }
  GeneratedCorpus out;
  out.volunteers.resize(archetype_of.size());
  parallel_for(archetype_of.size(), threads, [&](std::size_t i) {
    Rng rng = Rng::substream(spec.seed, i);
    const auto& arch = spec.archetypes[archetype_of[i]];
    try {
      out.volunteers[i] = generate_volunteer(arch, spec, i, rng, spec.project_id);
    } catch (const Error& e) {
      throw DataError("volunteer " + std::to_string(i) + ": " + e.what());
    }
  });
  for (const auto& v : out.volunteers) out.events.insert(out.events.end(), v.events.begin(), v.events.end());
  Rng shuffler = Rng::substream(spec.seed, ~std::uint64_t{0});
  shuffler.shuffle(out.events);
  return out;
}

inline void write_log(std::ostream& os, const std::vector<TaskEvent>& events) {
  os << "project_id,task_id,user_id,datetime\n";
  for (const auto& e : events) {
    os << e.project_id << ',' << e.task_id << ',' << e.volunteer_id << ',' << format_instant(e.timestamp) << '\n';
  }
}

inline void write_truth(std::ostream& os, const std::vector<GeneratedVolunteer>& volunteers) {
  os << "volunteer_id,archetype\n";
  for (const auto& v : volunteers) os << v.volunteer_id << ',' << v.archetype << '\n';
}

namespace detail {

inline Distribution parse_distribution(const nlohmann::json& j, const std::string& path) {
  if (j.is_number()) return Distribution::constant(j.get<double>());
  if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) {
    throw ConfigError(path + ": expected a number or an object with a \"type\"");
  }
  auto num = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_number()) throw ConfigError(path + "." + key + ": expected a number");
    return j[key].get<double>();
  };
  const auto type = j["type"].get<std::string>();
  if (type == "constant") return Distribution::constant(num("value"));
  if (type == "uniform") {
    const double lo = num("min"), hi = num("max");
    if (hi < lo) throw ConfigError(path + ": max < min");
    return Distribution::uniform(lo, hi);
  }
  if (type == "normal") {
    const double lo = num("min"), hi = num("max"), sd = num("sd");
    if (hi < lo) throw ConfigError(path + ": max < min");
    if (!(sd > 0.0)) throw ConfigError(path + ".sd: must be positive");
    return Distribution::normal(num("mean"), sd, lo, hi);
  }
  throw ConfigError(path + ".type: unknown distribution '" + type + "'");
}

}  // namespace detail

/// Reads a corpus spec document. The seed may be absent here and supplied separately.
inline CorpusSpec parse_corpus_spec(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("spec: expected a JSON object");
  CorpusSpec spec;
  if (j.contains("project_id")) {
    if (!j["project_id"].is_string()) throw ConfigError("project_id: expected a string");
    spec.project_id = j["project_id"].get<std::string>();
  }
  if (!j.contains("window") || !j["window"].is_object()) throw ConfigError("window: expected an object");
  for (const char* key : {"start", "end"}) {
    const auto& v = j["window"].contains(key) ? j["window"][key] : nlohmann::json();
    auto d = v.is_string() ? parse_date(v.get<std::string>()) : std::nullopt;
    if (!d) throw ConfigError(std::string("window.") + key + ": expected a YYYY-MM-DD date");
    (std::string(key) == "start" ? spec.start : spec.end) = *d;
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw ConfigError("seed: expected a non-negative integer");
    spec.seed = j["seed"].get<std::uint64_t>();
  }
  if (!j.contains("archetypes") || !j["archetypes"].is_array()) throw ConfigError("archetypes: expected an array");
  const auto& arr = j["archetypes"];
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string at = "archetypes[" + std::to_string(i) + "]";
    const auto& a = arr[i];
    if (!a.is_object()) throw ConfigError(at + ": expected an object");
    ArchetypeSpec s;
    if (!a.contains("name") || !a["name"].is_string()) throw ConfigError(at + ".name: expected a string");
    s.name = a["name"].get<std::string>();
    if (!a.contains("count") || !a["count"].is_number_integer()) throw ConfigError(at + ".count: expected an integer");
    s.count = a["count"].get<std::int64_t>();
    if (!a.contains("join_day_range") || !a["join_day_range"].is_array() || a["join_day_range"].size() != 2 ||
        !a["join_day_range"][0].is_number_integer() || !a["join_day_range"][1].is_number_integer()) {
      throw ConfigError(at + ".join_day_range: expected [min_day, max_day]");
    }
    s.join_day_min = a["join_day_range"][0].get<std::int64_t>();
    s.join_day_max = a["join_day_range"][1].get<std::int64_t>();
    auto dist = [&](const char* key, Distribution& out) {
      if (a.contains(key)) out = detail::parse_distribution(a[key], at + "." + key);
    };
    if (!a.contains("target_a") || !a.contains("target_r")) throw ConfigError(at + ": target_a and target_r are required");
    dist("target_a", s.target_a);
    dist("target_r", s.target_r);
    dist("sessions_per_active_day", s.sessions_per_active_day);
    dist("session_length_minutes", s.session_length_minutes);
    dist("intra_gap_seconds", s.intra_gap_seconds);
    if (a.contains("gap_irregularity")) {
      if (!a["gap_irregularity"].is_number()) throw ConfigError(at + ".gap_irregularity: expected a number");
      s.gap_irregularity = a["gap_irregularity"].get<double>();
    }
    spec.archetypes.push_back(std::move(s));
  }
  return spec;
}

}  // namespace engage::synth
