// engage: volunteer engagement profiling from task-execution logs.
//
//   engage validate LOG
//   engage metrics LOG --out-dir DIR [--start D --end D --threshold auto|fixed:30m ...]
//   engage scan-k METRICS --out-dir DIR [--k-min 2 --k-max 10 --seed N]
//   engage analyze METRICS --k 5 --seed N --out-dir DIR
//   engage synth SPEC.json --seed N --out-dir DIR

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "engage/engage.hpp"

namespace {

std::optional<engage::Date> date_flag(const std::string& text, const char* flag) {
  if (text.empty()) return std::nullopt;
  auto d = engage::parse_date(text);
  if (!d) throw engage::ConfigError(std::string(flag) + ": expected YYYY-MM-DD, got '" + text + "'");
  return d;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Volunteer engagement profiling from task-execution logs"};
  app.require_subcommand(1);

  engage::RunConfig cfg;
  std::string start, end, v_sd = "population";
  std::uint64_t seed = 0;
  std::size_t k = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out-dir", cfg.out_dir, "Output directory")->default_val(".");
    sub->add_option("--threads", cfg.threads, "Worker threads (results do not depend on it)")->default_val(1)
        ->check(CLI::Range(1u, 256u));
  };

  auto* validate = app.add_subcommand("validate", "Parse a log and report accepted/rejected rows");
  validate->add_option("log", cfg.input, "Task-execution log (CSV or TSV)")->required();

  auto* metrics = app.add_subcommand("metrics", "Sessions and engagement metrics per volunteer");
  metrics->add_option("log", cfg.input, "Task-execution log (CSV or TSV)")->required();
  metrics->add_option("--start", start, "Project start date override (YYYY-MM-DD)");
  metrics->add_option("--end", end, "Project end date override (YYYY-MM-DD)");
  metrics->add_option("--join-quantile", cfg.policy.join_quantile, "Eligibility cutoff as a fraction of the window")
      ->default_val(0.75);
  metrics->add_option("--min-active-days", cfg.policy.min_active_days, "Minimum distinct active days")->default_val(2);
  metrics->add_option("--threshold", cfg.threshold, "Session threshold: auto | fixed:<seconds|Nm|Nh>")
      ->default_val("auto");
  metrics->add_option("--v-sd", v_sd, "Standard deviation convention for v")
      ->check(CLI::IsMember({"population", "sample"}))
      ->default_val("population");
  metrics->add_option("--seed", seed, "Recorded in outputs");
  metrics->add_flag("--sessions", cfg.write_sessions, "Also write sessions.csv");
  add_common(metrics);

  auto* scan = app.add_subcommand("scan-k", "WSS and average silhouette across a range of k");
  scan->add_option("metrics", cfg.input, "metrics.csv from the metrics stage")->required();
  scan->add_option("--k-min", cfg.k_min, "Smallest k")->default_val(2);
  scan->add_option("--k-max", cfg.k_max, "Largest k")->default_val(10);
  scan->add_option("--seed", seed, "Seed for hierarchical subsampling")->default_val(0);
  scan->add_option("--hier-cap", cfg.hier_cap, "Maximum rows in the hierarchical stage")->default_val(10000);
  scan->add_option("--restarts", cfg.restarts, "Extra seeded k-means++ starts besides the hierarchical one")
      ->default_val(10);
  scan->add_flag("!--no-hartigan", cfg.hartigan, "Skip the Hartigan transfer passes after Lloyd");
  add_common(scan);

  auto* analyze = app.add_subcommand("analyze", "Cluster at a fixed k and report engagement profiles");
  analyze->add_option("metrics", cfg.input, "metrics.csv from the metrics stage")->required();
  analyze->add_option("--k", k, "Number of clusters")->required();
  analyze->add_option("--seed", seed, "Seed (recorded in every output)")->required();
  analyze->add_option("--hier-cap", cfg.hier_cap, "Maximum rows in the hierarchical stage")->default_val(10000);
  analyze->add_option("--restarts", cfg.restarts, "Extra seeded k-means++ starts besides the hierarchical one")
      ->default_val(10);
  analyze->add_flag("!--no-hartigan", cfg.hartigan, "Skip the Hartigan transfer passes after Lloyd");
  analyze->add_flag("--exact-spearman", cfg.exact_spearman, "Exact permutation p-values for clusters with n < 12");
  add_common(analyze);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic log from archetypes");
  synth->add_option("spec", cfg.input, "Corpus spec (JSON)")->required();
  synth->add_option("--seed", seed, "Corpus seed")->required();
  add_common(synth);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(engage::ExitCode::kUsage);
  }

  try {
    cfg.start = date_flag(start, "--start");
    cfg.end = date_flag(end, "--end");
    cfg.v_sd = v_sd == "sample" ? engage::SdConvention::kSample : engage::SdConvention::kPopulation;
    if (metrics->parsed()) {
      if (metrics->count("--seed")) cfg.seed = seed;
      engage::run_metrics(cfg, std::cout);
    } else if (validate->parsed()) {
      return engage::run_validate(cfg, std::cout, std::cerr);
    } else if (scan->parsed()) {
      cfg.seed = seed;
      engage::run_scan_k(cfg, std::cout);
    } else if (analyze->parsed()) {
      cfg.seed = seed;
      cfg.k = k;
      engage::run_analyze(cfg, std::cout);
    } else if (synth->parsed()) {
      cfg.seed = seed;
      engage::run_synth(cfg, std::cout);
    }
  } catch (const engage::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return static_cast<int>(engage::ExitCode::kInternal);
  }
  return 0;
}
