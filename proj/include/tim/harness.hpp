#pragma once

#include "tim/bounds.hpp"
#include "tim/solver_adm.hpp"
#include "tim/solver_gd.hpp"
#include "tim/tasks.hpp"
#include "tim/types.hpp"

namespace tim {

struct RunConfig {
  Solver solver = Solver::Adm;
  AblationVariant variant = AblationVariant::Full;
  Hyperparameters hp;
  SyntheticConfig bank_cfg;   // used when bank_path is empty
  std::string bank_path;      // embedding file (binary, or .csv)
  EpisodeSpec episode;
  int episodes = 1000;
  std::uint64_t seed = 0;
  std::string out_dir;        // empty = no artifacts written
  bool enable_hessian_check = false;
  bool enable_bound_audit = false;
  bool enable_fixed_point_test = false;
  int num_threads = 0;        // 0 = hardware concurrency
  int emit_traces = 1;        // traces written for the first N episodes
  std::string dump_posteriors_path;  // episode-0 query posteriors CSV
};

struct EpisodeRecord {
  int index = 0;
  double accuracy = 0.0;
  double initial_mi = 0.0;
  double final_mi = 0.0;
  double final_loss = 0.0;
  bool fixed_point = false;          // only meaningful when the test ran
  bool hessian_all_pass = true;
  int descent_violations = 0;        // trace loss increases beyond 1e-9
  double worst_violation = 0.0;
  bool bound_audited = false;        // preconditions held and bound asserted
  bool bound_holds = false;
  double seconds = 0.0;
};

struct AggregateResult {
  double mean_accuracy = 0.0;
  double ci95_half_width = 0.0;  // 1.96 * stddev / sqrt(n)
  std::vector<EpisodeRecord> episodes;
  double mi_growth_rate = 0.0;       // fraction with final MI > initial MI
  double fixed_point_rate = 0.0;     // fraction passing the fixed-point test
  int descent_violation_episodes = 0;
  int bound_audited_count = 0;
  double bound_audit_pass_rate = 0.0;  // over audited episodes
  double wall_clock_per_episode = 0.0;  // seconds; excluded from determinism
};

inline constexpr double kDescentTol = 1e-9;

// Runs cfg.episodes independent episodes (deterministically seeded from
// cfg.seed regardless of thread count) and aggregates. Writes report.json,
// trace CSVs, and the optional posterior dump when cfg.out_dir is set.
AggregateResult run_benchmark(const RunConfig& cfg);

// Trace CSV with header: iteration,loss,accuracy,mi_alpha1,weight_displacement
void emit_trace(const ConvergenceTrace& trace, const std::string& path);

// Full AggregateResult + config as a JSON report.
void emit_report(const AggregateResult& result, const RunConfig& cfg,
                 const std::string& path);

// Reader used by tests and the audit tooling; timing fields are parsed too.
AggregateResult read_report(const std::string& path);

std::string config_to_json(const RunConfig& cfg);

// Posterior dump CSV (header "truth,p0,...,p{K-1}") for `tim audit`.
void write_posterior_dump(const Posteriors& post, const std::vector<int>& truth,
                          const std::string& path);
struct PosteriorDump {
  Matrix probs;             // query rows only
  std::vector<int> truth;
};
PosteriorDump read_posterior_dump(const std::string& path);

}  // namespace tim
