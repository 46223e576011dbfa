#include "tim/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "tim/core.hpp"

namespace tim {

namespace {

using nlohmann::json;

double getd(const json& j, const char* key) {
  const auto& v = j.at(key);
  // NaN serializes as null; map it back
  return v.is_null() ? std::numeric_limits<double>::quiet_NaN()
                     : v.get<double>();
}

Bank load_bank(const RunConfig& cfg) {
  if (cfg.bank_path.empty()) return generate_synthetic_bank(cfg.bank_cfg);
  if (cfg.bank_path.size() >= 4 &&
      cfg.bank_path.compare(cfg.bank_path.size() - 4, 4, ".csv") == 0)
    return read_embeddings_csv(cfg.bank_path);
  return read_embeddings(cfg.bank_path);
}

struct EpisodeArtifacts {
  bool want_trace = false;
  bool want_posteriors = false;
  ConvergenceTrace trace;
  std::string bound_json;
  Matrix query_probs;
  std::vector<int> truth;
};

EpisodeRecord solve_episode(const RunConfig& cfg, const Bank& bank, int index,
                            EpisodeArtifacts* art) {
  const auto t0 = std::chrono::steady_clock::now();
  const Task task = sample_episode(bank, cfg.episode, derive_seed(cfg.seed, index));

  EpisodeRecord rec;
  rec.index = index;
  Matrix final_weights;
  TraceRecord initial;
  const ConvergenceTrace* trace = nullptr;

  GdResult gd;
  AdmResult adm;
  if (cfg.solver == Solver::Gd) {
    if (cfg.variant != AblationVariant::Full)
      throw TimError("invalid_config",
                     "ablation variants require the alternating solver");
    if (cfg.enable_fixed_point_test)
      throw TimError("invalid_config",
                     "the fixed-point test requires the alternating solver");
    gd = run_tim_gd(task, cfg.hp);
    final_weights = gd.final_weights;
    initial = gd.initial_state;
    trace = &gd.trace;
    if (cfg.enable_hessian_check) {
      const Posteriors post = compute_posteriors(final_weights, task, cfg.hp.tau);
      rec.hessian_all_pass = hessian_check(final_weights, post, task).pass;
    }
  } else {
    AdmOptions opts;
    opts.hessian_check_each_iter = cfg.enable_hessian_check;
    adm = run_tim_adm(task, cfg.hp, cfg.variant, opts);
    final_weights = adm.final_weights;
    initial = adm.initial_state;
    trace = &adm.trace;
    if (cfg.enable_hessian_check) rec.hessian_all_pass = adm.hessian_all_pass;
    if (cfg.enable_fixed_point_test)
      rec.fixed_point = fixed_point_test(adm, task, cfg.hp, 1e-4);
  }

  const Posteriors post = compute_posteriors(final_weights, task, cfg.hp.tau);
  rec.accuracy = query_accuracy(post, task);
  rec.initial_mi = initial.mi_alpha1;
  rec.final_mi =
      trace->records.empty() ? initial.mi_alpha1 : trace->records.back().mi_alpha1;
  rec.final_loss =
      trace->records.empty() ? initial.loss : trace->records.back().loss;

  double prev = initial.loss;
  for (const TraceRecord& r : trace->records) {
    if (r.loss > prev + kDescentTol) {
      ++rec.descent_violations;
      rec.worst_violation = std::max(rec.worst_violation, r.loss - prev);
    }
    prev = r.loss;
  }

  if (cfg.enable_bound_audit) {
    const Vector prior =
        Vector::Constant(task.num_classes, 1.0 / task.num_classes);
    const BoundReport rep = proposition1_bound(post, task.query_labels, prior);
    rec.bound_audited = (rep.verdict == "holds" || rep.verdict == "violated");
    rec.bound_holds = (rep.verdict == "holds");
    if (art && art->want_trace) art->bound_json = bound_report_to_json(rep);
  }

  if (art) {
    if (art->want_trace) art->trace = *trace;
    if (art->want_posteriors) {
      const auto nq = static_cast<Eigen::Index>(task.query_indices.size());
      art->query_probs.resize(nq, task.num_classes);
      for (Eigen::Index i = 0; i < nq; ++i)
        art->query_probs.row(i) = post.probs.row(task.query_indices[i]);
      art->truth = task.query_labels;
    }
  }

  rec.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

std::string artifact_path(const std::string& dir, const char* stem, int index,
                          const char* ext) {
  char name[64];
  std::snprintf(name, sizeof(name), "%s_%03d.%s", stem, index, ext);
  return (std::filesystem::path(dir) / name).string();
}

}  // namespace

AggregateResult run_benchmark(const RunConfig& cfg) {
  if (cfg.episodes < 1)
    throw TimError("invalid_config", "episode count must be >= 1");
  validate_hyperparameters(cfg.hp);
  const Bank bank = load_bank(cfg);

  const int n = cfg.episodes;
  const int keep = std::max(0, std::min(cfg.emit_traces, n));
  std::vector<EpisodeRecord> records(n);
  std::vector<EpisodeArtifacts> artifacts(keep > 0 ? keep : 1);
  for (int i = 0; i < keep; ++i) artifacts[i].want_trace = true;
  const bool dump = !cfg.dump_posteriors_path.empty() || !cfg.out_dir.empty();
  artifacts[0].want_posteriors = dump;

  unsigned nthreads = cfg.num_threads > 0
                          ? static_cast<unsigned>(cfg.num_threads)
                          : std::max(1u, std::thread::hardware_concurrency());
  nthreads = std::min<unsigned>(nthreads, static_cast<unsigned>(n));

  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  auto worker = [&]() {
    while (!failed.load(std::memory_order_relaxed)) {
      const int i = next.fetch_add(1);
      if (i >= n) break;
      try {
        try {
          records[i] = solve_episode(cfg, bank, i,
                                     i < static_cast<int>(artifacts.size())
                                         ? &artifacts[i]
                                         : nullptr);
        } catch (const TimError& e) {
          throw TimError(e.code(),
                         "episode " + std::to_string(i) + ": " + e.what());
        } catch (const std::exception& e) {
          throw TimError("episode_failure",
                         "episode " + std::to_string(i) + ": " + e.what());
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
        failed.store(true, std::memory_order_relaxed);
        break;
      }
    }
  };
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    for (unsigned t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  AggregateResult agg;
  agg.episodes = std::move(records);
  double sum = 0.0;
  int mi_up = 0, fixed = 0, descent_bad = 0, audited = 0, bound_ok = 0;
  double secs = 0.0;
  for (const EpisodeRecord& r : agg.episodes) {
    sum += r.accuracy;
    if (r.final_mi > r.initial_mi) ++mi_up;
    if (r.fixed_point) ++fixed;
    if (r.descent_violations > 0) ++descent_bad;
    if (r.bound_audited) {
      ++audited;
      if (r.bound_holds) ++bound_ok;
    }
    secs += r.seconds;
  }
  agg.mean_accuracy = sum / n;
  if (n > 1) {
    double ss = 0.0;
    for (const EpisodeRecord& r : agg.episodes) {
      const double d = r.accuracy - agg.mean_accuracy;
      ss += d * d;
    }
    agg.ci95_half_width = 1.96 * std::sqrt(ss / (n - 1)) / std::sqrt(double(n));
  }
  agg.mi_growth_rate = static_cast<double>(mi_up) / n;
  agg.fixed_point_rate = static_cast<double>(fixed) / n;
  agg.descent_violation_episodes = descent_bad;
  agg.bound_audited_count = audited;
  agg.bound_audit_pass_rate = audited > 0 ? static_cast<double>(bound_ok) / audited : 0.0;
  agg.wall_clock_per_episode = secs / n;

  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    emit_report(agg, cfg,
                (std::filesystem::path(cfg.out_dir) / "report.json").string());
    for (int i = 0; i < keep; ++i) {
      emit_trace(artifacts[i].trace,
                 artifact_path(cfg.out_dir, "trace", i, "csv"));
      if (!artifacts[i].bound_json.empty()) {
        std::ofstream os(artifact_path(cfg.out_dir, "bound", i, "json"));
        os << artifacts[i].bound_json << "\n";
      }
    }
  }
  if (dump) {
    const std::string path =
        cfg.dump_posteriors_path.empty()
            ? (std::filesystem::path(cfg.out_dir) / "posteriors_000.csv").string()
            : cfg.dump_posteriors_path;
    Posteriors post;
    post.probs = artifacts[0].query_probs;
    post.query_indices.resize(post.probs.rows());
    for (Eigen::Index i = 0; i < post.probs.rows(); ++i)
      post.query_indices[static_cast<std::size_t>(i)] = static_cast<int>(i);
    post.query_marginal = post.probs.colwise().mean().transpose();
    write_posterior_dump(post, artifacts[0].truth, path);
  }
  return agg;
}

void emit_trace(const ConvergenceTrace& trace, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw TimError("io_error", "cannot open for writing: " + path);
  os << "iteration,loss,accuracy,mi_alpha1,weight_displacement\n";
  char buf[160];
  for (const TraceRecord& r : trace.records) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g\n", r.iteration,
                  r.loss, r.accuracy, r.mi_alpha1, r.weight_displacement);
    os << buf;
  }
  if (!os) throw TimError("io_error", "write failed: " + path);
}

namespace {

json record_to_json(const EpisodeRecord& r) {
  return json{{"index", r.index},
              {"accuracy", r.accuracy},
              {"initial_mi", r.initial_mi},
              {"final_mi", r.final_mi},
              {"final_loss", r.final_loss},
              {"fixed_point", r.fixed_point},
              {"hessian_all_pass", r.hessian_all_pass},
              {"descent_violations", r.descent_violations},
              {"worst_violation", r.worst_violation},
              {"bound_audited", r.bound_audited},
              {"bound_holds", r.bound_holds},
              {"seconds", r.seconds}};
}

}  // namespace

std::string config_to_json(const RunConfig& cfg) {
  json j;
  j["solver"] = solver_name(cfg.solver);
  j["variant"] = variant_name(cfg.variant);
  j["hyperparameters"] = {{"tau", cfg.hp.tau},
                          {"alpha", cfg.hp.alpha},
                          {"lambda", cfg.hp.lambda},
                          {"beta", cfg.hp.beta},
                          {"learning_rate", cfg.hp.learning_rate},
                          {"iterations", cfg.hp.resolved_iterations(
                                             cfg.solver == Solver::Adm)},
                          {"plain_sgd", cfg.hp.plain_sgd}};
  if (cfg.bank_path.empty()) {
    j["bank"] = {{"kind", "synthetic"},
                 {"num_classes_pool", cfg.bank_cfg.num_classes_pool},
                 {"samples_per_class", cfg.bank_cfg.samples_per_class},
                 {"dim", cfg.bank_cfg.dim},
                 {"class_concentration", cfg.bank_cfg.class_concentration},
                 {"rng_seed", cfg.bank_cfg.rng_seed}};
  } else {
    j["bank"] = {{"kind", "file"}, {"path", cfg.bank_path}};
  }
  if (cfg.episode.mode == EpisodeSpec::Mode::Standard) {
    j["episode"] = {{"mode", "standard"},
                    {"ways", cfg.episode.ways},
                    {"shots", cfg.episode.shots},
                    {"query_shots", cfg.episode.query_shots}};
  } else {
    j["episode"] = {{"mode", "random"},
                    {"ways_min", cfg.episode.ways_min},
                    {"ways_max", cfg.episode.ways_max},
                    {"support_min", cfg.episode.support_min},
                    {"support_max", cfg.episode.support_max},
                    {"query_budget", cfg.episode.query_budget}};
  }
  j["episodes"] = cfg.episodes;
  j["seed"] = cfg.seed;
  j["flags"] = {{"hessian_check", cfg.enable_hessian_check},
                {"bound_audit", cfg.enable_bound_audit},
                {"fixed_point_test", cfg.enable_fixed_point_test}};
  return j.dump();
}

void emit_report(const AggregateResult& result, const RunConfig& cfg,
                 const std::string& path) {
  json j;
  j["config"] = json::parse(config_to_json(cfg));
  j["aggregate"] = {
      {"mean_accuracy", result.mean_accuracy},
      {"ci95_half_width", result.ci95_half_width},
      {"episode_count", result.episodes.size()},
      {"mi_growth_rate", result.mi_growth_rate},
      {"fixed_point_rate", result.fixed_point_rate},
      {"descent_violation_episodes", result.descent_violation_episodes},
      {"bound_audited_count", result.bound_audited_count},
      {"bound_audit_pass_rate", result.bound_audit_pass_rate},
      {"wall_clock_per_episode", result.wall_clock_per_episode}};
  json eps = json::array();
  for (const EpisodeRecord& r : result.episodes) eps.push_back(record_to_json(r));
  j["episodes"] = std::move(eps);

  std::ofstream os(path);
  if (!os) throw TimError("io_error", "cannot open for writing: " + path);
  os << j.dump(2) << "\n";
  if (!os) throw TimError("io_error", "write failed: " + path);
}

AggregateResult read_report(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw TimError("io_error", "cannot open: " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw TimError("format_error", std::string("bad report JSON: ") + e.what());
  }
  try {
    AggregateResult result;
    const json& a = j.at("aggregate");
    result.mean_accuracy = getd(a, "mean_accuracy");
    result.ci95_half_width = getd(a, "ci95_half_width");
    result.mi_growth_rate = getd(a, "mi_growth_rate");
    result.fixed_point_rate = getd(a, "fixed_point_rate");
    result.descent_violation_episodes = a.at("descent_violation_episodes").get<int>();
    result.bound_audited_count = a.at("bound_audited_count").get<int>();
    result.bound_audit_pass_rate = getd(a, "bound_audit_pass_rate");
    result.wall_clock_per_episode = getd(a, "wall_clock_per_episode");
    for (const json& e : j.at("episodes")) {
      EpisodeRecord r;
      r.index = e.at("index").get<int>();
      r.accuracy = getd(e, "accuracy");
      r.initial_mi = getd(e, "initial_mi");
      r.final_mi = getd(e, "final_mi");
      r.final_loss = getd(e, "final_loss");
      r.fixed_point = e.at("fixed_point").get<bool>();
      r.hessian_all_pass = e.at("hessian_all_pass").get<bool>();
      r.descent_violations = e.at("descent_violations").get<int>();
      r.worst_violation = getd(e, "worst_violation");
      r.bound_audited = e.at("bound_audited").get<bool>();
      r.bound_holds = e.at("bound_holds").get<bool>();
      r.seconds = getd(e, "seconds");
      result.episodes.push_back(r);
    }
    return result;
  } catch (const json::exception& e) {
    throw TimError("format_error",
                   std::string("missing report field: ") + e.what());
  }
}

void write_posterior_dump(const Posteriors& post, const std::vector<int>& truth,
                          const std::string& path) {
  const std::size_t nq = post.query_indices.size();
  if (truth.size() != nq)
    throw TimError("invalid_config",
                   "truth labels must match the query row count");
  std::ofstream os(path);
  if (!os) throw TimError("io_error", "cannot open for writing: " + path);
  const Eigen::Index k = post.probs.cols();
  os << "truth";
  for (Eigen::Index j = 0; j < k; ++j) os << ",p" << j;
  os << "\n";
  char buf[32];
  for (std::size_t i = 0; i < nq; ++i) {
    os << truth[i];
    for (Eigen::Index j = 0; j < k; ++j) {
      std::snprintf(buf, sizeof(buf), ",%.17g", post.probs(post.query_indices[i], j));
      os << buf;
    }
    os << "\n";
  }
  if (!os) throw TimError("io_error", "write failed: " + path);
}

PosteriorDump read_posterior_dump(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw TimError("io_error", "cannot open: " + path);
  std::string line;
  if (!std::getline(is, line) || line.rfind("truth", 0) != 0)
    throw TimError("format_error", "posterior dump must start with a 'truth' header");
  const long k = std::count(line.begin(), line.end(), ',');
  if (k < 2) throw TimError("format_error", "posterior dump needs >= 2 classes");

  std::vector<int> truth;
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string cell;
    if (!std::getline(ss, cell, ','))
      throw TimError("format_error", "short posterior dump row");
    int label = 0;
    double row_sum = 0.0;
    std::vector<double> row;
    try {
      label = std::stoi(cell);
      for (long j = 0; j < k; ++j) {
        if (!std::getline(ss, cell, ','))
          throw TimError("format_error", "short posterior dump row");
        const double p = std::stod(cell);
        if (p < -1e-12 || p > 1.0 + 1e-12)
          throw TimError("format_error", "posterior outside [0,1]");
        row.push_back(p);
        row_sum += p;
      }
    } catch (const std::logic_error&) {
      throw TimError("format_error", "bad number in posterior dump row " +
                                         std::to_string(rows.size() + 1));
    }
    if (label < 0 || label >= k)
      throw TimError("format_error", "truth label out of range");
    if (std::abs(row_sum - 1.0) > 1e-6)
      throw TimError("format_error", "posterior row does not sum to 1");
    truth.push_back(label);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw TimError("format_error", "posterior dump has no rows");

  PosteriorDump dump;
  dump.truth = std::move(truth);
  dump.probs.resize(static_cast<Eigen::Index>(rows.size()), k);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (long j = 0; j < k; ++j)
      dump.probs(static_cast<Eigen::Index>(i), j) = rows[i][j];
  return dump;
}

}  // namespace tim
