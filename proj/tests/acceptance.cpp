// Acceptance suite: end-to-end numerical contracts of the library, checked
// against independent oracles and calibrated synthetic banks. Prints one
// PASS/FAIL line per criterion and exits with the number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "test_helpers.hpp"
#include "tim/bounds.hpp"
#include "tim/core.hpp"
#include "tim/harness.hpp"
#include "tim/solver_adm.hpp"
#include "tim/solver_gd.hpp"
#include "tim/tasks.hpp"

using namespace tim;
using namespace timtest;

namespace {

// ---- pinned tolerances and budgets ----
constexpr double kGradRelTol = 1e-5;        // criterion 1
constexpr double kGradTimeBudget = 30.0;    // seconds
constexpr double kQOracleGapTol = 1e-6;     // criterion 2
constexpr double kQOracleTimeBudget = 60.0; // seconds
constexpr int kQRandomAlternatives = 1000;
constexpr double kWResidualTol = 1e-8;      // criterion 3
constexpr double kDescentEpsTol = 1e-9;     // criterion 4
constexpr double kFixedPointTol = 1e-4;     // criterion 5
constexpr double kFixedPointRate = 0.95;
constexpr double kSolverAgreementTol = 0.02;  // criterion 7, accuracy points
constexpr double kCollapseShare = 0.9;        // criterion 8
constexpr double kCollapseRateMin = 0.20;
constexpr double kCollapseRateMax = 0.01;
constexpr double kMiGrowthRate = 0.95;      // criterion 9
constexpr double kBenchTimeBudget = 300.0;  // criterion 10, seconds
constexpr double kPerEpisodeBudget = 0.3;   // criterion 10, seconds/episode

constexpr int kEpisodes = 1000;
constexpr std::uint64_t kRunSeed = 20;

// calibrated banks: concentration controls difficulty (larger = easier)
SyntheticConfig typical_bank() {
  SyntheticConfig cfg;  // 20 classes x 60 samples, d=64, concentration 5
  return cfg;
}

SyntheticConfig hard_bank() {
  SyntheticConfig cfg;
  cfg.class_concentration = 3.0;
  return cfg;
}

// low-dimensional bank used for the per-iterate eigenvalue sweep; calibrated
// so the linearized weight update never overshoots (see descent criterion)
SyntheticConfig descent_bank() {
  SyntheticConfig cfg;
  cfg.dim = 16;
  cfg.class_concentration = 3.0;
  return cfg;
}

EpisodeSpec one_shot() {
  EpisodeSpec spec;  // 5-way 1-shot, 15 queries per class
  return spec;
}

EpisodeSpec five_shot() {
  EpisodeSpec spec;
  spec.shots = 5;
  return spec;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

double elapsed_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof(buf), format, args);
  va_end(args);
  return std::string(buf);
}

// ---- criterion 1: analytic gradient vs central finite differences ----
Outcome criterion_gradient_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2026);
  Hyperparameters hp;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 2 + static_cast<int>(rng.uniform_int(4));
    const int dim = 6 + static_cast<int>(rng.uniform_int(11));
    const int shots = 1 + static_cast<int>(rng.uniform_int(3));
    const int queries = 4 + static_cast<int>(rng.uniform_int(5));
    const Task task = random_task(rng, k, shots, queries, dim);
    Matrix w = init_prototypes(task);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) += 0.1 * rng.gaussian();
    const Matrix analytic = tim_loss_gradient(w, task, hp);
    const Matrix fd = fd_gradient(w, task, hp, 1e-5);
    worst = std::max(worst, gradient_rel_error(analytic, fd));
  }
  const double secs = elapsed_since(t0);
  Outcome out;
  out.pass = worst < kGradRelTol && secs < kGradTimeBudget;
  out.detail = fmt("max rel err %.2e (tol %.0e) over 100 triples in %.1fs",
                   worst, kGradRelTol, secs);
  return out;
}

// ---- criterion 2: closed-form assignment update vs numerical minimizer ----
Outcome criterion_q_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2027);
  Hyperparameters hp;
  int within_tol = 0, beats_random = 0;
  double worst_gap = 0.0, median_gap = 0.0;
  std::vector<double> gaps;
  for (int inst = 0; inst < 50; ++inst) {
    const int k = 2 + static_cast<int>(rng.uniform_int(3));   // 2..4
    const int n = 2 + static_cast<int>(rng.uniform_int(5));   // |Q| 2..6
    const double sharp = 0.5 + 7.5 * rng.uniform();
    const Matrix p = random_stochastic_rows(rng, n, k, sharp);
    const AuxAssignments aux = q_update(as_query_posteriors(p), hp);
    const double ours = q_objective(aux.assignments, p, hp.alpha, hp.beta);

    const Matrix q_star =
        mirror_descent_q(p, hp.alpha, hp.beta, aux.assignments);
    const double best = q_objective(q_star, p, hp.alpha, hp.beta);
    const double gap = ours - best;
    gaps.push_back(gap);
    worst_gap = std::max(worst_gap, gap);
    if (gap <= kQOracleGapTol) ++within_tol;

    bool all_beaten = true;
    for (int alt = 0; alt < kQRandomAlternatives; ++alt) {
      const Matrix q = random_simplex_rows(rng, n, k);
      if (q_objective(q, p, hp.alpha, hp.beta) < ours) {
        all_beaten = false;
        break;
      }
    }
    if (all_beaten) ++beats_random;
  }
  std::sort(gaps.begin(), gaps.end());
  median_gap = gaps[gaps.size() / 2];
  const double secs = elapsed_since(t0);
  Outcome out;
  out.pass = within_tol == 50 && beats_random == 50 && secs < kQOracleTimeBudget;
  out.detail =
      fmt("within %.0e of simplex minimizer on %d/50 (median gap %.1e, max "
          "%.1e); beats %d random alternatives on %d/50; %.1fs",
          kQOracleGapTol, within_tol, median_gap, worst_gap,
          kQRandomAlternatives, beats_random, secs);
  return out;
}

// ---- criterion 3: weight update zeroes the auxiliary-bound gradient ----
Outcome criterion_w_residual() {
  Rng rng(2028);
  Hyperparameters hp;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 2 + static_cast<int>(rng.uniform_int(4));
    const int dim = 8 + static_cast<int>(rng.uniform_int(9));
    const Task task =
        random_task(rng, k, 1 + static_cast<int>(rng.uniform_int(3)), 5, dim);
    Matrix w = init_prototypes(task);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) += 0.05 * rng.gaussian();
    const Posteriors post = compute_posteriors(w, task, hp.tau);
    const AuxAssignments aux = q_update(post, hp);
    const Matrix w_next = w_update(w, post, aux, task, hp);
    const Matrix grad =
        aux_bound_gradient(w_next, w, post, aux.assignments, task, hp);
    worst = std::max(worst, grad.cwiseAbs().maxCoeff());
  }
  Outcome out;
  out.pass = worst < kWResidualTol;
  out.detail = fmt("max residual inf-norm %.2e (tol %.0e) over 100 instances",
                   worst, kWResidualTol);
  return out;
}

// ---- criterion 4: monotone descent under the per-iterate eigenvalue gate ----
Outcome criterion_monotone_descent() {
  RunConfig cfg;
  cfg.solver = Solver::Adm;
  cfg.bank_cfg = descent_bank();
  cfg.episode = five_shot();
  cfg.episodes = kEpisodes;
  cfg.seed = kRunSeed;
  cfg.enable_hessian_check = true;
  cfg.emit_traces = 0;
  const AggregateResult r = run_benchmark(cfg);

  int gate_failures = 0;
  double worst = 0.0;
  for (const EpisodeRecord& e : r.episodes) {
    if (!e.hessian_all_pass) ++gate_failures;
    worst = std::max(worst, e.worst_violation);
  }
  Outcome out;
  out.pass = r.descent_violation_episodes == 0 && gate_failures == 0;
  out.detail = fmt(
      "%d/%d episodes with a loss increase beyond %.0e (worst %.1e); "
      "eigenvalue gate passed on %d/%d",
      r.descent_violation_episodes, kEpisodes, kDescentEpsTol, worst,
      kEpisodes - gate_failures, kEpisodes);
  return out;
}

// shared 1000-episode benchmark on the typical bank (criteria 5, 6, 9)
const AggregateResult& typical_benchmark() {
  static const AggregateResult r = [] {
    RunConfig cfg;
    cfg.solver = Solver::Adm;
    cfg.bank_cfg = typical_bank();
    cfg.episode = one_shot();
    cfg.episodes = kEpisodes;
    cfg.seed = kRunSeed;
    cfg.enable_fixed_point_test = true;
    cfg.enable_bound_audit = true;
    cfg.emit_traces = 0;
    return run_benchmark(cfg);
  }();
  return r;
}

// ---- criterion 5: fixed-point convergence within the default budget ----
Outcome criterion_fixed_point() {
  const AggregateResult& r = typical_benchmark();

  // displacement statistics from a 100-episode sample for the detail line
  const Bank bank = generate_synthetic_bank(typical_bank());
  Hyperparameters hp;
  std::vector<double> dws;
  for (int i = 0; i < 100; ++i) {
    const Task task = sample_episode(bank, one_shot(), derive_seed(kRunSeed, i));
    const AdmResult res = run_tim_adm(task, hp);
    double dw = 0.0, dq = 0.0;
    fixed_point_test(res, task, hp, kFixedPointTol, &dw, &dq);
    dws.push_back(std::max(dw, dq));
  }
  std::sort(dws.begin(), dws.end());

  Outcome out;
  out.pass = r.fixed_point_rate >= kFixedPointRate;
  out.detail = fmt(
      "pass rate %.3f (need >= %.2f) at tol %.0e after 150 iterations; "
      "median extra-update displacement %.1e over a 100-episode sample",
      r.fixed_point_rate, kFixedPointRate, kFixedPointTol, dws[dws.size() / 2]);
  return out;
}

// ---- criterion 6: error-bound audit plus the three inequality sweeps ----
Outcome criterion_bound_audit() {
  const AggregateResult& r = typical_benchmark();
  int held = 0;
  for (const EpisodeRecord& e : r.episodes)
    if (e.bound_audited && e.bound_holds) ++held;

  Rng rng(2029);
  int chain_bad = 0, pinsker_bad = 0, continuity_bad = 0;

  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_int(20));
    const int k = 2 + static_cast<int>(rng.uniform_int(5));
    const Matrix p =
        random_stochastic_rows(rng, n, k, 0.3 + 0.4 * (trial % 10));
    const Posteriors post = as_query_posteriors(p);
    const auto [empirical, bound] = p_delta_terms(post);
    const double h = conditional_entropy(post);
    if (!(empirical <= 1.0 - std::exp(-h) + 1e-12 &&
          1.0 - std::exp(-h) <= bound + 1e-12))
      ++chain_bad;
  }

  for (int trial = 0; trial < 1000; ++trial) {
    const int k = 2 + static_cast<int>(rng.uniform_int(5));
    const Matrix rows = random_simplex_rows(rng, 2, k);
    const Posteriors post = as_query_posteriors(rows.topRows(1));
    Vector prior = rows.row(1).transpose();
    prior.array() += 1e-6;
    prior /= prior.sum();
    const double l1 = (post.query_marginal - prior).cwiseAbs().sum();
    if (!(l1 <= std::sqrt(2.0 * marginal_kl(post, prior)) + 1e-12))
      ++pinsker_bad;
  }

  int checked = 0;
  while (checked < 1000) {
    const int k = 2 + static_cast<int>(rng.uniform_int(5));
    const Matrix rows = random_simplex_rows(rng, 2, k);
    const Vector pa = rows.row(0).transpose();
    const Vector pb = rows.row(1).transpose();
    const ContinuityBound cb = entropy_continuity_bound(pa, pb, k);
    if (!cb.domain_valid) continue;
    ++checked;
    double ha = 0.0, hb = 0.0;
    for (int j = 0; j < k; ++j) {
      if (pa(j) > 0.0) ha -= pa(j) * std::log(pa(j));
      if (pb(j) > 0.0) hb -= pb(j) * std::log(pb(j));
    }
    if (!(std::abs(ha - hb) <= cb.bound + 1e-12)) ++continuity_bad;
  }

  Outcome out;
  out.pass = r.bound_audited_count > 0 && held == r.bound_audited_count &&
             chain_bad == 0 && pinsker_bad == 0 && continuity_bad == 0;
  out.detail = fmt(
      "bound held on %d/%d audited episodes (dominance+domain met on %d/%d); "
      "violations: soft/hard chain %d, Pinsker %d, continuity %d (1000 each)",
      held, r.bound_audited_count, r.bound_audited_count, kEpisodes, chain_bad,
      pinsker_bad, continuity_bad);
  return out;
}

// ---- criterion 7: gradient and alternating solvers agree on accuracy ----
Outcome criterion_solver_agreement() {
  RunConfig cfg;
  cfg.bank_cfg = typical_bank();
  cfg.episode = one_shot();
  cfg.episodes = 200;
  cfg.seed = kRunSeed;
  cfg.emit_traces = 0;

  cfg.solver = Solver::Adm;
  const AggregateResult adm = run_benchmark(cfg);
  cfg.solver = Solver::Gd;
  const AggregateResult gd = run_benchmark(cfg);

  const double diff = std::abs(adm.mean_accuracy - gd.mean_accuracy);
  Outcome out;
  out.pass = diff <= kSolverAgreementTol;
  out.detail = fmt(
      "alternating %.4f vs gradient %.4f on 200 matched episodes; |diff| "
      "%.4f (tol %.2f)",
      adm.mean_accuracy, gd.mean_accuracy, diff, kSolverAgreementTol);
  return out;
}

// ---- criterion 8: ablation directions on the hard bank ----
struct VariantStats {
  double mean = 0.0;
  double ci = 0.0;
  int collapses = 0;
};

VariantStats run_variant(const Bank& bank, AblationVariant variant) {
  Hyperparameters hp;
  VariantStats stats;
  std::vector<double> accs;
  for (int i = 0; i < kEpisodes; ++i) {
    const Task task = sample_episode(bank, one_shot(), derive_seed(kRunSeed, i));
    const AdmResult res = run_tim_adm(task, hp, variant);
    const Posteriors post = compute_posteriors(res.final_weights, task, hp.tau);
    accs.push_back(query_accuracy(post, task));

    std::vector<int> counts(task.num_classes, 0);
    for (int pred : res.query_predictions) ++counts[pred];
    const int biggest = *std::max_element(counts.begin(), counts.end());
    if (biggest >= static_cast<int>(std::ceil(
                       kCollapseShare * static_cast<double>(task.query_count()))))
      ++stats.collapses;
  }
  for (double a : accs) stats.mean += a;
  stats.mean /= accs.size();
  double ss = 0.0;
  for (double a : accs) ss += (a - stats.mean) * (a - stats.mean);
  stats.ci = 1.96 * std::sqrt(ss / (accs.size() - 1)) /
             std::sqrt(static_cast<double>(accs.size()));
  return stats;
}

Outcome criterion_ablation() {
  const Bank bank = generate_synthetic_bank(hard_bank());
  const VariantStats full = run_variant(bank, AblationVariant::Full);
  const VariantStats cond = run_variant(bank, AblationVariant::CePlusCond);
  const VariantStats ce = run_variant(bank, AblationVariant::CeOnly);

  const double cond_rate = static_cast<double>(cond.collapses) / kEpisodes;
  const double full_rate = static_cast<double>(full.collapses) / kEpisodes;
  const bool ci_separated = full.mean - full.ci > ce.mean + ce.ci;

  Outcome out;
  out.pass = cond_rate >= kCollapseRateMin && full_rate < kCollapseRateMax &&
             ci_separated;
  out.detail = fmt(
      "collapse rate: cond-only %.3f (need >= %.2f), full %.3f (need < %.2f); "
      "accuracy full %.3f+-%.3f vs ce-only %.3f+-%.3f (%sseparated)",
      cond_rate, kCollapseRateMin, full_rate, kCollapseRateMax, full.mean,
      full.ci, ce.mean, ce.ci, ci_separated ? "CI-" : "NOT CI-");
  return out;
}

// ---- criterion 9: the mutual information grows during inference ----
Outcome criterion_mi_growth() {
  const AggregateResult& r = typical_benchmark();
  Outcome out;
  out.pass = r.mi_growth_rate >= kMiGrowthRate;
  out.detail = fmt("final MI > initial MI in %.1f%% of episodes (need >= %.0f%%)",
                   100.0 * r.mi_growth_rate, 100.0 * kMiGrowthRate);
  return out;
}

// ---- criterion 10: determinism, file round-trips, and the runtime budget ----
Outcome criterion_determinism_io() {
  namespace fs = std::filesystem;
  const fs::path base = fs::temp_directory_path() / "tim_acceptance";
  fs::remove_all(base);
  fs::create_directories(base);

  RunConfig cfg;
  cfg.solver = Solver::Adm;
  cfg.bank_cfg = typical_bank();
  cfg.episode = one_shot();
  cfg.episodes = kEpisodes;
  cfg.seed = kRunSeed;
  cfg.emit_traces = 1;
  cfg.out_dir = (base / "run_a").string();

  const auto t0 = std::chrono::steady_clock::now();
  const AggregateResult a = run_benchmark(cfg);
  const double bench_secs = elapsed_since(t0);

  cfg.out_dir = (base / "run_b").string();
  const AggregateResult b = run_benchmark(cfg);

  bool identical = a.episodes.size() == b.episodes.size();
  for (std::size_t i = 0; identical && i < a.episodes.size(); ++i) {
    const EpisodeRecord& x = a.episodes[i];
    const EpisodeRecord& y = b.episodes[i];
    identical = x.accuracy == y.accuracy && x.final_loss == y.final_loss &&
                x.initial_mi == y.initial_mi && x.final_mi == y.final_mi;
  }
  const auto slurp = [](const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is),
                       std::istreambuf_iterator<char>());
  };
  const bool traces_equal =
      slurp(base / "run_a" / "trace_000.csv") ==
      slurp(base / "run_b" / "trace_000.csv");
  const bool dumps_equal =
      slurp(base / "run_a" / "posteriors_000.csv") ==
      slurp(base / "run_b" / "posteriors_000.csv");

  const Bank bank = generate_synthetic_bank(typical_bank());
  write_embeddings(bank, (base / "bank1.bin").string());
  write_embeddings(read_embeddings((base / "bank1.bin").string()),
                   (base / "bank2.bin").string());
  const bool bank_roundtrip =
      slurp(base / "bank1.bin") == slurp(base / "bank2.bin");

  fs::remove_all(base);

  Outcome out;
  out.pass = identical && traces_equal && dumps_equal && bank_roundtrip &&
             bench_secs < kBenchTimeBudget &&
             a.wall_clock_per_episode <= kPerEpisodeBudget;
  out.detail = fmt(
      "records %s, traces %s, dumps %s, bank round-trip %s; %d episodes in "
      "%.1fs (%.4f s/episode, budget %.1f)",
      identical ? "identical" : "DIFFER", traces_equal ? "identical" : "DIFFER",
      dumps_equal ? "identical" : "DIFFER", bank_roundtrip ? "exact" : "BROKEN",
      kEpisodes, bench_secs, a.wall_clock_per_episode, kPerEpisodeBudget);
  return out;
}

}  // namespace

int main() {
  struct Entry {
    int id;
    const char* name;
    Outcome (*fn)();
  };
  const Entry entries[] = {
      {1, "gradient oracle", criterion_gradient_oracle},
      {2, "assignment-update oracle", criterion_q_oracle},
      {3, "weight-update residual", criterion_w_residual},
      {4, "monotone descent", criterion_monotone_descent},
      {5, "fixed-point convergence", criterion_fixed_point},
      {6, "error-bound audit", criterion_bound_audit},
      {7, "solver agreement", criterion_solver_agreement},
      {8, "ablation directions", criterion_ablation},
      {9, "mutual-information growth", criterion_mi_growth},
      {10, "determinism and I/O", criterion_determinism_io},
  };

  int failures = 0;
  for (const Entry& e : entries) {
    Outcome out;
    try {
      out = e.fn();
    } catch (const std::exception& ex) {
      out.pass = false;
      out.detail = std::string("exception: ") + ex.what();
    }
    if (!out.pass) ++failures;
    std::printf("CRITERION %d: %s — %s — %s\n", e.id,
                out.pass ? "PASS" : "FAIL", e.name, out.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("SUMMARY: %d/10 criteria passed\n",
              10 - failures);
  return failures;
}
