// tim — transductive few-shot inference over embedding banks.
//
//   tim run      solve many episodes and aggregate accuracy / diagnostics
//   tim convert  convert an embedding bank between CSV and binary
//   tim audit    evaluate the error bound on a stored posterior dump
//
// Failures print one machine-readable JSON line on stderr and exit nonzero.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "tim/core.hpp"
#include "tim/harness.hpp"

namespace {

using tim::TimError;

void apply_preset(tim::SyntheticConfig& cfg, const std::string& name) {
  cfg.num_classes_pool = 20;
  cfg.samples_per_class = 60;
  cfg.dim = 64;
  if (name == "easy") {
    cfg.class_concentration = 8.0;
  } else if (name == "typical") {
    cfg.class_concentration = 5.0;
  } else if (name == "hard") {
    cfg.class_concentration = 3.0;
  } else {
    throw TimError("invalid_config",
                   "unknown bank preset '" + name +
                       "' (expected easy|typical|hard or key=value pairs)");
  }
}

// --bank accepts "synthetic:<preset-or-kv-list>" or "file:<path>".
// kv keys: classes, per_class, dim, conc, seed. Example:
//   synthetic:classes=20,per_class=60,dim=64,conc=5,seed=0
void parse_bank(const std::string& text, tim::RunConfig& cfg) {
  if (text.rfind("file:", 0) == 0) {
    cfg.bank_path = text.substr(5);
    if (cfg.bank_path.empty())
      throw TimError("invalid_config", "empty bank file path");
    return;
  }
  if (text.rfind("synthetic", 0) != 0)
    throw TimError("invalid_config",
                   "bank must be synthetic:<cfg> or file:<path>, got '" + text + "'");
  apply_preset(cfg.bank_cfg, "typical");
  std::string spec = text.size() > 9 && text[9] == ':' ? text.substr(10) : "";
  if (text.size() > 9 && text[9] != ':')
    throw TimError("invalid_config", "bank must be synthetic:<cfg>, got '" + text + "'");
  if (spec.empty()) return;

  std::stringstream ss(spec);
  std::string token;
  while (std::getline(ss, token, ',')) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) {
      apply_preset(cfg.bank_cfg, token);
      continue;
    }
    const std::string key = token.substr(0, eq);
    const std::string value = token.substr(eq + 1);
    try {
      if (key == "classes") {
        cfg.bank_cfg.num_classes_pool = std::stoi(value);
      } else if (key == "per_class") {
        cfg.bank_cfg.samples_per_class = std::stoi(value);
      } else if (key == "dim") {
        cfg.bank_cfg.dim = std::stoi(value);
      } else if (key == "conc") {
        cfg.bank_cfg.class_concentration = std::stod(value);
      } else if (key == "seed") {
        cfg.bank_cfg.rng_seed = std::stoull(value);
      } else {
        throw TimError("invalid_config", "unknown bank key '" + key + "'");
      }
    } catch (const std::logic_error&) {
      throw TimError("invalid_config", "bad bank value in '" + token + "'");
    }
  }
}

int cmd_run(tim::RunConfig cfg, const std::string& bank_text,
            const std::string& mode) {
  parse_bank(bank_text, cfg);
  cfg.episode.mode = mode == "random" ? tim::EpisodeSpec::Mode::Random
                                      : tim::EpisodeSpec::Mode::Standard;
  const tim::AggregateResult result = tim::run_benchmark(cfg);

  std::printf("solver            %s (%s)\n", tim::solver_name(cfg.solver).c_str(),
              tim::variant_name(cfg.variant).c_str());
  std::printf("episodes          %d\n", cfg.episodes);
  std::printf("mean accuracy     %.4f +/- %.4f (95%% CI)\n", result.mean_accuracy,
              result.ci95_half_width);
  std::printf("MI growth rate    %.4f\n", result.mi_growth_rate);
  if (cfg.enable_fixed_point_test)
    std::printf("fixed-point rate  %.4f\n", result.fixed_point_rate);
  std::printf("descent violations in %d/%d episodes\n",
              result.descent_violation_episodes, cfg.episodes);
  if (cfg.enable_bound_audit)
    std::printf("bound audit       %d audited, pass rate %.4f\n",
                result.bound_audited_count, result.bound_audit_pass_rate);
  std::printf("avg solve time    %.4f s/episode\n", result.wall_clock_per_episode);
  if (!cfg.out_dir.empty())
    std::printf("artifacts         %s\n",
                (std::filesystem::path(cfg.out_dir) / "report.json").string().c_str());
  return 0;
}

int cmd_convert(const std::string& input, const std::string& output) {
  const auto is_csv = [](const std::string& p) {
    return p.size() >= 4 && p.compare(p.size() - 4, 4, ".csv") == 0;
  };
  if (is_csv(input) == is_csv(output))
    throw TimError("invalid_config",
                   "exactly one of input/output must have a .csv extension");
  const tim::Bank bank =
      is_csv(input) ? tim::read_embeddings_csv(input) : tim::read_embeddings(input);
  if (is_csv(output))
    tim::write_embeddings_csv(bank, output);
  else
    tim::write_embeddings(bank, output);
  std::printf("converted %lld embeddings (dim %lld, %d classes) -> %s\n",
              static_cast<long long>(bank.count()), static_cast<long long>(bank.dim()),
              bank.num_classes, output.c_str());
  return 0;
}

int cmd_audit(const std::string& dump_path, const std::string& out_path) {
  const tim::PosteriorDump dump = tim::read_posterior_dump(dump_path);
  tim::Posteriors post;
  post.probs = dump.probs;
  post.query_indices.resize(static_cast<std::size_t>(dump.probs.rows()));
  for (Eigen::Index i = 0; i < dump.probs.rows(); ++i)
    post.query_indices[static_cast<std::size_t>(i)] = static_cast<int>(i);
  post.query_marginal = post.probs.colwise().mean().transpose();

  const int k = static_cast<int>(dump.probs.cols());
  const tim::Vector prior = tim::Vector::Constant(k, 1.0 / k);
  const tim::BoundReport report = tim::proposition1_bound(post, dump.truth, prior);
  const std::string text = tim::bound_report_to_json(report);
  if (out_path.empty()) {
    std::printf("%s\n", text.c_str());
  } else {
    std::ofstream os(out_path);
    if (!os) throw TimError("io_error", "cannot open for writing: " + out_path);
    os << text << "\n";
    std::printf("wrote %s (verdict: %s)\n", out_path.c_str(), report.verdict.c_str());
  }
  return 0;
}

void print_error(const std::string& code, const std::string& message) {
  nlohmann::json j{{"error", code}, {"message", message}};
  std::fprintf(stderr, "%s\n", j.dump().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"transductive few-shot inference"};
  app.require_subcommand(1);

  // ---- run ----
  auto* run = app.add_subcommand("run", "solve episodes and aggregate results");
  std::string solver = "adm", variant = "full", bank = "synthetic:typical";
  std::string mode = "standard";
  tim::RunConfig cfg;
  run->add_option("--solver", solver, "gd|adm")->capture_default_str();
  run->add_option("--variant", variant, "full|ce|ce+cond|ce-marg")
      ->capture_default_str();
  run->add_option("--ways", cfg.episode.ways, "classes per episode")
      ->capture_default_str();
  run->add_option("--shots", cfg.episode.shots, "support samples per class")
      ->capture_default_str();
  run->add_option("--query", cfg.episode.query_shots, "query samples per class")
      ->capture_default_str();
  run->add_option("--episodes", cfg.episodes, "episode count")
      ->capture_default_str();
  run->add_option("--alpha", cfg.hp.alpha, "conditional-entropy weight")
      ->capture_default_str();
  run->add_option("--lambda", cfg.hp.lambda, "cross-entropy weight")
      ->capture_default_str();
  run->add_option("--beta", cfg.hp.beta, "KL-penalty multiplier")
      ->capture_default_str();
  run->add_option("--tau", cfg.hp.tau, "softmax temperature")
      ->capture_default_str();
  run->add_option("--iters", cfg.hp.iterations,
                  "iterations (-1 = solver default: 1000 gd, 150 adm)")
      ->capture_default_str();
  run->add_option("--lr", cfg.hp.learning_rate, "gd learning rate")
      ->capture_default_str();
  run->add_option("--seed", cfg.seed, "run seed")->capture_default_str();
  run->add_option("--bank", bank, "synthetic:<cfg> or file:<path>")
      ->capture_default_str();
  run->add_option("--out", cfg.out_dir, "artifact output directory");
  run->add_flag("--hessian-check", cfg.enable_hessian_check,
                "track concavity-check eigenvalues");
  run->add_flag("--bound-audit", cfg.enable_bound_audit,
                "audit the error bound on every episode");
  run->add_flag("--fixed-point-test", cfg.enable_fixed_point_test,
                "test final iterates for fixed-point convergence (adm)");
  run->add_option("--episode-mode", mode, "standard|random")
      ->capture_default_str();
  run->add_option("--ways-min", cfg.episode.ways_min, "random mode: min ways");
  run->add_option("--ways-max", cfg.episode.ways_max, "random mode: max ways");
  run->add_option("--support-min", cfg.episode.support_min,
                  "random mode: min support per class");
  run->add_option("--support-max", cfg.episode.support_max,
                  "random mode: max support per class");
  run->add_option("--query-budget", cfg.episode.query_budget,
                  "random mode: total query samples");
  run->add_option("--threads", cfg.num_threads, "worker threads (0 = auto)");
  run->add_option("--emit-traces", cfg.emit_traces,
                  "write trace CSVs for the first N episodes")
      ->capture_default_str();
  run->add_option("--dump-posteriors", cfg.dump_posteriors_path,
                  "write episode-0 query posteriors to this CSV");

  // ---- convert ----
  auto* convert =
      app.add_subcommand("convert", "convert a bank between CSV and binary");
  std::string conv_in, conv_out;
  convert->add_option("input", conv_in, "input bank path")->required();
  convert->add_option("output", conv_out, "output bank path")->required();

  // ---- audit ----
  auto* audit =
      app.add_subcommand("audit", "error bound on a stored posterior dump");
  std::string dump_path, audit_out;
  audit->add_option("dump", dump_path, "posterior dump CSV")->required();
  audit->add_option("--out", audit_out, "write the report JSON here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    print_error("cli_error", e.what());
    return 2;
  }

  try {
    if (run->parsed()) {
      cfg.solver = tim::parse_solver(solver);
      cfg.variant = tim::parse_variant(variant);
      if (mode != "standard" && mode != "random")
        throw TimError("invalid_config",
                       "episode mode must be standard|random, got '" + mode + "'");
      return cmd_run(cfg, bank, mode);
    }
    if (convert->parsed()) return cmd_convert(conv_in, conv_out);
    if (audit->parsed()) return cmd_audit(dump_path, audit_out);
  } catch (const TimError& e) {
    print_error(e.code(), e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("internal_error", e.what());
    return 1;
  }
  return 0;
}
