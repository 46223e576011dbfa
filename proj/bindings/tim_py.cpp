// Python bindings for the transductive inference core.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tim/bounds.hpp"
#include "tim/core.hpp"
#include "tim/harness.hpp"
#include "tim/solver_adm.hpp"
#include "tim/solver_gd.hpp"
#include "tim/tasks.hpp"

namespace py = pybind11;
using namespace tim;

PYBIND11_MODULE(timcore, m) {
  m.doc() = "Transductive information-maximization inference for few-shot tasks";

  py::register_exception<TimError>(m, "TimError", PyExc_RuntimeError);

  // ---- types ----
  py::class_<Task>(m, "Task")
      .def_readonly("features", &Task::features)
      .def_readonly("support_indices", &Task::support_indices)
      .def_readonly("query_indices", &Task::query_indices)
      .def_readonly("support_labels", &Task::support_labels)
      .def_readonly("query_labels", &Task::query_labels)
      .def_readonly("num_classes", &Task::num_classes)
      .def_property_readonly("support_count", &Task::support_count)
      .def_property_readonly("query_count", &Task::query_count)
      .def("__repr__", [](const Task& t) {
        return "<Task " + std::to_string(t.num_classes) + "-way, |S|=" +
               std::to_string(t.support_count()) + ", |Q|=" +
               std::to_string(t.query_count()) + ">";
      });

  m.def("make_task", &make_task, py::arg("support"), py::arg("support_labels"),
        py::arg("query"), py::arg("query_labels"), py::arg("num_classes"),
        "Build a validated task from support/query embedding matrices");
  m.def("validate_task", &validate_task, py::arg("task"));

  py::class_<Hyperparameters>(m, "Hyperparameters")
      .def(py::init<>())
      .def_readwrite("tau", &Hyperparameters::tau)
      .def_readwrite("alpha", &Hyperparameters::alpha)
      .def_readwrite("lambda_", &Hyperparameters::lambda)
      .def_readwrite("beta", &Hyperparameters::beta)
      .def_readwrite("learning_rate", &Hyperparameters::learning_rate)
      .def_readwrite("iterations", &Hyperparameters::iterations)
      .def_readwrite("plain_sgd", &Hyperparameters::plain_sgd)
      .def("resolved_iterations", &Hyperparameters::resolved_iterations,
           py::arg("alternating"));

  py::class_<Posteriors>(m, "Posteriors")
      .def_readonly("probs", &Posteriors::probs)
      .def_readonly("query_marginal", &Posteriors::query_marginal)
      .def_readonly("query_indices", &Posteriors::query_indices);

  py::class_<AuxAssignments>(m, "AuxAssignments")
      .def_readonly("assignments", &AuxAssignments::assignments)
      .def_readonly("marginal", &AuxAssignments::marginal)
      .def("empty", &AuxAssignments::empty);

  py::class_<TraceRecord>(m, "TraceRecord")
      .def_readonly("iteration", &TraceRecord::iteration)
      .def_readonly("loss", &TraceRecord::loss)
      .def_readonly("accuracy", &TraceRecord::accuracy)
      .def_readonly("mi_alpha1", &TraceRecord::mi_alpha1)
      .def_readonly("weight_displacement", &TraceRecord::weight_displacement);

  py::class_<ConvergenceTrace>(m, "ConvergenceTrace")
      .def_readonly("records", &ConvergenceTrace::records);

  py::enum_<Solver>(m, "Solver")
      .value("GD", Solver::Gd)
      .value("ADM", Solver::Adm);

  py::enum_<AblationVariant>(m, "AblationVariant")
      .value("FULL", AblationVariant::Full)
      .value("CE_ONLY", AblationVariant::CeOnly)
      .value("CE_PLUS_COND", AblationVariant::CePlusCond)
      .value("CE_MINUS_MARG", AblationVariant::CeMinusMarg);

  m.def("derive_seed", &derive_seed, py::arg("base"), py::arg("index"));

  // ---- core math ----
  m.def("normalize_features", &normalize_features, py::arg("raw"));
  m.def("softmax_rows", &softmax_rows, py::arg("logits"));
  m.def("compute_posteriors", &compute_posteriors, py::arg("weights"),
        py::arg("task"), py::arg("tau"));
  m.def("conditional_entropy", &conditional_entropy, py::arg("posteriors"));
  m.def("marginal_entropy", &marginal_entropy, py::arg("posteriors"));
  m.def("weighted_mutual_information", &weighted_mutual_information,
        py::arg("posteriors"), py::arg("alpha"));
  m.def("cross_entropy", &cross_entropy, py::arg("posteriors"), py::arg("task"));
  m.def("tim_loss", &tim_loss, py::arg("posteriors"), py::arg("task"),
        py::arg("hp"));
  m.def("adm_loss", &adm_loss, py::arg("posteriors"), py::arg("aux"),
        py::arg("task"), py::arg("hp"));
  m.def("init_prototypes", &init_prototypes, py::arg("task"));
  m.def("query_predictions", &query_predictions, py::arg("posteriors"));
  m.def("query_accuracy", &query_accuracy, py::arg("posteriors"), py::arg("task"));

  // ---- gradient solver ----
  py::class_<GdResult>(m, "GdResult")
      .def_readonly("final_weights", &GdResult::final_weights)
      .def_readonly("trace", &GdResult::trace)
      .def_readonly("query_predictions", &GdResult::query_predictions)
      .def_readonly("initial_state", &GdResult::initial_state);

  m.def("tim_loss_gradient", &tim_loss_gradient, py::arg("weights"),
        py::arg("task"), py::arg("hp"));
  m.def("run_tim_gd", &run_tim_gd, py::arg("task"), py::arg("hp"),
        py::call_guard<py::gil_scoped_release>());

  // ---- alternating solver ----
  py::class_<AdmResult>(m, "AdmResult")
      .def_readonly("final_weights", &AdmResult::final_weights)
      .def_readonly("final_aux", &AdmResult::final_aux)
      .def_readonly("trace", &AdmResult::trace)
      .def_readonly("query_predictions", &AdmResult::query_predictions)
      .def_readonly("initial_state", &AdmResult::initial_state)
      .def_readonly("variant", &AdmResult::variant)
      .def_readonly("fixed_point_reached", &AdmResult::fixed_point_reached)
      .def_readonly("fixed_point_iteration", &AdmResult::fixed_point_iteration)
      .def_readonly("hessian_all_pass", &AdmResult::hessian_all_pass)
      .def_readonly("hessian_worst_eig", &AdmResult::hessian_worst_eig);

  py::class_<HessianCheckReport>(m, "HessianCheckReport")
      .def_readonly("max_eig_support", &HessianCheckReport::max_eig_support)
      .def_readonly("max_eig_query", &HessianCheckReport::max_eig_query)
      .def_readonly("pass_", &HessianCheckReport::pass);

  py::class_<AdmOptions>(m, "AdmOptions")
      .def(py::init<>())
      .def_readwrite("hessian_check_each_iter", &AdmOptions::hessian_check_each_iter)
      .def_readwrite("fixed_point_tol", &AdmOptions::fixed_point_tol);

  m.def("q_update", &q_update, py::arg("posteriors"), py::arg("hp"),
        py::arg("variant") = AblationVariant::Full);
  m.def("w_update", &w_update, py::arg("weights_prev"), py::arg("posteriors_prev"),
        py::arg("aux"), py::arg("task"), py::arg("hp"));
  m.def("hessian_check", &hessian_check, py::arg("weights"), py::arg("posteriors"),
        py::arg("task"));
  m.def("run_tim_adm", &run_tim_adm, py::arg("task"), py::arg("hp"),
        py::arg("variant") = AblationVariant::Full,
        py::arg("options") = AdmOptions{},
        py::call_guard<py::gil_scoped_release>());
  m.def(
      "fixed_point_test",
      [](const AdmResult& result, const Task& task, const Hyperparameters& hp,
         double tol) {
        double dw = 0.0, dq = 0.0;
        const bool ok = fixed_point_test(result, task, hp, tol, &dw, &dq);
        return py::make_tuple(ok, dw, dq);
      },
      py::arg("result"), py::arg("task"), py::arg("hp"), py::arg("tol") = 1e-4,
      "Returns (passed, weight_displacement, assignment_displacement)");

  // ---- bounds ----
  py::class_<ConfusionStats>(m, "ConfusionStats")
      .def_readonly("joint", &ConfusionStats::joint)
      .def_readonly("per_class_recall", &ConfusionStats::per_class_recall)
      .def_readonly("epsilon", &ConfusionStats::epsilon)
      .def_readonly("diagonally_dominant", &ConfusionStats::diagonally_dominant)
      .def_readonly("diagonally_dominant_weak",
                    &ConfusionStats::diagonally_dominant_weak);

  py::class_<BoundReport>(m, "BoundReport")
      .def_readonly("p_e", &BoundReport::p_e)
      .def_readonly("kl_marginal", &BoundReport::kl_marginal)
      .def_readonly("cond_entropy", &BoundReport::cond_entropy)
      .def_readonly("p_delta_empirical", &BoundReport::p_delta_empirical)
      .def_readonly("p_delta_bound", &BoundReport::p_delta_bound)
      .def_readonly("delta_term_kl", &BoundReport::delta_term_kl)
      .def_readonly("delta_term_cond", &BoundReport::delta_term_cond)
      .def_readonly("g_eps", &BoundReport::g_eps)
      .def_readonly("total_bound", &BoundReport::total_bound)
      .def_readonly("epsilon", &BoundReport::epsilon)
      .def_readonly("domain_valid", &BoundReport::domain_valid)
      .def_readonly("diagonally_dominant", &BoundReport::diagonally_dominant)
      .def_readonly("bound_holds", &BoundReport::bound_holds)
      .def_readonly("verdict", &BoundReport::verdict)
      .def("to_json", [](const BoundReport& r) { return bound_report_to_json(r); });

  m.def("binary_entropy", &binary_entropy, py::arg("p"));
  m.def("delta_fn", &delta_fn, py::arg("x"), py::arg("k"));
  m.def("g_epsilon", &g_epsilon, py::arg("eps"), py::arg("k"));
  m.def("confusion_stats", &confusion_stats, py::arg("predictions"),
        py::arg("truth"), py::arg("k"));
  m.def("p_delta_terms", &p_delta_terms, py::arg("posteriors"));
  m.def("marginal_kl", &marginal_kl, py::arg("posteriors"), py::arg("prior"));
  m.def("kovalevsky_check", &kovalevsky_check, py::arg("cond_entropy_nats"),
        py::arg("p_e"));
  m.def("proposition1_bound", &proposition1_bound, py::arg("posteriors"),
        py::arg("truth"), py::arg("prior"));
  m.def("bound_report_from_json", &bound_report_from_json, py::arg("text"));

  // ---- tasks / banks ----
  py::class_<SyntheticConfig>(m, "SyntheticConfig")
      .def(py::init<>())
      .def_readwrite("num_classes_pool", &SyntheticConfig::num_classes_pool)
      .def_readwrite("samples_per_class", &SyntheticConfig::samples_per_class)
      .def_readwrite("dim", &SyntheticConfig::dim)
      .def_readwrite("class_concentration", &SyntheticConfig::class_concentration)
      .def_readwrite("rng_seed", &SyntheticConfig::rng_seed);

  py::class_<Bank>(m, "Bank")
      .def_readonly("embeddings", &Bank::embeddings)
      .def_readonly("labels", &Bank::labels)
      .def_readonly("num_classes", &Bank::num_classes)
      .def_property_readonly("dim", &Bank::dim)
      .def_property_readonly("count", &Bank::count);

  py::enum_<EpisodeSpec::Mode>(m, "EpisodeMode")
      .value("STANDARD", EpisodeSpec::Mode::Standard)
      .value("RANDOM", EpisodeSpec::Mode::Random);

  py::class_<EpisodeSpec>(m, "EpisodeSpec")
      .def(py::init<>())
      .def_readwrite("mode", &EpisodeSpec::mode)
      .def_readwrite("ways", &EpisodeSpec::ways)
      .def_readwrite("shots", &EpisodeSpec::shots)
      .def_readwrite("query_shots", &EpisodeSpec::query_shots)
      .def_readwrite("ways_min", &EpisodeSpec::ways_min)
      .def_readwrite("ways_max", &EpisodeSpec::ways_max)
      .def_readwrite("support_min", &EpisodeSpec::support_min)
      .def_readwrite("support_max", &EpisodeSpec::support_max)
      .def_readwrite("query_budget", &EpisodeSpec::query_budget);

  m.def("generate_synthetic_bank", &generate_synthetic_bank, py::arg("config"));
  m.def("sample_episode", &sample_episode, py::arg("bank"), py::arg("spec"),
        py::arg("rng_seed"));
  m.def("read_embeddings", &read_embeddings, py::arg("path"));
  m.def("write_embeddings", &write_embeddings, py::arg("bank"), py::arg("path"));
  m.def("read_embeddings_csv", &read_embeddings_csv, py::arg("path"));
  m.def("write_embeddings_csv", &write_embeddings_csv, py::arg("bank"),
        py::arg("path"));

  // ---- harness ----
  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_readwrite("solver", &RunConfig::solver)
      .def_readwrite("variant", &RunConfig::variant)
      .def_readwrite("hp", &RunConfig::hp)
      .def_readwrite("bank_cfg", &RunConfig::bank_cfg)
      .def_readwrite("bank_path", &RunConfig::bank_path)
      .def_readwrite("episode", &RunConfig::episode)
      .def_readwrite("episodes", &RunConfig::episodes)
      .def_readwrite("seed", &RunConfig::seed)
      .def_readwrite("out_dir", &RunConfig::out_dir)
      .def_readwrite("enable_hessian_check", &RunConfig::enable_hessian_check)
      .def_readwrite("enable_bound_audit", &RunConfig::enable_bound_audit)
      .def_readwrite("enable_fixed_point_test", &RunConfig::enable_fixed_point_test)
      .def_readwrite("num_threads", &RunConfig::num_threads)
      .def_readwrite("emit_traces", &RunConfig::emit_traces)
      .def_readwrite("dump_posteriors_path", &RunConfig::dump_posteriors_path);

  py::class_<EpisodeRecord>(m, "EpisodeRecord")
      .def_readonly("index", &EpisodeRecord::index)
      .def_readonly("accuracy", &EpisodeRecord::accuracy)
      .def_readonly("initial_mi", &EpisodeRecord::initial_mi)
      .def_readonly("final_mi", &EpisodeRecord::final_mi)
      .def_readonly("final_loss", &EpisodeRecord::final_loss)
      .def_readonly("fixed_point", &EpisodeRecord::fixed_point)
      .def_readonly("hessian_all_pass", &EpisodeRecord::hessian_all_pass)
      .def_readonly("descent_violations", &EpisodeRecord::descent_violations)
      .def_readonly("worst_violation", &EpisodeRecord::worst_violation)
      .def_readonly("bound_audited", &EpisodeRecord::bound_audited)
      .def_readonly("bound_holds", &EpisodeRecord::bound_holds)
      .def_readonly("seconds", &EpisodeRecord::seconds);

  py::class_<AggregateResult>(m, "AggregateResult")
      .def_readonly("mean_accuracy", &AggregateResult::mean_accuracy)
      .def_readonly("ci95_half_width", &AggregateResult::ci95_half_width)
      .def_readonly("episodes", &AggregateResult::episodes)
      .def_readonly("mi_growth_rate", &AggregateResult::mi_growth_rate)
      .def_readonly("fixed_point_rate", &AggregateResult::fixed_point_rate)
      .def_readonly("descent_violation_episodes",
                    &AggregateResult::descent_violation_episodes)
      .def_readonly("bound_audited_count", &AggregateResult::bound_audited_count)
      .def_readonly("bound_audit_pass_rate", &AggregateResult::bound_audit_pass_rate)
      .def_readonly("wall_clock_per_episode",
                    &AggregateResult::wall_clock_per_episode);

  m.def("run_benchmark", &run_benchmark, py::arg("config"),
        py::call_guard<py::gil_scoped_release>());
}
