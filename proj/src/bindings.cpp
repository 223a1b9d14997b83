#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mtfqi/analysis.hpp"
#include "mtfqi/ensemble.hpp"
#include "mtfqi/harness.hpp"
#include "mtfqi/offline_data.hpp"
#include "mtfqi/serialize.hpp"
#include "mtfqi/solver.hpp"

namespace py = pybind11;
using namespace mtfqi;

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multitask fitted Q-iteration on synthetic low-rank MDP ensembles";

  py::class_<TabularMDP>(m, "TabularMDP")
      .def(py::init<>())
      .def_readwrite("num_states", &TabularMDP::num_states)
      .def_readwrite("num_actions", &TabularMDP::num_actions)
      .def_readwrite("horizon", &TabularMDP::horizon)
      .def_readwrite("gamma", &TabularMDP::gamma)
      .def_readwrite("initial_state", &TabularMDP::initial_state)
      .def_readwrite("transitions", &TabularMDP::transitions)
      .def_readwrite("rewards", &TabularMDP::rewards)
      .def("validate", &TabularMDP::validate);

  py::class_<Policy>(m, "Policy")
      .def(py::init<>())
      .def_readwrite("action_of", &Policy::action_of);

  py::class_<StochasticPolicy>(m, "StochasticPolicy")
      .def(py::init<>())
      .def_readwrite("probs", &StochasticPolicy::probs);

  py::class_<QTable>(m, "QTable")
      .def(py::init<>())
      .def_readwrite("values", &QTable::values);

  py::class_<OccupancyMeasure>(m, "OccupancyMeasure")
      .def(py::init<>())
      .def_readwrite("weights", &OccupancyMeasure::weights);

  py::class_<FeatureMap>(m, "FeatureMap")
      .def(py::init<>())
      .def_readwrite("label", &FeatureMap::label)
      .def_readwrite("num_states", &FeatureMap::num_states)
      .def_readwrite("num_actions", &FeatureMap::num_actions)
      .def_readwrite("table", &FeatureMap::table)
      .def("dim", &FeatureMap::dim);

  py::class_<EncoderClass>(m, "EncoderClass")
      .def(py::init<>())
      .def_readwrite("members", &EncoderClass::members)
      .def_readwrite("contains_truth", &EncoderClass::contains_truth)
      .def_readwrite("truth_index", &EncoderClass::truth_index)
      .def("size", &EncoderClass::size);

  py::class_<EnsembleSpec>(m, "EnsembleSpec")
      .def(py::init<>())
      .def_readwrite("num_states", &EnsembleSpec::num_states)
      .def_readwrite("num_actions", &EnsembleSpec::num_actions)
      .def_readwrite("horizon", &EnsembleSpec::horizon)
      .def_readwrite("num_tasks", &EnsembleSpec::num_tasks)
      .def_readwrite("latent_dim", &EnsembleSpec::latent_dim)
      .def_readwrite("gamma", &EnsembleSpec::gamma)
      .def_readwrite("w_max", &EnsembleSpec::w_max);

  py::class_<TaskEnsemble>(m, "TaskEnsemble")
      .def_readonly("spec", &TaskEnsemble::spec)
      .def_readonly("seed", &TaskEnsemble::seed)
      .def_readonly("tasks", &TaskEnsemble::tasks)
      .def_readonly("true_features", &TaskEnsemble::true_features)
      .def_readonly("true_decoders", &TaskEnsemble::true_decoders)
      .def_readonly("feature_scale", &TaskEnsemble::feature_scale)
      .def_readonly("reward_scale", &TaskEnsemble::reward_scale);

  py::class_<Transition>(m, "Transition")
      .def_readonly("h", &Transition::h)
      .def_readonly("s", &Transition::s)
      .def_readonly("a", &Transition::a)
      .def_readonly("r", &Transition::r)
      .def_readonly("s_next", &Transition::s_next);

  py::class_<TaskDataset>(m, "TaskDataset")
      .def_readonly("task_id", &TaskDataset::task_id)
      .def_readonly("stages", &TaskDataset::stages)
      .def("samples_per_stage", &TaskDataset::samples_per_stage);

  py::class_<DatasetBundle>(m, "DatasetBundle")
      .def_readonly("tasks", &DatasetBundle::tasks)
      .def_readonly("n", &DatasetBundle::n)
      .def_readonly("horizon", &DatasetBundle::horizon)
      .def_readonly("behavior", &DatasetBundle::behavior)
      .def("num_tasks", &DatasetBundle::num_tasks);

  py::enum_<SolverConfig::Mode>(m, "Mode")
      .value("per_stage", SolverConfig::Mode::PerStage)
      .value("global_encoder", SolverConfig::Mode::Global);

  py::class_<SolverConfig>(m, "SolverConfig")
      .def(py::init<>())
      .def_readwrite("ridge", &SolverConfig::ridge)
      .def_readwrite("max_iter", &SolverConfig::max_iter)
      .def_readwrite("eps_theta", &SolverConfig::eps_theta)
      .def_readwrite("gamma", &SolverConfig::gamma)
      .def_readwrite("psi_eff", &SolverConfig::psi_eff)
      .def_readwrite("mode", &SolverConfig::mode);

  py::class_<FitReport>(m, "FitReport")
      .def_readonly("stage_losses", &FitReport::stage_losses)
      .def_readonly("iterations", &FitReport::iterations)
      .def_readonly("dtheta", &FitReport::dtheta)
      .def_readonly("residual_sq_variance", &FitReport::residual_sq_variance);

  py::class_<LearnedModel>(m, "LearnedModel")
      .def_readonly("encoder_index", &LearnedModel::encoder_index)
      .def_readonly("stage_encoders", &LearnedModel::stage_encoders)
      .def_readonly("decoders", &LearnedModel::decoders)
      .def_readonly("selection_trace", &LearnedModel::selection_trace)
      .def_readonly("stage_losses", &LearnedModel::stage_losses)
      .def_readonly("q_cap", &LearnedModel::q_cap)
      .def("q_table", &LearnedModel::q_table)
      .def("q_stage", &LearnedModel::q_stage);

  py::class_<TrainResult>(m, "TrainResult")
      .def_readonly("model", &TrainResult::model)
      .def_readonly("report", &TrainResult::report);

  py::class_<ExactTrainResult>(m, "ExactTrainResult")
      .def_readonly("model", &ExactTrainResult::model)
      .def_readonly("eps_irred", &ExactTrainResult::eps_irred)
      .def_readonly("variance_floor", &ExactTrainResult::variance_floor);

  py::class_<DownstreamFit>(m, "DownstreamFit")
      .def_readonly("decoders", &DownstreamFit::decoders)
      .def_readonly("stage_losses", &DownstreamFit::stage_losses);

  py::class_<ComparatorErrors>(m, "ComparatorErrors")
      .def_readonly("per_task", &ComparatorErrors::per_task)
      .def_readonly("delta", &ComparatorErrors::delta)
      .def_readonly("mean_sq", &ComparatorErrors::mean_sq);

  py::class_<Evaluation>(m, "Evaluation")
      .def_readonly("vs_optimal", &Evaluation::vs_optimal)
      .def_readonly("vs_behavior", &Evaluation::vs_behavior)
      .def_readonly("lambda_max", &Evaluation::lambda)
      .def_readonly("occupancies", &Evaluation::occupancies);

  py::class_<BoundInputs>(m, "BoundInputs")
      .def(py::init<>())
      .def_readwrite("b", &BoundInputs::b)
      .def_readwrite("num_encoders", &BoundInputs::num_encoders)
      .def_readwrite("psi_eff", &BoundInputs::psi_eff)
      .def_readwrite("num_tasks", &BoundInputs::num_tasks)
      .def_readwrite("n", &BoundInputs::n)
      .def_readwrite("horizon", &BoundInputs::horizon)
      .def_readwrite("delta", &BoundInputs::delta)
      .def_readwrite("lambda_max", &BoundInputs::lambda)
      .def_readwrite("sigma_sq", &BoundInputs::sigma_sq)
      .def_readwrite("eps_irred", &BoundInputs::eps_irred)
      .def_readwrite("rademacher", &BoundInputs::rademacher);

  py::class_<RademacherEstimate>(m, "RademacherEstimate")
      .def_readonly("estimate", &RademacherEstimate::estimate)
      .def_readonly("std_error", &RademacherEstimate::std_error)
      .def_readonly("analytic_bound", &RademacherEstimate::analytic_bound);

  py::class_<SlopeFit>(m, "SlopeFit")
      .def_readonly("slope", &SlopeFit::slope)
      .def_readonly("intercept", &SlopeFit::intercept)
      .def_readonly("r_squared", &SlopeFit::r_squared)
      .def_readonly("excluded", &SlopeFit::excluded);

  m.def("generate_ensemble", &generate_ensemble, py::arg("spec"), py::arg("seed"));
  m.def("recover_true_decoders", &recover_true_decoders, py::arg("ensemble"));
  m.def("optimal_q", &optimal_q, py::arg("mdp"));
  m.def("policy_q", py::overload_cast<const TabularMDP&, const Policy&>(&policy_q),
        py::arg("mdp"), py::arg("policy"));
  m.def("policy_q_stochastic",
        py::overload_cast<const TabularMDP&, const StochasticPolicy&>(&policy_q),
        py::arg("mdp"), py::arg("policy"));
  m.def("greedy_policy", &greedy_policy, py::arg("q"));
  m.def("occupancy", &occupancy, py::arg("mdp"), py::arg("behavior"));

  m.def("build_encoder_class", &build_encoder_class, py::arg("truth"),
        py::arg("num_distractors"), py::arg("corruption"), py::arg("seed"));
  m.def("linear_q", &linear_q, py::arg("phi"), py::arg("w"), py::arg("s"), py::arg("a"));
  m.def("linear_q_table", &linear_q_table, py::arg("phi"), py::arg("w"));

  m.def(
      "make_behavior",
      [](const TabularMDP& task, const std::string& spec) {
        return make_behavior(task, BehaviorSpec::parse(spec)).table;
      },
      py::arg("task"), py::arg("behavior"));
  m.def(
      "collect_bundle",
      [](const TaskEnsemble& ensemble, const std::string& behavior, int n,
         std::uint64_t seed) {
        return collect_bundle(ensemble, BehaviorSpec::parse(behavior), n, seed);
      },
      py::arg("ensemble"), py::arg("behavior"), py::arg("n"), py::arg("seed"));
  m.def("save_bundle", &save_bundle, py::arg("bundle"), py::arg("path"));
  m.def("load_bundle", &load_bundle, py::arg("path"));

  m.def("q_max", &q_max, py::arg("gamma"), py::arg("horizon"));
  m.def("empirical_bellman_loss", &empirical_bellman_loss, py::arg("phi"),
        py::arg("w_stage"), py::arg("w_next"), py::arg("bundle"), py::arg("h"),
        py::arg("gamma"));
  m.def("run_mtfqi", &run_mtfqi, py::arg("bundle"), py::arg("encoders"),
        py::arg("config"));
  m.def("run_exact_mtfqi", &run_exact_mtfqi, py::arg("ensemble"), py::arg("encoders"),
        py::arg("weights"), py::arg("config"));
  m.def("uniform_weights", &uniform_weights, py::arg("ensemble"));
  m.def("fit_downstream", &fit_downstream, py::arg("phi_hat"), py::arg("data"),
        py::arg("config"));

  m.def("weighted_q_error", &weighted_q_error, py::arg("q_hat"), py::arg("q_ref"),
        py::arg("mu"), py::arg("h"));
  m.def("lambda_max", &lambda_max, py::arg("mdp"), py::arg("mu_b"));
  m.def("lambda_max_bruteforce", &lambda_max_bruteforce, py::arg("mdp"), py::arg("mu_b"));
  m.def("default_psi_eff", &default_psi_eff, py::arg("w_max"), py::arg("n"), py::arg("d"));
  m.def("fixed_stage_bound", &fixed_stage_bound, py::arg("inputs"));
  m.def("recursion_step_bound", &recursion_step_bound, py::arg("err_next"),
        py::arg("inputs"));
  m.def("unrolled_horizon_bound", &unrolled_horizon_bound, py::arg("inputs"));
  m.def("downstream_bound", &downstream_bound, py::arg("inputs"));
  m.def("rademacher_estimate", &rademacher_estimate, py::arg("embeddings"),
        py::arg("w_max"), py::arg("num_draws"), py::arg("seed"));
  m.def(
      "evaluate_model",
      [](const TaskEnsemble& ensemble, const LearnedModel& model,
         const std::string& behavior) {
        return evaluate_model(ensemble, model, BehaviorSpec::parse(behavior));
      },
      py::arg("ensemble"), py::arg("model"), py::arg("behavior"));

  m.def("fit_loglog_slope",
        py::overload_cast<const std::vector<double>&, const std::vector<double>&>(
            &fit_loglog_slope),
        py::arg("axis_values"), py::arg("mean_responses"));

  m.def("save_ensemble",
        [](const TaskEnsemble& e, const std::string& path) { save_ensemble(e, path); });
  m.def("load_ensemble", [](const std::string& path) {
    auto loaded = load_ensemble(path);
    return loaded.ensemble;
  });
  m.def("ensemble_hash", &ensemble_hash, py::arg("ensemble"));
}
