// Command-line front end: generate ensembles, collect offline data, train,
// evaluate, and reproduce the scaling sweeps.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mtfqi/analysis.hpp"
#include "mtfqi/ensemble.hpp"
#include "mtfqi/format.hpp"
#include "mtfqi/harness.hpp"
#include "mtfqi/offline_data.hpp"
#include "mtfqi/rng.hpp"
#include "mtfqi/serialize.hpp"
#include "mtfqi/solver.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mtfqi;

namespace {

int cmd_gen_ensemble(int S, int K, int H, int T, int d, double gamma, double w_max,
                     std::uint64_t seed, int distractors, double corruption,
                     const std::string& out) {
  EnsembleSpec spec;
  spec.num_states = S;
  spec.num_actions = K;
  spec.horizon = H;
  spec.num_tasks = T;
  spec.latent_dim = d;
  spec.gamma = gamma;
  spec.w_max = w_max;
  const TaskEnsemble ensemble = generate_ensemble(spec, seed);
  if (distractors >= 0) {
    const EncoderClass encoders = build_encoder_class(
        ensemble.true_features, distractors, corruption, derive_seed(seed, 0xEC));
    save_ensemble(ensemble, out, &encoders);
  } else {
    save_ensemble(ensemble, out);
  }
  std::cout << "wrote " << out << " (hash " << ensemble_hash(ensemble) << ")\n";
  return 0;
}

int cmd_encoders(const std::string& ensemble_path, int distractors, double corruption,
                 std::uint64_t seed, const std::string& out) {
  const LoadedEnsemble loaded = load_ensemble(ensemble_path);
  const EncoderClass encoders =
      build_encoder_class(loaded.ensemble.true_features, distractors, corruption, seed);
  save_ensemble(loaded.ensemble, out, &encoders);
  std::cout << "wrote " << out << " with " << encoders.size() << " encoders\n";
  return 0;
}

int cmd_collect(const std::string& ensemble_path, int n, const std::string& behavior,
                std::uint64_t seed, const std::string& out) {
  const LoadedEnsemble loaded = load_ensemble(ensemble_path);
  DatasetBundle bundle =
      collect_bundle(loaded.ensemble, BehaviorSpec::parse(behavior), n, seed);
  bundle.ensemble_hash = ensemble_hash(loaded.ensemble);
  save_bundle(bundle, out);
  std::cout << "wrote " << out << " (" << bundle.num_tasks() << " tasks x "
            << bundle.horizon << " stages x " << n << " transitions)\n";
  return 0;
}

int cmd_train(const std::string& data_path, const std::string& encoders_path,
              const std::string& mode, double gamma, double ridge,
              const std::string& out) {
  const DatasetBundle bundle = load_bundle(data_path);
  const LoadedEnsemble loaded = load_ensemble(encoders_path);
  if (!loaded.encoders)
    throw std::runtime_error("train: " + encoders_path +
                             " does not embed an encoder class; run `encoders` first");

  SolverConfig config;
  config.gamma = gamma;
  config.ridge = ridge;
  config.mode =
      mode == "global" ? SolverConfig::Mode::Global : SolverConfig::Mode::PerStage;
  config.psi_eff = default_psi_eff(loaded.ensemble.spec.w_max, bundle.n,
                                   loaded.ensemble.spec.latent_dim);
  const TrainResult result = run_mtfqi(bundle, *loaded.encoders, config);
  save_model(result.model, result.report, out);

  std::cout << "wrote " << out << "\n";
  for (int h = 0; h < result.model.horizon(); ++h)
    std::cout << "  stage " << (h + 1) << ": encoder '"
              << result.model.stage_encoders[h].label
              << "' loss " << format_double(result.model.stage_losses[h]) << "\n";
  return 0;
}

int cmd_evaluate(const std::string& model_path, const std::string& ensemble_path,
                 const std::string& data_path, double delta, const std::string& out) {
  const LoadedModel loaded_model = load_model(model_path);
  const LoadedEnsemble loaded = load_ensemble(ensemble_path);
  const DatasetBundle bundle = load_bundle(data_path);
  if (!bundle.ensemble_hash.empty() &&
      bundle.ensemble_hash != ensemble_hash(loaded.ensemble))
    throw std::runtime_error("evaluate: dataset was collected from a different ensemble");

  const BehaviorSpec behavior = BehaviorSpec::parse(bundle.behavior);
  const Evaluation eval = evaluate_model(loaded.ensemble, loaded_model.model, behavior);

  const int horizon = loaded.ensemble.spec.horizon;
  BoundInputs inputs;
  const double cap = q_max(loaded_model.model.config.gamma, horizon);
  inputs.b = cap * cap;
  inputs.num_encoders = 1.0;
  inputs.psi_eff = loaded_model.model.config.psi_eff > 0.0
                       ? loaded_model.model.config.psi_eff
                       : default_psi_eff(loaded.ensemble.spec.w_max, bundle.n,
                                         loaded.ensemble.spec.latent_dim);
  inputs.num_tasks = bundle.num_tasks();
  inputs.n = bundle.n;
  inputs.horizon = horizon;
  inputs.delta = delta;
  inputs.lambda = eval.lambda;
  inputs.rademacher =
      loaded.ensemble.spec.w_max / std::sqrt(static_cast<double>(bundle.n));
  for (double v : loaded_model.report.residual_sq_variance)
    inputs.sigma_sq = std::max(inputs.sigma_sq, v);

  json eps_irred_stages = json::array();
  json variance_floor = json::array();
  if (loaded.encoders) {
    inputs.num_encoders = loaded.encoders->size();
    std::vector<OccupancyMeasure> weights;
    for (std::size_t t = 0; t < loaded.ensemble.tasks.size(); ++t)
      weights.push_back(eval.occupancies[t]);
    const ExactTrainResult exact =
        run_exact_mtfqi(loaded.ensemble, *loaded.encoders, weights,
                        loaded_model.model.config);
    for (double v : exact.eps_irred) {
      eps_irred_stages.push_back(v);
      inputs.eps_irred = std::max(inputs.eps_irred, v);
    }
    for (double v : exact.variance_floor) variance_floor.push_back(v);
  }

  const HorizonBoundTerms horizon_terms = unrolled_horizon_terms(inputs);
  const DownstreamBoundTerms downstream_terms = downstream_bound_terms(inputs);
  json report{
      {"schema_version", 1},
      {"kind", "mtfqi.report"},
      {"delta", delta},
      {"comparators",
       {{"optimal",
         {{"delta", eval.vs_optimal.delta},
          {"mean_sq", eval.vs_optimal.mean_sq},
          {"per_task", eval.vs_optimal.per_task}}},
        {"behavior",
         {{"delta", eval.vs_behavior.delta},
          {"mean_sq", eval.vs_behavior.mean_sq},
          {"per_task", eval.vs_behavior.per_task}}}}},
      {"lambda_max", eval.lambda},
      {"bound_inputs",
       {{"b", inputs.b},
        {"num_encoders", inputs.num_encoders},
        {"psi_eff", inputs.psi_eff},
        {"T", inputs.num_tasks},
        {"n", inputs.n},
        {"H", inputs.horizon},
        {"delta", inputs.delta},
        {"lambda_max", inputs.lambda},
        {"sigma_sq", inputs.sigma_sq},
        {"sigma_sq_worst_case", inputs.b * inputs.b / 4.0},
        {"eps_irred", inputs.eps_irred},
        {"rademacher_analytic", inputs.rademacher}}},
      {"eps_irred_stages", eps_irred_stages},
      {"bootstrap_variance_floor", variance_floor},
      {"bounds",
       {{"fixed_stage", fixed_stage_bound(inputs)},
        {"horizon", horizon_terms.total()},
        {"horizon_terms",
         {{"approx", horizon_terms.approx},
          {"stat_sqrt", horizon_terms.stat_sqrt},
          {"stat_linear", horizon_terms.stat_linear}}},
        {"downstream", downstream_terms.total()},
        {"downstream_terms",
         {{"approx", downstream_terms.approx},
          {"complexity", downstream_terms.complexity},
          {"tail", downstream_terms.tail}}}}}};

  std::ofstream stream(out, std::ios::binary);
  if (!stream) throw std::runtime_error("evaluate: cannot open " + out);
  stream << report.dump(2) << "\n";
  std::cout << "wrote " << out << "\n";
  std::cout << "  delta_1 vs optimal  " << format_double(eval.vs_optimal.delta[0]) << "\n";
  std::cout << "  delta_1 vs behavior " << format_double(eval.vs_behavior.delta[0]) << "\n";
  std::cout << "  lambda_max          " << format_double(eval.lambda) << "\n";
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& out_dir) {
  const ExperimentConfig config = load_experiment_config(config_path);
  fs::create_directories(out_dir);
  const std::vector<CellResult> cells = run_sweep(config);
  const std::vector<SweepRow> rows = sweep_rows(cells);
  const std::string csv_path =
      (fs::path(out_dir) / ("sweep_" + config.axis + ".csv")).string();
  write_csv(rows, csv_path);

  int failed = 0;
  for (const SweepRow& row : rows)
    if (!row.ok) ++failed;
  std::cout << "wrote " << csv_path << " (" << rows.size() << " rows";
  if (failed > 0) std::cout << ", " << failed << " failed";
  std::cout << ")\n";
  try {
    const SlopeFit fit = fit_loglog_slope(rows, "d1_opt", /*square=*/true);
    std::cout << "  log-log slope of mean d1_opt^2 vs " << config.axis << ": "
              << format_double(fit.slope) << " (r^2 " << format_double(fit.r_squared)
              << ")\n";
  } catch (const std::exception& e) {
    std::cout << "  slope unavailable: " << e.what() << "\n";
  }
  return failed == 0 ? 0 : 1;
}

int cmd_plot(const std::string& csv, const std::string& axis, const std::string& response,
             const std::string& out) {
  emit_plot(csv, axis, response, out);
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_slope(const std::string& csv, const std::string& response, bool square) {
  const std::vector<SweepRow> rows = read_csv(csv);
  const SlopeFit fit = fit_loglog_slope(rows, response, square);
  std::cout << "slope " << format_double(fit.slope) << "\n";
  std::cout << "intercept " << format_double(fit.intercept) << "\n";
  std::cout << "r_squared " << format_double(fit.r_squared) << "\n";
  if (fit.excluded > 0)
    std::cout << "excluded " << fit.excluded << " non-positive mean responses\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multitask fitted Q-iteration on synthetic low-rank MDP ensembles"};
  app.require_subcommand(1);

  // gen-ensemble
  int S = 5, K = 3, H = 5, T = 5, d = 4;
  double gamma = 1.0, w_max = 1.0;
  std::uint64_t seed = 1;
  int distractors = 7;
  double corruption = FixedParams{}.corruption;
  std::string out, ensemble_path, data_path, model_path, encoders_path;
  auto* gen = app.add_subcommand("gen-ensemble", "generate a task ensemble");
  gen->add_option("--S", S, "states");
  gen->add_option("--K", K, "actions");
  gen->add_option("--H", H, "horizon");
  gen->add_option("--T", T, "tasks");
  gen->add_option("--d", d, "latent dimension");
  gen->add_option("--gamma", gamma, "discount");
  gen->add_option("--w-max", w_max, "decoder norm budget");
  gen->add_option("--seed", seed, "seed");
  gen->add_option("--distractors", distractors,
                  "embedded encoder-class distractors (negative skips the class)");
  gen->add_option("--corruption", corruption, "distractor corruption in (0,1]");
  gen->add_option("--out", out, "output ensemble JSON")->required();

  // encoders
  std::uint64_t encoder_seed = 1;
  auto* enc = app.add_subcommand("encoders", "embed an encoder class in an ensemble file");
  enc->add_option("--ensemble", ensemble_path, "ensemble JSON")->required();
  enc->add_option("--distractors", distractors, "distractor count");
  enc->add_option("--corruption", corruption, "corruption in (0,1]");
  enc->add_option("--seed", encoder_seed, "seed");
  enc->add_option("--out", out, "output ensemble JSON")->required();

  // collect
  int n = 200;
  std::string behavior = "uniform";
  auto* col = app.add_subcommand("collect", "collect offline datasets");
  col->add_option("--ensemble", ensemble_path, "ensemble JSON")->required();
  col->add_option("--n", n, "transitions per task per stage")->required();
  col->add_option("--behavior", behavior, "uniform | eps:<float>");
  col->add_option("--seed", seed, "seed");
  col->add_option("--out", out, "output JSONL bundle")->required();

  // train
  std::string mode = "per-stage";
  double ridge = 1e-8;
  auto* train = app.add_subcommand("train", "run multitask fitted Q-iteration");
  train->add_option("--data", data_path, "dataset bundle")->required();
  train->add_option("--encoders", encoders_path, "ensemble JSON with embedded encoders")
      ->required();
  train->add_option("--mode", mode, "per-stage | global")
      ->check(CLI::IsMember({"per-stage", "global"}));
  train->add_option("--gamma", gamma, "discount");
  train->add_option("--ridge", ridge, "ridge regularizer");
  train->add_option("--out", out, "output model JSON")->required();

  // evaluate
  double delta = 0.05;
  auto* eval = app.add_subcommand("evaluate", "error report and bound values");
  eval->add_option("--model", model_path, "model JSON")->required();
  eval->add_option("--ensemble", ensemble_path, "ensemble JSON")->required();
  eval->add_option("--data", data_path, "dataset bundle")->required();
  eval->add_option("--delta", delta, "confidence level");
  eval->add_option("--out", out, "output report JSON")->required();

  // sweep
  std::string config_path, out_dir;
  auto* sweep = app.add_subcommand("sweep", "run a T/n/H scaling sweep");
  sweep->add_option("--config", config_path, "sweep config JSON")->required();
  sweep->add_option("--out-dir", out_dir, "output directory")->required();

  // plot
  std::string csv, axis = "T", response = "d1_opt";
  auto* plot = app.add_subcommand("plot", "render a log-log SVG from a sweep CSV");
  plot->add_option("--csv", csv, "sweep CSV")->required();
  plot->add_option("--axis", axis, "T | n | H")
      ->check(CLI::IsMember({"T", "n", "H"}));
  plot->add_option("--response", response, "response column");
  plot->add_option("--out", out, "output SVG")->required();

  // slope
  bool square = false;
  auto* slope = app.add_subcommand("slope", "log-log slope of a response column");
  slope->add_option("--csv", csv, "sweep CSV")->required();
  slope->add_option("--response", response, "response column");
  slope->add_flag("--square", square, "square the response before averaging");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return cmd_gen_ensemble(S, K, H, T, d, gamma, w_max, seed, distractors, corruption,
                              out);
    if (enc->parsed())
      return cmd_encoders(ensemble_path, distractors, corruption, encoder_seed, out);
    if (col->parsed()) return cmd_collect(ensemble_path, n, behavior, seed, out);
    if (train->parsed())
      return cmd_train(data_path, encoders_path, mode, gamma, ridge, out);
    if (eval->parsed())
      return cmd_evaluate(model_path, ensemble_path, data_path, delta, out);
    if (sweep->parsed()) return cmd_sweep(config_path, out_dir);
    if (plot->parsed()) return cmd_plot(csv, axis, response, out);
    if (slope->parsed()) return cmd_slope(csv, response, square);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
