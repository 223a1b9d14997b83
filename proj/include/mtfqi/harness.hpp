#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtfqi/analysis.hpp"
#include "mtfqi/offline_data.hpp"
#include "mtfqi/solver.hpp"

namespace mtfqi {

// Parameters held fixed during a sweep; the swept axis overrides one of
// num_tasks / samples / horizon per cell.
struct FixedParams {
  int num_states = 5;
  int num_actions = 3;
  int latent_dim = 4;
  int num_tasks = 5;
  int samples = 200;
  int horizon = 5;
  double gamma = 1.0;
  int num_encoders = 8;
  double corruption = 0.25;
  BehaviorSpec behavior;
  double delta = 0.05;
  double w_max = 1.0;
  double ridge = 1e-8;
  SolverConfig::Mode mode = SolverConfig::Mode::PerStage;
};

struct ExperimentConfig {
  std::string axis;         // "T", "n" or "H"
  std::vector<int> values;  // strictly increasing, at least 2
  FixedParams fixed;
  std::vector<std::uint64_t> seeds;  // at least 5 for slope fits

  void validate() const;
};

ExperimentConfig load_experiment_config(const std::string& path);
void save_experiment_config(const ExperimentConfig& config, const std::string& path);

struct SweepRow {
  std::string axis;
  int axis_value = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double d1_opt = 0.0;             // stage-1 gap vs Q*, task-averaged
  double d1_beh = 0.0;             // stage-1 gap vs Q^{pi_b}
  double stage_h_mse = 0.0;        // last-stage mean squared gap vs Q*
  double fixed_stage_bound = 0.0;
  double horizon_bound = 0.0;
  double lambda = 0.0;
  double wall_ms = 0.0;  // kept out of the CSV so reruns stay byte-identical
};

struct CellResult {
  SweepRow row;
  Evaluation eval;     // per-stage errors for both comparators
  BoundInputs inputs;
};

// One full pipeline run: generate, collect, train, evaluate. Failures are
// captured in row.error instead of thrown.
CellResult run_cell(const FixedParams& fixed, const std::string& axis, int axis_value,
                    std::uint64_t seed);

// Every (value, seed) cell, in deterministic (value, seed) order regardless
// of scheduling. MTFQI_THREADS caps the worker pool.
std::vector<CellResult> run_sweep(const ExperimentConfig& config);

std::vector<SweepRow> sweep_rows(const std::vector<CellResult>& cells);

// Frozen column order; numbers as shortest round-trip decimals.
void write_csv(const std::vector<SweepRow>& rows, const std::string& path);
std::vector<SweepRow> read_csv(const std::string& path);

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 1.0;
  int excluded = 0;  // axis values dropped for non-positive mean response
};

// OLS of log(mean-over-seeds response) on log(axis value).
SlopeFit fit_loglog_slope(const std::vector<double>& axis_values,
                          const std::vector<double>& mean_responses);
SlopeFit fit_loglog_slope(const std::vector<SweepRow>& rows, const std::string& response,
                          bool square_response = false);

// Per-axis-value mean of a response column over the ok rows.
std::vector<std::pair<double, double>> mean_response(const std::vector<SweepRow>& rows,
                                                     const std::string& response,
                                                     bool square_response = false);

// Standalone log-log SVG: per-seed scatter, mean line, fitted slope
// annotation, and the horizon-bound curve overlaid when finite. Byte
// deterministic for identical input.
void emit_plot(const std::string& csv_path, const std::string& axis,
               const std::string& response, const std::string& out_path);

}  // namespace mtfqi
