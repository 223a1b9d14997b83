#pragma once

#include <string>
#include <vector>

#include "mtfqi/ensemble.hpp"
#include "mtfqi/features.hpp"
#include "mtfqi/offline_data.hpp"

namespace mtfqi {

// (1 - gamma^H) / (1 - gamma), the cap on any return; H at gamma = 1.
double q_max(double gamma, int horizon);

struct SolverConfig {
  double ridge = 1e-8;      // numerical stabilizer on the normal equations
  int max_iter = 50;
  double eps_theta = 1e-10; // inner-loop convergence threshold on ||dTheta||
  double gamma = 1.0;
  double psi_eff = 0.0;     // effective decoder-class size, reporting only;
                            // 0 means "derive the covering count from n"
  enum class Mode { PerStage, Global };
  Mode mode = Mode::PerStage;
};

struct StageFit {
  std::vector<Vector> decoders;  // one per task
  double pooled_loss = 0.0;      // 1/(T n) sum of squared residuals
};

struct FitReport {
  std::vector<double> stage_losses;              // [H]
  std::vector<int> iterations;                   // [H]
  std::vector<std::vector<double>> dtheta;       // [H][iteration]
  std::vector<double> residual_sq_variance;      // [H]
};

struct LearnedModel {
  SolverConfig config;
  double q_cap = 0.0;
  std::vector<int> encoder_index;                  // [H], index into the class
  std::vector<FeatureMap> stage_encoders;          // [H], resolved copies
  std::vector<std::vector<Vector>> decoders;       // [t][h]
  std::vector<std::vector<double>> selection_trace;// [H][|Phi|] pooled losses
  std::vector<double> stage_losses;                // [H], loss of the pick

  int horizon() const { return static_cast<int>(stage_encoders.size()); }
  int num_tasks() const { return static_cast<int>(decoders.size()); }
  Matrix q_stage(int t, int h) const;
  QTable q_table(int t) const;
};

struct TrainResult {
  LearnedModel model;
  FitReport report;
};

// Empirical squared Bellman residual 1/(T n) sum_t sum_i
//   (<phi(s,a), w_h[t]> - r - gamma * max_a' <phi(s',a'), w_next[t]>)^2
// over the stage-h slices. Pass w_next empty at the last stage (no bootstrap).
double empirical_bellman_loss(const FeatureMap& phi, const std::vector<Vector>& w_stage,
                              const std::vector<Vector>& w_next,
                              const DatasetBundle& bundle, int h, double gamma);

// Per-task ridge regression of targets on phi rows via normal equations.
// Throws "rank-deficient design; increase n or λ_reg" when ridge = 0 and a
// task design matrix has column rank < d.
StageFit fit_stage(const FeatureMap& phi, const DatasetBundle& bundle, int h,
                   const std::vector<Vector>& targets, double ridge);

// Backward fitted Q-iteration over the bundle. At each stage the targets come
// from the already-fixed later stage, every encoder in the class is fit, and
// the pooled-loss minimizer is selected (ties break toward the lowest member
// index). Bootstrapped values are clamped to [0, q_max] before entering
// targets. Mode::Global instead runs one full recursion per encoder and picks
// the encoder with the smallest summed loss.
TrainResult run_mtfqi(const DatasetBundle& bundle, const EncoderClass& encoders,
                      const SolverConfig& config);

struct ExactTrainResult {
  LearnedModel model;
  // Per-stage diagnostics of the population problem: the best in-class excess
  // loss (0 when the class contains the generating features), and the
  // bootstrap-variance floor common to all encoders.
  std::vector<double> eps_irred;
  std::vector<double> variance_floor;
};

// Population version of run_mtfqi: sample averages are replaced by exact
// expectations under per-task state-action weights and the true transitions.
// Weights must be full-support for sup-norm recovery of Q*; stage-1 behavior
// occupancies concentrate on the initial state and only pin the solution down
// on their support.
ExactTrainResult run_exact_mtfqi(const TaskEnsemble& ensemble, const EncoderClass& encoders,
                                 const std::vector<OccupancyMeasure>& weights,
                                 const SolverConfig& config);

// Full-support helper weights: uniform over (s,a) at every stage.
std::vector<OccupancyMeasure> uniform_weights(const TaskEnsemble& ensemble);

struct DownstreamFit {
  std::vector<Vector> decoders;     // [h]
  std::vector<double> stage_losses; // [h]
};

// Single-task backward FQI with the encoder frozen; no minimization over the
// class. Inputs for the downstream generalization bound.
DownstreamFit fit_downstream(const FeatureMap& phi_hat, const TaskDataset& data,
                             const SolverConfig& config);

}  // namespace mtfqi
