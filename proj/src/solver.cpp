#include "mtfqi/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mtfqi {

namespace {

using Slices = std::vector<const std::vector<Transition>*>;

Slices stage_slices(const DatasetBundle& bundle, int h) {
  Slices slices;
  slices.reserve(bundle.tasks.size());
  for (const TaskDataset& task : bundle.tasks) {
    if (h < 0 || h >= task.horizon())
      throw std::out_of_range("stage index out of range for bundle");
    if (task.stages[h].empty())
      throw std::invalid_argument("empty stage slice in bundle");
    slices.push_back(&task.stages[h]);
  }
  return slices;
}

double clamp_value(double q, double cap) { return std::clamp(q, 0.0, cap); }

double max_next_q(const Matrix& q_next, int s_next) {
  double best = q_next(s_next, 0);
  for (int a = 1; a < q_next.cols(); ++a) best = std::max(best, q_next(s_next, a));
  return best;
}

// y_i = r_i + gamma * clamp(max_a' Qnext(s'_i, a')); plain rewards when
// q_next is empty (last stage).
std::vector<Vector> bellman_targets(const Slices& slices, const std::vector<Matrix>& q_next,
                                    double gamma, double cap) {
  std::vector<Vector> targets(slices.size());
  for (std::size_t t = 0; t < slices.size(); ++t) {
    const auto& slice = *slices[t];
    targets[t].resize(slice.size());
    for (std::size_t i = 0; i < slice.size(); ++i) {
      double y = slice[i].r;
      if (!q_next.empty())
        y += gamma * clamp_value(max_next_q(q_next[t], slice[i].s_next), cap);
      targets[t][i] = y;
    }
  }
  return targets;
}

StageFit fit_stage_core(const FeatureMap& phi, const Slices& slices,
                        const std::vector<Vector>& targets, double ridge) {
  if (targets.size() != slices.size())
    throw std::invalid_argument("fit_stage: one target vector per task required");
  const int d = phi.dim();
  StageFit fit;
  fit.decoders.resize(slices.size());

  double total_sq = 0.0;
  std::size_t total_count = 0;
  for (std::size_t t = 0; t < slices.size(); ++t) {
    const auto& slice = *slices[t];
    const Vector& y = targets[t];
    if (static_cast<int>(slice.size()) != y.size())
      throw std::invalid_argument("fit_stage: target length mismatch");

    Matrix x(slice.size(), d);
    for (std::size_t i = 0; i < slice.size(); ++i)
      x.row(i) = phi.table.row(phi.row_index(slice[i].s, slice[i].a));

    if (ridge == 0.0) {
      Eigen::ColPivHouseholderQR<Matrix> qr(x);
      qr.setThreshold(1e-10);
      if (qr.rank() < d)
        throw std::runtime_error("rank-deficient design; increase n or λ_reg");
    }
    Matrix normal = x.transpose() * x;
    normal.diagonal().array() += ridge;
    fit.decoders[t] = normal.ldlt().solve(x.transpose() * y);

    total_sq += (x * fit.decoders[t] - y).squaredNorm();
    total_count += slice.size();
  }
  fit.pooled_loss = total_sq / static_cast<double>(total_count);
  return fit;
}

std::vector<Matrix> evaluate_q(const FeatureMap& phi, const std::vector<Vector>& decoders) {
  std::vector<Matrix> q;
  q.reserve(decoders.size());
  for (const Vector& w : decoders) q.push_back(linear_q_table(phi, w));
  return q;
}

double stacked_delta(const std::vector<Vector>& a, const std::vector<Vector>& b) {
  double acc = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    if (b.empty())
      acc += a[t].squaredNorm();
    else
      acc += (a[t] - b[t]).squaredNorm();
  }
  return std::sqrt(acc);
}

// Runs the inner repeat loop of the stage update. The fit is closed form, so
// iteration 2 reproduces iteration 1 and dTheta drops to zero; the loop is
// kept so the report shows the convergence trace.
void converge_stage(const FeatureMap& phi, const Slices& slices,
                    const std::vector<Vector>& targets, const SolverConfig& config,
                    StageFit& fit, int& iterations, std::vector<double>& dtheta) {
  iterations = 0;
  dtheta.clear();
  std::vector<Vector> previous;  // Theta_0 = 0
  for (int k = 0; k < config.max_iter; ++k) {
    StageFit next = fit_stage_core(phi, slices, targets, config.ridge);
    const double change = stacked_delta(next.decoders, previous);
    previous = next.decoders;
    fit = std::move(next);
    dtheta.push_back(change);
    ++iterations;
    if (change < config.eps_theta) break;
  }
}

double variance_of_squared_residuals(const FeatureMap& phi, const std::vector<Vector>& decoders,
                                     const Slices& slices, const std::vector<Vector>& targets) {
  double sum = 0.0, sum_sq = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < slices.size(); ++t) {
    const auto& slice = *slices[t];
    for (std::size_t i = 0; i < slice.size(); ++i) {
      const double pred =
          phi.table.row(phi.row_index(slice[i].s, slice[i].a)).dot(decoders[t]);
      const double x = (pred - targets[t][i]) * (pred - targets[t][i]);
      sum += x;
      sum_sq += x * x;
      ++count;
    }
  }
  const double mean = sum / count;
  return std::max(0.0, sum_sq / count - mean * mean);
}

void check_bundle(const DatasetBundle& bundle) {
  if (bundle.tasks.empty()) throw std::invalid_argument("run_mtfqi: empty bundle");
  for (const TaskDataset& task : bundle.tasks) {
    if (task.horizon() != bundle.tasks[0].horizon())
      throw std::invalid_argument("run_mtfqi: tasks disagree on horizon");
    for (const auto& stage : task.stages)
      if (static_cast<int>(stage.size()) != task.samples_per_stage())
        throw std::invalid_argument("run_mtfqi: stages disagree on sample count");
  }
}

struct Recursion {
  std::vector<StageFit> fits;        // [H]
  std::vector<double> losses;        // [H]
  std::vector<int> iterations;       // [H]
  std::vector<std::vector<double>> dtheta;
  std::vector<double> res_sq_var;
  double total_loss = 0.0;
};

// Backward recursion with the encoder fixed for every stage.
Recursion fit_encoder_recursion(const DatasetBundle& bundle, const FeatureMap& phi,
                                const SolverConfig& config, double cap) {
  const int horizon = bundle.tasks[0].horizon();
  Recursion rec;
  rec.fits.resize(horizon);
  rec.losses.resize(horizon);
  rec.iterations.resize(horizon);
  rec.dtheta.resize(horizon);
  rec.res_sq_var.resize(horizon);
  std::vector<Matrix> q_next;
  for (int h = horizon - 1; h >= 0; --h) {
    const Slices slices = stage_slices(bundle, h);
    const std::vector<Vector> targets = bellman_targets(slices, q_next, config.gamma, cap);
    converge_stage(phi, slices, targets, config, rec.fits[h], rec.iterations[h],
                   rec.dtheta[h]);
    rec.losses[h] = rec.fits[h].pooled_loss;
    rec.res_sq_var[h] =
        variance_of_squared_residuals(phi, rec.fits[h].decoders, slices, targets);
    rec.total_loss += rec.losses[h];
    q_next = evaluate_q(phi, rec.fits[h].decoders);
  }
  return rec;
}

}  // namespace

double q_max(double gamma, int horizon) {
  if (horizon < 1) throw std::invalid_argument("q_max: horizon must be positive");
  if (gamma == 1.0) return static_cast<double>(horizon);
  return (1.0 - std::pow(gamma, horizon)) / (1.0 - gamma);
}

Matrix LearnedModel::q_stage(int t, int h) const {
  return linear_q_table(stage_encoders[h], decoders[t][h]);
}

QTable LearnedModel::q_table(int t) const {
  QTable q;
  q.values.reserve(stage_encoders.size());
  for (int h = 0; h < horizon(); ++h) q.values.push_back(q_stage(t, h));
  return q;
}

double empirical_bellman_loss(const FeatureMap& phi, const std::vector<Vector>& w_stage,
                              const std::vector<Vector>& w_next,
                              const DatasetBundle& bundle, int h, double gamma) {
  const Slices slices = stage_slices(bundle, h);
  if (w_stage.size() != slices.size())
    throw std::invalid_argument("empirical_bellman_loss: one decoder per task required");
  if (!w_next.empty() && w_next.size() != slices.size())
    throw std::invalid_argument("empirical_bellman_loss: next-stage decoder count mismatch");
  for (const Vector& w : w_stage)
    if (w.size() != phi.dim())
      throw std::invalid_argument("empirical_bellman_loss: decoder dimension mismatch");

  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < slices.size(); ++t) {
    for (const Transition& tr : *slices[t]) {
      double target = tr.r;
      if (!w_next.empty()) {
        double best = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < phi.num_actions; ++a)
          best = std::max(best, phi.table.row(phi.row_index(tr.s_next, a)).dot(w_next[t]));
        target += gamma * best;
      }
      const double pred = phi.table.row(phi.row_index(tr.s, tr.a)).dot(w_stage[t]);
      total += (pred - target) * (pred - target);
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

StageFit fit_stage(const FeatureMap& phi, const DatasetBundle& bundle, int h,
                   const std::vector<Vector>& targets, double ridge) {
  return fit_stage_core(phi, stage_slices(bundle, h), targets, ridge);
}

TrainResult run_mtfqi(const DatasetBundle& bundle, const EncoderClass& encoders,
                      const SolverConfig& config) {
  check_bundle(bundle);
  encoders.validate();
  const int horizon = bundle.tasks[0].horizon();
  const int num_tasks = bundle.num_tasks();
  const double cap = q_max(config.gamma, horizon);

  TrainResult result;
  LearnedModel& model = result.model;
  FitReport& report = result.report;
  model.config = config;
  model.q_cap = cap;
  model.encoder_index.assign(horizon, -1);
  model.stage_encoders.resize(horizon);
  model.selection_trace.assign(horizon, std::vector<double>(encoders.size(), 0.0));
  model.stage_losses.assign(horizon, 0.0);
  model.decoders.assign(num_tasks, std::vector<Vector>(horizon));
  report.stage_losses.assign(horizon, 0.0);
  report.iterations.assign(horizon, 0);
  report.dtheta.assign(horizon, {});
  report.residual_sq_variance.assign(horizon, 0.0);

  if (config.mode == SolverConfig::Mode::Global) {
    std::vector<Recursion> runs;
    runs.reserve(encoders.size());
    int best = 0;
    for (int i = 0; i < encoders.size(); ++i) {
      runs.push_back(fit_encoder_recursion(bundle, encoders.members[i], config, cap));
      for (int h = 0; h < horizon; ++h) model.selection_trace[h][i] = runs[i].losses[h];
      if (runs[i].total_loss < runs[best].total_loss) best = i;
    }
    const Recursion& chosen = runs[best];
    for (int h = 0; h < horizon; ++h) {
      model.encoder_index[h] = best;
      model.stage_encoders[h] = encoders.members[best];
      model.stage_losses[h] = chosen.losses[h];
      report.stage_losses[h] = chosen.losses[h];
      report.iterations[h] = chosen.iterations[h];
      report.dtheta[h] = chosen.dtheta[h];
      report.residual_sq_variance[h] = chosen.res_sq_var[h];
      for (int t = 0; t < num_tasks; ++t)
        model.decoders[t][h] = chosen.fits[h].decoders[t];
    }
    return result;
  }

  std::vector<Matrix> q_next;
  for (int h = horizon - 1; h >= 0; --h) {
    const Slices slices = stage_slices(bundle, h);
    const std::vector<Vector> targets = bellman_targets(slices, q_next, config.gamma, cap);

    int best = -1;
    StageFit best_fit;
    for (int i = 0; i < encoders.size(); ++i) {
      StageFit fit;
      try {
        fit = fit_stage_core(encoders.members[i], slices, targets, config.ridge);
      } catch (const std::exception& e) {
        throw std::runtime_error("stage " + std::to_string(h + 1) + ", encoder '" +
                                 encoders.members[i].label + "': " + e.what());
      }
      model.selection_trace[h][i] = fit.pooled_loss;
      if (best < 0 || fit.pooled_loss < best_fit.pooled_loss) {
        best = i;
        best_fit = std::move(fit);
      }
    }

    converge_stage(encoders.members[best], slices, targets, config, best_fit,
                   report.iterations[h], report.dtheta[h]);
    model.encoder_index[h] = best;
    model.stage_encoders[h] = encoders.members[best];
    model.stage_losses[h] = best_fit.pooled_loss;
    report.stage_losses[h] = best_fit.pooled_loss;
    report.residual_sq_variance[h] = variance_of_squared_residuals(
        encoders.members[best], best_fit.decoders, slices, targets);
    for (int t = 0; t < num_tasks; ++t) model.decoders[t][h] = best_fit.decoders[t];
    q_next = evaluate_q(encoders.members[best], best_fit.decoders);
  }
  return result;
}

std::vector<OccupancyMeasure> uniform_weights(const TaskEnsemble& ensemble) {
  const int S = ensemble.spec.num_states;
  const int K = ensemble.spec.num_actions;
  OccupancyMeasure uniform;
  uniform.weights.assign(ensemble.spec.horizon, Matrix::Constant(S, K, 1.0 / (S * K)));
  return std::vector<OccupancyMeasure>(ensemble.tasks.size(), uniform);
}

ExactTrainResult run_exact_mtfqi(const TaskEnsemble& ensemble, const EncoderClass& encoders,
                                 const std::vector<OccupancyMeasure>& weights,
                                 const SolverConfig& config) {
  encoders.validate();
  const int S = ensemble.spec.num_states;
  const int K = ensemble.spec.num_actions;
  const int horizon = ensemble.spec.horizon;
  const int num_tasks = static_cast<int>(ensemble.tasks.size());
  if (static_cast<int>(weights.size()) != num_tasks)
    throw std::invalid_argument("run_exact_mtfqi: one weight table per task required");
  for (const OccupancyMeasure& mu : weights) {
    if (static_cast<int>(mu.weights.size()) != horizon)
      throw std::invalid_argument("run_exact_mtfqi: weight horizon mismatch");
    for (const Matrix& w : mu.weights) {
      if (w.rows() != S || w.cols() != K)
        throw std::invalid_argument("run_exact_mtfqi: weight table shape mismatch");
      if ((w.array() < 0.0).any() || std::abs(w.sum() - 1.0) > 1e-9)
        throw std::invalid_argument("run_exact_mtfqi: weights must form a distribution");
    }
  }

  const double cap = q_max(config.gamma, horizon);
  ExactTrainResult result;
  LearnedModel& model = result.model;
  model.config = config;
  model.q_cap = cap;
  model.encoder_index.assign(horizon, -1);
  model.stage_encoders.resize(horizon);
  model.selection_trace.assign(horizon, std::vector<double>(encoders.size(), 0.0));
  model.stage_losses.assign(horizon, 0.0);
  model.decoders.assign(num_tasks, std::vector<Vector>(horizon));
  result.eps_irred.assign(horizon, 0.0);
  result.variance_floor.assign(horizon, 0.0);

  std::vector<Matrix> q_next;  // fitted tables of stage h+1
  for (int h = horizon - 1; h >= 0; --h) {
    // Conditional-mean targets and the bootstrap-variance floor, per task.
    std::vector<Matrix> mean_target(num_tasks);
    double floor = 0.0;
    for (int t = 0; t < num_tasks; ++t) {
      const TabularMDP& task = ensemble.tasks[t];
      mean_target[t].resize(S, K);
      double task_floor = 0.0;
      for (int s = 0; s < S; ++s) {
        for (int a = 0; a < K; ++a) {
          double mean = 0.0, second = 0.0;
          if (!q_next.empty()) {
            const auto row = task.transitions[h].row(task.sa_index(s, a));
            for (int sn = 0; sn < S; ++sn) {
              const double m = clamp_value(max_next_q(q_next[t], sn), cap);
              mean += row[sn] * m;
              second += row[sn] * m * m;
            }
          }
          mean_target[t](s, a) = task.rewards[h](s, a) + config.gamma * mean;
          task_floor += weights[t].weights[h](s, a) * config.gamma * config.gamma *
                        std::max(0.0, second - mean * mean);
        }
      }
      floor += task_floor / num_tasks;
    }
    result.variance_floor[h] = floor;

    // Weighted normal equations per encoder; excess loss decides selection
    // (the variance floor is common to every candidate).
    int best = -1;
    double best_excess = 0.0;
    std::vector<Vector> best_decoders;
    double min_excess = std::numeric_limits<double>::infinity();
    for (int i = 0; i < encoders.size(); ++i) {
      const FeatureMap& phi = encoders.members[i];
      const int d = phi.dim();
      double excess = 0.0;
      std::vector<Vector> decoders(num_tasks);
      for (int t = 0; t < num_tasks; ++t) {
        Matrix normal = Matrix::Zero(d, d);
        Vector moment = Vector::Zero(d);
        for (int s = 0; s < S; ++s) {
          for (int a = 0; a < K; ++a) {
            const double wgt = weights[t].weights[h](s, a);
            if (wgt == 0.0) continue;
            const Vector row = phi.table.row(phi.row_index(s, a)).transpose();
            normal.noalias() += wgt * row * row.transpose();
            moment.noalias() += wgt * mean_target[t](s, a) * row;
          }
        }
        normal.diagonal().array() += config.ridge;
        decoders[t] = normal.ldlt().solve(moment);
        for (int s = 0; s < S; ++s)
          for (int a = 0; a < K; ++a) {
            const double wgt = weights[t].weights[h](s, a);
            if (wgt == 0.0) continue;
            const double diff =
                phi.table.row(phi.row_index(s, a)).dot(decoders[t]) - mean_target[t](s, a);
            excess += wgt * diff * diff / num_tasks;
          }
      }
      model.selection_trace[h][i] = excess + floor;
      min_excess = std::min(min_excess, excess);
      if (best < 0 || excess < best_excess) {
        best = i;
        best_excess = excess;
        best_decoders = std::move(decoders);
      }
    }

    result.eps_irred[h] = min_excess;
    model.encoder_index[h] = best;
    model.stage_encoders[h] = encoders.members[best];
    model.stage_losses[h] = best_excess + floor;
    for (int t = 0; t < num_tasks; ++t) model.decoders[t][h] = best_decoders[t];
    q_next = evaluate_q(encoders.members[best], best_decoders);
  }
  return result;
}

DownstreamFit fit_downstream(const FeatureMap& phi_hat, const TaskDataset& data,
                             const SolverConfig& config) {
  if (data.horizon() < 1) throw std::invalid_argument("fit_downstream: empty dataset");
  const int horizon = data.horizon();
  const double cap = q_max(config.gamma, horizon);

  DownstreamFit fit;
  fit.decoders.resize(horizon);
  fit.stage_losses.resize(horizon);
  std::vector<Matrix> q_next;
  for (int h = horizon - 1; h >= 0; --h) {
    const Slices slices{&data.stages[h]};
    const std::vector<Vector> targets = bellman_targets(slices, q_next, config.gamma, cap);
    StageFit stage = fit_stage_core(phi_hat, slices, targets, config.ridge);
    fit.decoders[h] = stage.decoders[0];
    fit.stage_losses[h] = stage.pooled_loss;
    q_next = evaluate_q(phi_hat, stage.decoders);
  }
  return fit;
}

}  // namespace mtfqi
