#include "mtfqi/ensemble.hpp"

#include <cmath>
#include <stdexcept>

#include "mtfqi/rng.hpp"

namespace mtfqi {

namespace {

constexpr double kRealizabilityTol = 1e-8;

Vector flatten(const Matrix& q) {
  Vector v(q.rows() * q.cols());
  for (int s = 0; s < q.rows(); ++s)
    for (int a = 0; a < q.cols(); ++a) v[s * q.cols() + a] = q(s, a);
  return v;
}

void check_spec(const EnsembleSpec& spec) {
  if (spec.num_states < 1 || spec.num_actions < 1 || spec.horizon < 1 ||
      spec.num_tasks < 1 || spec.latent_dim < 1)
    throw std::invalid_argument("generate_ensemble: S, K, H, T, d must be positive");
  if (spec.latent_dim > spec.num_states * spec.num_actions)
    throw std::invalid_argument("generate_ensemble: latent_dim must not exceed S*K");
  if (!(spec.gamma > 0.0 && spec.gamma <= 1.0))
    throw std::invalid_argument("generate_ensemble: gamma must lie in (0,1]");
  if (spec.w_max <= 0.0)
    throw std::invalid_argument("generate_ensemble: w_max must be positive");
}

}  // namespace

std::vector<Vector> recover_decoders(const FeatureMap& phi, const QTable& q) {
  Eigen::ColPivHouseholderQR<Matrix> qr(phi.table);
  qr.setThreshold(1e-10);
  if (qr.rank() < phi.dim()) throw std::runtime_error("degenerate features");

  std::vector<Vector> decoders;
  decoders.reserve(q.values.size());
  for (const Matrix& stage : q.values) {
    Vector target = flatten(stage);
    Vector w = qr.solve(target);
    const double residual = (phi.table * w - target).cwiseAbs().maxCoeff();
    if (residual > kRealizabilityTol)
      throw std::runtime_error("recover_decoders: realizability residual " +
                               std::to_string(residual) + " exceeds 1e-8");
    decoders.push_back(std::move(w));
  }
  return decoders;
}

std::vector<std::vector<Vector>> recover_true_decoders(const TaskEnsemble& ensemble) {
  std::vector<std::vector<Vector>> all;
  all.reserve(ensemble.tasks.size());
  for (const TabularMDP& task : ensemble.tasks)
    all.push_back(recover_decoders(ensemble.true_features, optimal_q(task)));
  return all;
}

TaskEnsemble generate_ensemble(const EnsembleSpec& spec, std::uint64_t seed) {
  check_spec(spec);
  const int S = spec.num_states;
  const int K = spec.num_actions;
  const int H = spec.horizon;
  const int T = spec.num_tasks;
  const int d = spec.latent_dim;
  const int rows = S * K;

  Rng rng(seed);

  // Shared simplex features; the stored map is rescaled so the widest row
  // has unit norm and the decoder-norm budget is used fully.
  Matrix base(rows, d);
  for (int r = 0; r < rows; ++r) base.row(r) = rng.simplex(d).transpose();
  double max_norm = 0.0;
  for (int r = 0; r < rows; ++r) max_norm = std::max(max_norm, base.row(r).norm());
  const double feature_scale = 1.0 / max_norm;

  TaskEnsemble ensemble;
  ensemble.spec = spec;
  ensemble.seed = seed;
  ensemble.feature_scale = feature_scale;
  ensemble.true_features.label = "truth";
  ensemble.true_features.num_states = S;
  ensemble.true_features.num_actions = K;
  ensemble.true_features.table = feature_scale * base;

  // Per task: d next-state measures define the low-rank transition kernel,
  // shared across stages; per-stage reward parameters stay in [0,1] so the
  // induced rewards are convex combinations and land in [0,1].
  ensemble.tasks.reserve(T);
  ensemble.reward_params.reserve(T);
  for (int t = 0; t < T; ++t) {
    Matrix nu(d, S);
    for (int j = 0; j < d; ++j) nu.row(j) = rng.simplex(S).transpose();
    Matrix transition = base * nu;  // (S*K) x S, rows sum to 1

    TabularMDP task;
    task.num_states = S;
    task.num_actions = K;
    task.horizon = H;
    task.gamma = spec.gamma;
    task.initial_state = 0;
    task.transitions.assign(H, transition);
    task.rewards.resize(H);
    Matrix theta(H, d);
    for (int h = 0; h < H; ++h) {
      for (int j = 0; j < d; ++j) theta(h, j) = rng.uniform();
      Vector r = base * theta.row(h).transpose();
      task.rewards[h].resize(S, K);
      for (int s = 0; s < S; ++s)
        for (int a = 0; a < K; ++a) task.rewards[h](s, a) = r[s * K + a];
    }
    task.validate();
    ensemble.tasks.push_back(std::move(task));
    // reward parameters in the stored-feature basis: r_h = <phi*, theta/c>
    ensemble.reward_params.push_back(theta / feature_scale);
  }

  ensemble.true_decoders = recover_true_decoders(ensemble);

  double max_decoder_norm = 0.0;
  for (const auto& per_task : ensemble.true_decoders)
    for (const Vector& w : per_task)
      max_decoder_norm = std::max(max_decoder_norm, w.norm());

  if (max_decoder_norm > spec.w_max) {
    // Shrinking every reward by a common factor shrinks all Q values and
    // decoders by the same factor; recompute so stored tables stay exact.
    const double scale = spec.w_max / max_decoder_norm;
    ensemble.reward_scale = scale;
    for (int t = 0; t < T; ++t) {
      for (int h = 0; h < H; ++h) ensemble.tasks[t].rewards[h] *= scale;
      ensemble.reward_params[t] *= scale;
    }
    ensemble.true_decoders = recover_true_decoders(ensemble);
  }

  return ensemble;
}

}  // namespace mtfqi
