#pragma once

#include <cstdint>
#include <vector>

#include "mtfqi/features.hpp"
#include "mtfqi/mdp.hpp"

namespace mtfqi {

struct EnsembleSpec {
  int num_states = 0;
  int num_actions = 0;
  int horizon = 0;
  int num_tasks = 0;
  int latent_dim = 0;
  double gamma = 1.0;
  double w_max = 1.0;  // decoder-norm budget
};

// T tasks sharing one feature table; every task's transitions and rewards are
// linear in the shared simplex features, so every Q function (optimal
// included) is exactly linear in true_features.
struct TaskEnsemble {
  EnsembleSpec spec;
  std::uint64_t seed = 0;
  std::vector<TabularMDP> tasks;
  FeatureMap true_features;                       // shared across tasks
  std::vector<std::vector<Vector>> true_decoders; // [t][h], d-vectors
  std::vector<Matrix> reward_params;              // [t]: H x d, r_h = phi* . theta_h
  double feature_scale = 1.0;  // simplex rows -> stored features multiplier
  double reward_scale = 1.0;   // <= 1 when rewards were shrunk to fit w_max
};

// Draws shared simplex features phi'(s,a), per-task next-state measures
// nu_j(s') and per-stage reward parameters theta_h in [0,1]^d, then sets
//   P_h(s'|s,a) = sum_j phi'_j(s,a) nu_j(s'),   r_h(s,a) = <phi'(s,a), theta_h>.
// Stored features are phi* = c * phi' with c = 1/max-row-norm; decoders absorb
// 1/c. Rewards are shrunk uniformly if any recovered decoder exceeds w_max.
// Deterministic: identical (spec, seed) gives bit-identical output.
TaskEnsemble generate_ensemble(const EnsembleSpec& spec, std::uint64_t seed);

// Least-squares decoders w with phi * w = vec(Q), one per stage. Throws
// "degenerate features" when phi has column rank < d, and reports a
// realizability failure if any per-entry residual exceeds 1e-8.
std::vector<Vector> recover_decoders(const FeatureMap& phi, const QTable& q);

// Decoders of the exact optimal Q functions of every task.
std::vector<std::vector<Vector>> recover_true_decoders(const TaskEnsemble& ensemble);

}  // namespace mtfqi
