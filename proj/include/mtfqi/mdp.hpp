#pragma once

#include <vector>

#include <Eigen/Dense>

namespace mtfqi {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Finite episodic MDP with stage-indexed dynamics and deterministic rewards.
// Stage index h runs 0..H-1 internally; file formats use 1-based stages.
struct TabularMDP {
  int num_states = 0;
  int num_actions = 0;
  int horizon = 0;
  double gamma = 1.0;
  int initial_state = 0;
  std::vector<Matrix> transitions;  // [h]: (S*K) x S, rows sum to 1
  std::vector<Matrix> rewards;      // [h]: S x K, entries in [0,1]

  int sa_index(int s, int a) const { return s * num_actions + a; }

  // Throws std::invalid_argument on any violated invariant:
  // row-stochastic transitions (1e-12), rewards in [0,1], gamma in (0,1].
  void validate() const;
};

// Deterministic stage-indexed policy: action_of[h][s] in [0, K).
struct Policy {
  std::vector<std::vector<int>> action_of;
};

// Stochastic stage-indexed policy: probs[h] is S x K, rows sum to 1.
struct StochasticPolicy {
  std::vector<Matrix> probs;
};

// Per-stage action values, values[h] is S x K.
struct QTable {
  std::vector<Matrix> values;
};

// Per-stage state-action distributions, weights[h] is S x K summing to 1.
struct OccupancyMeasure {
  std::vector<Matrix> weights;
};

// Backward dynamic programming. Ties in max/argmax break toward the lowest
// action index so results are deterministic.
QTable optimal_q(const TabularMDP& mdp);
QTable policy_q(const TabularMDP& mdp, const Policy& pi);
QTable policy_q(const TabularMDP& mdp, const StochasticPolicy& pi);
Policy greedy_policy(const QTable& q);

// Stage marginals of (s,a) under `behavior` started from the fixed initial
// state. Throws if a policy row does not sum to 1 (1e-12).
OccupancyMeasure occupancy(const TabularMDP& mdp, const StochasticPolicy& behavior);

}  // namespace mtfqi
