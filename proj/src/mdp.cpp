#include "mtfqi/mdp.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mtfqi {

namespace {

constexpr double kStochasticTol = 1e-12;

// One Bellman backup: r_h + gamma * P_h * v_next, reshaped to S x K.
// optimal_q and policy_q must share this routine so enumeration oracles see
// bit-identical arithmetic.
Matrix backup_stage(const TabularMDP& mdp, int h, const Vector& v_next) {
  const int S = mdp.num_states;
  const int K = mdp.num_actions;
  Matrix q(S, K);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < K; ++a) {
      double acc = 0.0;
      const auto row = mdp.transitions[h].row(mdp.sa_index(s, a));
      for (int sn = 0; sn < S; ++sn) acc += row[sn] * v_next[sn];
      q(s, a) = mdp.rewards[h](s, a) + mdp.gamma * acc;
    }
  }
  return q;
}

Vector max_over_actions(const Matrix& q) {
  Vector v(q.rows());
  for (int s = 0; s < q.rows(); ++s) {
    double best = q(s, 0);
    for (int a = 1; a < q.cols(); ++a)
      if (q(s, a) > best) best = q(s, a);
    v[s] = best;
  }
  return v;
}

}  // namespace

void TabularMDP::validate() const {
  if (num_states < 1 || num_actions < 1 || horizon < 1)
    throw std::invalid_argument("TabularMDP: S, K, H must be positive");
  if (!(gamma > 0.0 && gamma <= 1.0))
    throw std::invalid_argument("TabularMDP: gamma must lie in (0,1]");
  if (initial_state < 0 || initial_state >= num_states)
    throw std::invalid_argument("TabularMDP: initial state out of range");
  if (static_cast<int>(transitions.size()) != horizon ||
      static_cast<int>(rewards.size()) != horizon)
    throw std::invalid_argument("TabularMDP: per-stage tables must have length H");
  for (int h = 0; h < horizon; ++h) {
    if (transitions[h].rows() != num_states * num_actions ||
        transitions[h].cols() != num_states)
      throw std::invalid_argument("TabularMDP: transition table shape mismatch");
    if (rewards[h].rows() != num_states || rewards[h].cols() != num_actions)
      throw std::invalid_argument("TabularMDP: reward table shape mismatch");
    for (int sa = 0; sa < num_states * num_actions; ++sa) {
      double total = 0.0;
      for (int sn = 0; sn < num_states; ++sn) {
        const double p = transitions[h](sa, sn);
        if (p < 0.0)
          throw std::invalid_argument("TabularMDP: negative transition probability");
        total += p;
      }
      if (std::abs(total - 1.0) > kStochasticTol)
        throw std::invalid_argument(
            "TabularMDP: transition row does not sum to 1 at stage " +
            std::to_string(h + 1));
    }
    if ((rewards[h].array() < 0.0).any() || (rewards[h].array() > 1.0).any())
      throw std::invalid_argument("TabularMDP: rewards must lie in [0,1]");
  }
}

QTable optimal_q(const TabularMDP& mdp) {
  QTable q;
  q.values.resize(mdp.horizon);
  Vector v_next = Vector::Zero(mdp.num_states);
  for (int h = mdp.horizon - 1; h >= 0; --h) {
    q.values[h] = backup_stage(mdp, h, v_next);
    v_next = max_over_actions(q.values[h]);
  }
  return q;
}

QTable policy_q(const TabularMDP& mdp, const Policy& pi) {
  if (static_cast<int>(pi.action_of.size()) != mdp.horizon)
    throw std::invalid_argument("policy_q: policy horizon mismatch");
  QTable q;
  q.values.resize(mdp.horizon);
  Vector v_next = Vector::Zero(mdp.num_states);
  for (int h = mdp.horizon - 1; h >= 0; --h) {
    q.values[h] = backup_stage(mdp, h, v_next);
    for (int s = 0; s < mdp.num_states; ++s) {
      const int a = pi.action_of[h][s];
      if (a < 0 || a >= mdp.num_actions)
        throw std::invalid_argument("policy_q: action index out of range");
      v_next[s] = q.values[h](s, a);
    }
  }
  return q;
}

QTable policy_q(const TabularMDP& mdp, const StochasticPolicy& pi) {
  if (static_cast<int>(pi.probs.size()) != mdp.horizon)
    throw std::invalid_argument("policy_q: policy horizon mismatch");
  QTable q;
  q.values.resize(mdp.horizon);
  Vector v_next = Vector::Zero(mdp.num_states);
  for (int h = mdp.horizon - 1; h >= 0; --h) {
    q.values[h] = backup_stage(mdp, h, v_next);
    for (int s = 0; s < mdp.num_states; ++s) {
      double acc = 0.0;
      for (int a = 0; a < mdp.num_actions; ++a)
        acc += pi.probs[h](s, a) * q.values[h](s, a);
      v_next[s] = acc;
    }
  }
  return q;
}

Policy greedy_policy(const QTable& q) {
  Policy pi;
  pi.action_of.resize(q.values.size());
  for (std::size_t h = 0; h < q.values.size(); ++h) {
    const Matrix& qh = q.values[h];
    pi.action_of[h].resize(qh.rows());
    for (int s = 0; s < qh.rows(); ++s) {
      int best = 0;
      for (int a = 1; a < qh.cols(); ++a)
        if (qh(s, a) > qh(s, best)) best = a;
      pi.action_of[h][s] = best;
    }
  }
  return pi;
}

OccupancyMeasure occupancy(const TabularMDP& mdp, const StochasticPolicy& behavior) {
  if (static_cast<int>(behavior.probs.size()) != mdp.horizon)
    throw std::invalid_argument("occupancy: policy horizon mismatch");
  const int S = mdp.num_states;
  const int K = mdp.num_actions;
  for (int h = 0; h < mdp.horizon; ++h) {
    if (behavior.probs[h].rows() != S || behavior.probs[h].cols() != K)
      throw std::invalid_argument("occupancy: policy table shape mismatch");
    for (int s = 0; s < S; ++s) {
      double total = behavior.probs[h].row(s).sum();
      if (std::abs(total - 1.0) > kStochasticTol ||
          (behavior.probs[h].row(s).array() < 0.0).any())
        throw std::invalid_argument("occupancy: policy row is not a distribution");
    }
  }

  OccupancyMeasure mu;
  mu.weights.resize(mdp.horizon);
  Vector state_marginal = Vector::Zero(S);
  state_marginal[mdp.initial_state] = 1.0;
  for (int h = 0; h < mdp.horizon; ++h) {
    mu.weights[h].resize(S, K);
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < K; ++a)
        mu.weights[h](s, a) = state_marginal[s] * behavior.probs[h](s, a);
    if (h + 1 < mdp.horizon) {
      Vector next = Vector::Zero(S);
      for (int s = 0; s < S; ++s) {
        for (int a = 0; a < K; ++a) {
          const double w = mu.weights[h](s, a);
          if (w == 0.0) continue;
          const auto row = mdp.transitions[h].row(mdp.sa_index(s, a));
          for (int sn = 0; sn < S; ++sn) next[sn] += w * row[sn];
        }
      }
      state_marginal = next;
    }
  }
  return mu;
}

}  // namespace mtfqi
