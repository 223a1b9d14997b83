#include "mtfqi/analysis.hpp"

#include <cmath>
#include <stdexcept>

#include "mtfqi/rng.hpp"

namespace mtfqi {

namespace {

// max over action assignments (stages 0..h-1) of P(s_h = target | s_0 fixed),
// as a backward recursion with the indicator of the target as terminal value.
double max_reach_probability(const TabularMDP& mdp, int h, int target) {
  const int S = mdp.num_states;
  const int K = mdp.num_actions;
  Vector g = Vector::Zero(S);
  g[target] = 1.0;
  for (int k = h - 1; k >= 0; --k) {
    Vector next(S);
    for (int x = 0; x < S; ++x) {
      double best = 0.0;
      for (int a = 0; a < K; ++a) {
        double acc = 0.0;
        const auto row = mdp.transitions[k].row(mdp.sa_index(x, a));
        for (int xn = 0; xn < S; ++xn) acc += row[xn] * g[xn];
        if (a == 0 || acc > best) best = acc;
      }
      next[x] = best;
    }
    g = next;
  }
  return g[mdp.initial_state];
}

// Same recursion for one fixed action assignment; identical loop structure so
// float results are comparable with max_reach_probability.
double reach_probability(const TabularMDP& mdp, int h, int target,
                         const std::vector<int>& actions /* [k*S + x] */) {
  const int S = mdp.num_states;
  Vector g = Vector::Zero(S);
  g[target] = 1.0;
  for (int k = h - 1; k >= 0; --k) {
    Vector next(S);
    for (int x = 0; x < S; ++x) {
      double acc = 0.0;
      const auto row = mdp.transitions[k].row(mdp.sa_index(x, actions[k * S + x]));
      for (int xn = 0; xn < S; ++xn) acc += row[xn] * g[xn];
      next[x] = acc;
    }
    g = next;
  }
  return g[mdp.initial_state];
}

void check_mu_shape(const TabularMDP& mdp, const OccupancyMeasure& mu_b) {
  if (static_cast<int>(mu_b.weights.size()) != mdp.horizon)
    throw std::invalid_argument("lambda_max: occupancy horizon mismatch");
  for (const Matrix& w : mu_b.weights)
    if (w.rows() != mdp.num_states || w.cols() != mdp.num_actions)
      throw std::invalid_argument("lambda_max: occupancy table shape mismatch");
}

double lambda_from_reach(const TabularMDP& mdp, const OccupancyMeasure& mu_b,
                         const Matrix& reach /* H x S */) {
  double lam = 0.0;
  for (int h = 0; h < mdp.horizon; ++h) {
    for (int s = 0; s < mdp.num_states; ++s) {
      const double m = reach(h, s);
      if (m == 0.0) continue;  // unreachable under every policy
      for (int a = 0; a < mdp.num_actions; ++a) {
        const double denom = mu_b.weights[h](s, a);
        if (denom == 0.0) throw std::runtime_error("unbounded concentrability");
        const double ratio = m / denom;
        if (ratio > lam) lam = ratio;
      }
    }
  }
  return lam;
}

void validate_delta(double delta) {
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("bound: delta must lie in (0,1)");
}

}  // namespace

double weighted_q_error(const QTable& q_hat, const QTable& q_ref,
                        const OccupancyMeasure& mu, int h) {
  if (h < 0 || h >= static_cast<int>(mu.weights.size()))
    throw std::out_of_range("weighted_q_error: stage out of range");
  if (h >= static_cast<int>(q_hat.values.size()) ||
      h >= static_cast<int>(q_ref.values.size()))
    throw std::invalid_argument("weighted_q_error: q table horizon mismatch");
  const Matrix& a = q_hat.values[h];
  const Matrix& b = q_ref.values[h];
  const Matrix& w = mu.weights[h];
  if (a.rows() != b.rows() || a.cols() != b.cols() || a.rows() != w.rows() ||
      a.cols() != w.cols())
    throw std::invalid_argument("weighted_q_error: shape mismatch");
  double acc = 0.0;
  for (int s = 0; s < a.rows(); ++s)
    for (int k = 0; k < a.cols(); ++k) {
      const double diff = a(s, k) - b(s, k);
      acc += w(s, k) * diff * diff;
    }
  return std::sqrt(acc);
}

double lambda_max(const TabularMDP& mdp, const OccupancyMeasure& mu_b) {
  check_mu_shape(mdp, mu_b);
  Matrix reach(mdp.horizon, mdp.num_states);
  for (int h = 0; h < mdp.horizon; ++h)
    for (int s = 0; s < mdp.num_states; ++s)
      reach(h, s) = max_reach_probability(mdp, h, s);
  return lambda_from_reach(mdp, mu_b, reach);
}

double lambda_max_bruteforce(const TabularMDP& mdp, const OccupancyMeasure& mu_b) {
  check_mu_shape(mdp, mu_b);
  const int S = mdp.num_states;
  const int K = mdp.num_actions;
  const double policy_count = std::pow(std::pow(double(K), S), mdp.horizon);
  if (policy_count > 1e4)
    throw std::invalid_argument("lambda_max_bruteforce: instance too large");

  Matrix reach = Matrix::Zero(mdp.horizon, S);
  for (int h = 0; h < mdp.horizon; ++h) {
    // every assignment of actions to the h*S (stage, state) slots before h
    std::vector<int> actions(std::max(h * S, 1), 0);
    for (int s = 0; s < S; ++s) {
      double best = 0.0;
      std::fill(actions.begin(), actions.end(), 0);
      while (true) {
        best = std::max(best, reach_probability(mdp, h, s, actions));
        int slot = 0;
        for (; slot < h * S; ++slot) {
          if (++actions[slot] < K) break;
          actions[slot] = 0;
        }
        if (slot == h * S) break;
      }
      reach(h, s) = best;
    }
  }
  return lambda_from_reach(mdp, mu_b, reach);
}

double BoundInputs::log_class_size() const {
  return std::log(num_encoders) + num_tasks * std::log(psi_eff);
}

double default_psi_eff(double w_max, int n, int d) {
  if (n < 1 || d < 1) throw std::invalid_argument("default_psi_eff: n, d must be positive");
  const double grid = 1.0 + std::ceil(2.0 * w_max * std::sqrt(double(n)));
  return std::pow(grid, d);
}

double fixed_stage_bound(const BoundInputs& in) {
  validate_delta(in.delta);
  if (in.n < 1 || in.num_tasks < 1 || in.horizon < 1)
    throw std::invalid_argument("fixed_stage_bound: counts must be positive");
  const double log_term = std::log(2.0) + in.log_class_size() +
                          std::log(double(in.horizon)) - std::log(in.delta);
  return in.b * std::sqrt(2.0 * log_term / (double(in.n) * in.num_tasks));
}

double bernstein_term(double b, double sigma_sq, double log_term) {
  return (2.0 * b / 3.0) * log_term +
         std::sqrt((4.0 * b * b / 9.0) * log_term * log_term +
                   8.0 * sigma_sq * log_term);
}

double recursion_step_bound(double err_next, const BoundInputs& in) {
  validate_delta(in.delta);
  if (err_next < 0.0)
    throw std::invalid_argument("recursion_step_bound: negative error");
  const double log_term = std::log(2.0) + in.log_class_size() - std::log(in.delta);
  return std::sqrt(2.0 * in.lambda) * err_next + std::sqrt(in.eps_irred) +
         std::sqrt(bernstein_term(in.b, in.sigma_sq, log_term));
}

HorizonBoundTerms unrolled_horizon_terms(const BoundInputs& in) {
  validate_delta(in.delta);
  const double h = in.horizon;
  const double rate = in.log_class_size() / (double(in.n) * in.num_tasks);
  HorizonBoundTerms terms;
  terms.approx = h * in.lambda * in.eps_irred;
  terms.stat_sqrt = h * h * in.lambda * std::sqrt(rate);
  terms.stat_linear = h * h * h * in.lambda * rate;
  return terms;
}

double unrolled_horizon_bound(const BoundInputs& in) {
  return unrolled_horizon_terms(in).total();
}

DownstreamBoundTerms downstream_bound_terms(const BoundInputs& in) {
  validate_delta(in.delta);
  const double h = in.horizon;
  DownstreamBoundTerms terms;
  terms.approx = h * in.lambda * in.eps_irred;
  terms.complexity = h * h * in.lambda * in.rademacher;
  terms.tail = h * h * h * in.lambda * std::log(1.0 / in.delta) / double(in.n);
  return terms;
}

double downstream_bound(const BoundInputs& in) {
  return downstream_bound_terms(in).total();
}

RademacherEstimate rademacher_estimate(const std::vector<Vector>& embeddings,
                                       double w_max, int num_draws, std::uint64_t seed) {
  if (embeddings.empty())
    throw std::invalid_argument("rademacher_estimate: empty embedding list");
  if (num_draws < 1)
    throw std::invalid_argument("rademacher_estimate: num_draws must be positive");
  const std::size_t n = embeddings.size();
  const int d = static_cast<int>(embeddings[0].size());
  double norm_sq = 0.0;
  for (const Vector& z : embeddings) {
    if (z.size() != d)
      throw std::invalid_argument("rademacher_estimate: embedding dimension mismatch");
    norm_sq += z.squaredNorm();
  }

  Rng rng(seed);
  double sum = 0.0, sum_sq = 0.0;
  for (int m = 0; m < num_draws; ++m) {
    Vector signed_sum = Vector::Zero(d);
    for (const Vector& z : embeddings)
      signed_sum += (rng.uniform() < 0.5 ? -1.0 : 1.0) * z;
    const double value = w_max / double(n) * signed_sum.norm();
    sum += value;
    sum_sq += value * value;
  }

  RademacherEstimate out;
  out.estimate = sum / num_draws;
  if (num_draws > 1) {
    const double var =
        std::max(0.0, (sum_sq - sum * sum / num_draws) / (num_draws - 1));
    out.std_error = std::sqrt(var / num_draws);
  }
  out.analytic_bound = w_max / double(n) * std::sqrt(norm_sq);
  return out;
}

Evaluation evaluate_model(const TaskEnsemble& ensemble, const LearnedModel& model,
                          const BehaviorSpec& behavior) {
  const int horizon = ensemble.spec.horizon;
  const int num_tasks = static_cast<int>(ensemble.tasks.size());
  if (model.horizon() != horizon)
    throw std::invalid_argument("evaluate_model: model horizon mismatch");
  if (model.num_tasks() != num_tasks)
    throw std::invalid_argument("evaluate_model: model task count mismatch");

  Evaluation eval;
  eval.vs_optimal.per_task.assign(horizon, std::vector<double>(num_tasks, 0.0));
  eval.vs_behavior.per_task.assign(horizon, std::vector<double>(num_tasks, 0.0));
  eval.occupancies.reserve(num_tasks);
  eval.lambda = 0.0;

  for (int t = 0; t < num_tasks; ++t) {
    const TabularMDP& task = ensemble.tasks[t];
    const BehaviorPolicy pi_b = make_behavior(task, behavior);
    const OccupancyMeasure mu = occupancy(task, pi_b.table);
    const QTable q_star = optimal_q(task);
    const QTable q_behavior = policy_q(task, pi_b.table);
    const QTable q_hat = model.q_table(t);
    for (int h = 0; h < horizon; ++h) {
      eval.vs_optimal.per_task[h][t] = weighted_q_error(q_hat, q_star, mu, h);
      eval.vs_behavior.per_task[h][t] = weighted_q_error(q_hat, q_behavior, mu, h);
    }
    eval.lambda = std::max(eval.lambda, lambda_max(task, mu));
    eval.occupancies.push_back(mu);
  }

  auto finish = [&](ComparatorErrors& c) {
    c.delta.assign(horizon, 0.0);
    c.mean_sq.assign(horizon, 0.0);
    for (int h = 0; h < horizon; ++h) {
      for (int t = 0; t < num_tasks; ++t) {
        c.delta[h] += c.per_task[h][t];
        c.mean_sq[h] += c.per_task[h][t] * c.per_task[h][t];
      }
      c.delta[h] /= num_tasks;
      c.mean_sq[h] /= num_tasks;
    }
  };
  finish(eval.vs_optimal);
  finish(eval.vs_behavior);
  return eval;
}

}  // namespace mtfqi
