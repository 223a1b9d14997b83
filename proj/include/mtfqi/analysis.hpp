#pragma once

#include <cstdint>
#include <vector>

#include "mtfqi/ensemble.hpp"
#include "mtfqi/mdp.hpp"
#include "mtfqi/offline_data.hpp"
#include "mtfqi/solver.hpp"

namespace mtfqi {

// sqrt( sum_{s,a} mu_h(s,a) (qhat - qref)^2 ): L2(mu) distance at stage h.
double weighted_q_error(const QTable& q_hat, const QTable& q_ref,
                        const OccupancyMeasure& mu, int h);

// Exact concentrability coefficient
//   sup_{h,s,a reachable} max_pi mu_h^pi(s,a) / mu_b,h(s,a),
// with max-reach probabilities computed by backward dynamic programming.
// Pairs no policy can reach are excluded; a reachable pair with zero behavior
// mass throws "unbounded concentrability".
double lambda_max(const TabularMDP& mdp, const OccupancyMeasure& mu_b);

// Oracle: enumerates deterministic stage-indexed policies (equivalently, all
// action assignments on the stages before each target) with the same backward
// recursion, so results match lambda_max bit for bit. Refuses instances with
// (K^S)^H > 10^4.
double lambda_max_bruteforce(const TabularMDP& mdp, const OccupancyMeasure& mu_b);

struct BoundInputs {
  double b = 0.0;             // squared value cap
  double num_encoders = 1.0;  // encoder class size
  double psi_eff = 1.0;       // effective decoder-class size (covering count)
  int num_tasks = 1;
  int n = 1;                  // samples per task per stage
  int horizon = 1;
  double delta = 0.05;
  double lambda = 1.0;        // concentrability
  double sigma_sq = 0.0;      // variance of per-sample squared residuals
  double eps_irred = 0.0;     // best in-class population loss
  double rademacher = 0.0;    // decoder-class complexity

  // log(|Phi| |Psi_eff|^T), always assembled in log space
  double log_class_size() const;
};

// Surrogate decoder-class cardinality: a 1/(2 sqrt(n))-grid covering count of
// the w_max ball, (1 + ceil(2 w_max sqrt(n)))^d.
double default_psi_eff(double w_max, int n, int d);

// b * sqrt(2 log(2 |Phi| |Psi|^T H / delta) / (n T)): the fixed-stage
// generalization bound from pooling n T samples.
double fixed_stage_bound(const BoundInputs& inputs);

// One backward step of error propagation:
//   sqrt(2 lambda) err_next + sqrt(eps_irred) + sqrt(bernstein term).
double recursion_step_bound(double err_next, const BoundInputs& inputs);

// (2b/3) L + sqrt((4b^2/9) L^2 + 8 sigma^2 L) with L = log(2 |Phi||Psi|^T / delta).
double bernstein_term(double b, double sigma_sq, double log_term);

struct HorizonBoundTerms {
  double approx = 0.0;       // H lambda eps_irred
  double stat_sqrt = 0.0;    // H^2 lambda sqrt(logF / (nT))
  double stat_linear = 0.0;  // H^3 lambda logF / (nT)
  double total() const { return approx + stat_sqrt + stat_linear; }
};

// Initial-stage bound obtained by unrolling the recursion across the horizon;
// evaluated with constant 1 on every term.
HorizonBoundTerms unrolled_horizon_terms(const BoundInputs& inputs);
double unrolled_horizon_bound(const BoundInputs& inputs);

struct DownstreamBoundTerms {
  double approx = 0.0;      // H lambda eps_irred
  double complexity = 0.0;  // H^2 lambda R(G)
  double tail = 0.0;        // H^3 lambda log(1/delta) / n
  double total() const { return approx + complexity + tail; }
};

// Bound for fitting a fresh task on a frozen representation, with the decoder
// class measured by Rademacher complexity instead of a covering count.
DownstreamBoundTerms downstream_bound_terms(const BoundInputs& inputs);
double downstream_bound(const BoundInputs& inputs);

struct RademacherEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  double analytic_bound = 0.0;  // (w_max / n) sqrt(sum ||z_i||^2)
};

// Monte Carlo over sign vectors; for the linear class {z -> <w,z>, ||w|| <= w_max}
// the inner sup is (w_max / n) || sum_i sigma_i z_i ||.
RademacherEstimate rademacher_estimate(const std::vector<Vector>& embeddings,
                                       double w_max, int num_draws, std::uint64_t seed);

struct ComparatorErrors {
  std::vector<std::vector<double>> per_task;  // [H][T] L2(mu_b) distances
  std::vector<double> delta;                  // [H] mean over tasks
  std::vector<double> mean_sq;                // [H] mean of squared distances
};

struct Evaluation {
  ComparatorErrors vs_optimal;   // reference Q*
  ComparatorErrors vs_behavior;  // reference Q^{pi_b}
  std::vector<OccupancyMeasure> occupancies;  // per task
  double lambda = 1.0;                        // max over tasks
};

// Compares the learned Q functions of every task against both references
// under the behavior occupancy of that task.
Evaluation evaluate_model(const TaskEnsemble& ensemble, const LearnedModel& model,
                          const BehaviorSpec& behavior);

}  // namespace mtfqi
