#include <doctest.h>

#include <cmath>

#include "mtfqi/analysis.hpp"
#include "mtfqi/ensemble.hpp"
#include "mtfqi/rng.hpp"
#include "test_util.hpp"

using namespace mtfqi;
using namespace mtfqi::testutil;

namespace {

QTable random_qtable(int S, int K, int H, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  QTable q;
  q.values.assign(H, Matrix(S, K));
  for (Matrix& stage : q.values)
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < K; ++a) stage(s, a) = scale * rng.uniform();
  return q;
}

StochasticPolicy soft_random_policy(int S, int K, int H, std::uint64_t seed) {
  Rng rng(seed);
  StochasticPolicy pi;
  pi.probs.assign(H, Matrix(S, K));
  for (Matrix& stage : pi.probs) {
    for (int s = 0; s < S; ++s) {
      double total = 0.0;
      for (int a = 0; a < K; ++a) {
        stage(s, a) = 0.1 + rng.uniform();
        total += stage(s, a);
      }
      stage.row(s) /= total;
    }
  }
  return pi;
}

}  // namespace

TEST_CASE("weighted_q_error basics") {
  const int S = 3, K = 2, H = 2;
  const QTable a = random_qtable(S, K, H, 1);
  const TabularMDP mdp = random_mdp(S, K, H, 1.0, 2);
  const OccupancyMeasure mu = occupancy(mdp, uniform_policy(S, K, H));

  CHECK(weighted_q_error(a, a, mu, 0) == 0.0);
  CHECK(weighted_q_error(a, a, mu, 1) == 0.0);

  // point mass: distance reduces to the absolute gap there
  OccupancyMeasure point;
  point.weights.assign(H, Matrix::Zero(S, K));
  point.weights[0](1, 1) = 1.0;
  QTable b = a;
  b.values[0](1, 1) += -0.37;
  CHECK(weighted_q_error(a, b, point, 0) == doctest::Approx(0.37).epsilon(1e-12));

  QTable wrong_shape = a;
  wrong_shape.values[0].resize(S + 1, K);
  CHECK_THROWS_AS(weighted_q_error(wrong_shape, a, mu, 0), std::invalid_argument);
}

TEST_CASE("weighted_q_error agrees with a naive loop") {
  const int S = 4, K = 3, H = 3;
  const QTable a = random_qtable(S, K, H, 3);
  const QTable b = random_qtable(S, K, H, 4);
  const TabularMDP mdp = random_mdp(S, K, H, 1.0, 5);
  const OccupancyMeasure mu = occupancy(mdp, soft_random_policy(S, K, H, 6));
  for (int h = 0; h < H; ++h) {
    double acc = 0.0;
    for (int s = S - 1; s >= 0; --s)
      for (int k = K - 1; k >= 0; --k) {
        const double diff = a.values[h](s, k) - b.values[h](s, k);
        acc += mu.weights[h](s, k) * diff * diff;
      }
    CHECK(weighted_q_error(a, b, mu, h) == doctest::Approx(std::sqrt(acc)).epsilon(1e-12));
  }
}

TEST_CASE("weighted_q_error satisfies the triangle inequality") {
  const int S = 3, K = 2, H = 2;
  const TabularMDP mdp = random_mdp(S, K, H, 1.0, 7);
  const OccupancyMeasure mu = occupancy(mdp, soft_random_policy(S, K, H, 8));
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const QTable a = random_qtable(S, K, H, 100 + 3 * seed);
    const QTable b = random_qtable(S, K, H, 101 + 3 * seed);
    const QTable c = random_qtable(S, K, H, 102 + 3 * seed);
    for (int h = 0; h < H; ++h)
      CHECK(weighted_q_error(a, c, mu, h) <=
            weighted_q_error(a, b, mu, h) + weighted_q_error(b, c, mu, h) + 1e-12);
  }
}

TEST_CASE("lambda_max of a single-state MDP under uniform behavior is K") {
  TabularMDP mdp;
  mdp.num_states = 1;
  mdp.num_actions = 3;
  mdp.horizon = 2;
  mdp.transitions.assign(2, Matrix::Ones(3, 1));
  mdp.rewards.assign(2, Matrix::Zero(1, 3));
  const OccupancyMeasure mu = occupancy(mdp, uniform_policy(1, 3, 2));
  CHECK(lambda_max(mdp, mu) == 3.0);
  CHECK(lambda_max_bruteforce(mdp, mu) == 3.0);
}

TEST_CASE("lambda_max is 1 when behavior equals the only dynamics") {
  TabularMDP mdp;
  mdp.num_states = 1;
  mdp.num_actions = 1;
  mdp.horizon = 3;
  mdp.transitions.assign(3, Matrix::Ones(1, 1));
  mdp.rewards.assign(3, Matrix::Zero(1, 1));
  const OccupancyMeasure mu = occupancy(mdp, uniform_policy(1, 1, 3));
  CHECK(lambda_max(mdp, mu) == 1.0);
}

TEST_CASE("lambda_max equals brute force on random instances") {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const TabularMDP mdp = random_mdp(2, 2, 2, 1.0, 500 + seed);
    const OccupancyMeasure mu = occupancy(mdp, soft_random_policy(2, 2, 2, 600 + seed));
    CHECK(lambda_max(mdp, mu) == lambda_max_bruteforce(mdp, mu));
  }
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const TabularMDP mdp = random_mdp(3, 2, 3, 1.0, 700 + seed);
    const OccupancyMeasure mu = occupancy(mdp, soft_random_policy(3, 2, 3, 800 + seed));
    CHECK(lambda_max(mdp, mu) == lambda_max_bruteforce(mdp, mu));
  }
}

TEST_CASE("lambda_max is at least 1 for policy-induced behavior") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const TabularMDP mdp = random_mdp(4, 3, 3, 1.0, 900 + seed);
    const OccupancyMeasure mu = occupancy(mdp, soft_random_policy(4, 3, 3, 950 + seed));
    CHECK(lambda_max(mdp, mu) >= 1.0 - 1e-12);
  }
}

TEST_CASE("coverage failure is reported as unbounded concentrability") {
  const TabularMDP mdp = random_mdp(3, 2, 2, 1.0, 41);
  StochasticPolicy deterministic;
  deterministic.probs.assign(2, Matrix::Zero(3, 2));
  for (Matrix& stage : deterministic.probs) stage.col(0).setOnes();
  const OccupancyMeasure mu = occupancy(mdp, deterministic);
  CHECK_THROWS_WITH_AS(lambda_max(mdp, mu), "unbounded concentrability",
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(lambda_max_bruteforce(mdp, mu), "unbounded concentrability",
                       std::runtime_error);
}

TEST_CASE("brute force refuses oversized instances") {
  const TabularMDP mdp = random_mdp(3, 3, 5, 1.0, 43);
  const OccupancyMeasure mu = occupancy(mdp, uniform_policy(3, 3, 5));
  CHECK_THROWS_AS(lambda_max_bruteforce(mdp, mu), std::invalid_argument);
}

TEST_CASE("fixed-stage bound golden value and exact root-n scaling") {
  BoundInputs in;
  in.b = q_max(1.0, 5) * q_max(1.0, 5);
  CHECK(in.b == 25.0);
  in.num_encoders = 8;
  in.psi_eff = 16;
  in.num_tasks = 5;
  in.n = 200;
  in.horizon = 5;
  in.delta = 0.05;
  CHECK(fixed_stage_bound(in) == doctest::Approx(5.1527544235373253).epsilon(1e-13));

  BoundInputs quadrupled = in;
  quadrupled.n = 4 * in.n;
  CHECK(fixed_stage_bound(in) / fixed_stage_bound(quadrupled) ==
        doctest::Approx(2.0).epsilon(1e-12));

  in.delta = 0.0;
  CHECK_THROWS_AS(fixed_stage_bound(in), std::invalid_argument);
  in.delta = 1.0;
  CHECK_THROWS_AS(fixed_stage_bound(in), std::invalid_argument);
}

TEST_CASE("recursion step reduces to its surviving term") {
  BoundInputs in;
  in.lambda = 3.0;
  in.b = 0.0;
  in.sigma_sq = 0.0;
  in.eps_irred = 0.0;
  in.num_encoders = 4;
  in.psi_eff = 2;
  in.num_tasks = 3;
  CHECK(recursion_step_bound(0.7, in) ==
        doctest::Approx(std::sqrt(6.0) * 0.7).epsilon(1e-14));

  in.eps_irred = 0.25;
  CHECK(recursion_step_bound(0.0, in) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("iterating the recursion matches the geometric closed form") {
  BoundInputs in;
  in.lambda = 2.0;  // sqrt(2 lambda) = 2
  in.b = 0.0;
  in.sigma_sq = 0.0;
  in.eps_irred = 0.09;  // local term 0.3
  const int horizon = 4;
  double err = 0.0;
  for (int h = 0; h < horizon; ++h) err = recursion_step_bound(err, in);

  const double ratio = std::sqrt(2.0 * in.lambda);
  const double local = std::sqrt(in.eps_irred);
  const double closed = local * (std::pow(ratio, horizon) - 1.0) / (ratio - 1.0);
  CHECK(err == doctest::Approx(closed).epsilon(1e-12));
  CHECK(err == doctest::Approx(4.5).epsilon(1e-12));
}

TEST_CASE("horizon bound terms scale as promised") {
  BoundInputs in;
  in.num_encoders = 8;
  in.psi_eff = 16;
  in.num_tasks = 5;
  in.n = 200;
  in.horizon = 5;
  in.lambda = 4.0;
  in.eps_irred = 0.0;

  // vanity check: zero approximation error and huge data drive the bound to 0
  BoundInputs huge = in;
  double last = unrolled_horizon_bound(huge);
  for (int i = 0; i < 6; ++i) {
    huge.n *= 10;
    const double next = unrolled_horizon_bound(huge);
    CHECK(next < last);
    last = next;
  }
  CHECK(last < 2e-2);

  // cubic term ratio between H = 10 and H = 5 is exactly 8
  BoundInputs h10 = in;
  h10.horizon = 10;
  CHECK(unrolled_horizon_terms(h10).stat_linear /
            unrolled_horizon_terms(in).stat_linear ==
        doctest::Approx(8.0).epsilon(1e-12));

  // constant class size: doubling T four-fold halves the sqrt term
  BoundInputs flat = in;
  flat.psi_eff = 1.0;
  BoundInputs flat4 = flat;
  flat4.num_tasks = 4 * flat.num_tasks;
  CHECK(unrolled_horizon_terms(flat).stat_sqrt /
            unrolled_horizon_terms(flat4).stat_sqrt ==
        doctest::Approx(2.0).epsilon(1e-12));

  // covering-count surrogate: the sqrt term decreases in T but saturates
  double prev = unrolled_horizon_terms(in).stat_sqrt;
  BoundInputs grow = in;
  for (int t : {10, 20, 40, 80, 160}) {
    grow.num_tasks = t;
    const double cur = unrolled_horizon_terms(grow).stat_sqrt;
    CHECK(cur < prev);
    prev = cur;
  }
  BoundInputs big = in;
  big.num_tasks = 512;
  BoundInputs bigger = in;
  bigger.num_tasks = 1024;
  CHECK(unrolled_horizon_terms(bigger).stat_sqrt /
            unrolled_horizon_terms(big).stat_sqrt > 0.99);
}

TEST_CASE("downstream bound golden value and complexity scaling") {
  BoundInputs in;
  in.horizon = 5;
  in.lambda = 2.0;
  in.n = 500;
  in.delta = 0.05;
  in.eps_irred = 0.0;
  in.rademacher = 1.0 / std::sqrt(500.0);
  const DownstreamBoundTerms terms = downstream_bound_terms(in);
  CHECK(terms.complexity == doctest::Approx(2.2360679774997897).epsilon(1e-13));
  CHECK(terms.tail == doctest::Approx(1.4978661367769955).epsilon(1e-13));
  CHECK(downstream_bound(in) == doctest::Approx(3.7339341142767852).epsilon(1e-13));

  BoundInputs more = in;
  more.n = 100 * in.n;
  more.rademacher = 1.0 / std::sqrt(double(more.n));
  CHECK(terms.complexity / downstream_bound_terms(more).complexity ==
        doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("rademacher estimate on degenerate inputs") {
  std::vector<Vector> zeros(10, Vector::Zero(3));
  const RademacherEstimate z = rademacher_estimate(zeros, 1.0, 64, 5);
  CHECK(z.estimate == 0.0);
  CHECK(z.analytic_bound == 0.0);

  Vector single(3);
  single << 0.3, -0.4, 0.5;
  const RademacherEstimate one = rademacher_estimate({single}, 2.0, 32, 7);
  CHECK(one.estimate == doctest::Approx(2.0 * single.norm()).epsilon(1e-14));
  CHECK(one.std_error == doctest::Approx(0.0));

  CHECK_THROWS_AS(rademacher_estimate({}, 1.0, 8, 1), std::invalid_argument);
  CHECK_THROWS_AS(rademacher_estimate({single}, 1.0, 0, 1), std::invalid_argument);
}

TEST_CASE("rademacher estimate sits under the analytic bound") {
  Rng rng(123);
  // unit-norm embeddings: the analytic bound is w_max / sqrt(n)
  const int n = 400;
  std::vector<Vector> unit;
  for (int i = 0; i < n; ++i) {
    Vector z(4);
    for (int j = 0; j < 4; ++j) z[j] = rng.uniform(-1.0, 1.0);
    unit.push_back(z / z.norm());
  }
  const RademacherEstimate est = rademacher_estimate(unit, 1.0, 200, 17);
  CHECK(est.analytic_bound == doctest::Approx(1.0 / 20.0).epsilon(1e-12));
  CHECK(est.estimate <= est.analytic_bound + 3.0 * est.std_error);

  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::vector<Vector> z;
    const int count = 5 + static_cast<int>(rng.uniform_int(60));
    for (int i = 0; i < count; ++i) {
      Vector v(3);
      for (int j = 0; j < 3; ++j) v[j] = rng.uniform(-1.0, 1.0);
      if (v.norm() > 1.0) v /= v.norm();
      z.push_back(v);
    }
    const RademacherEstimate e = rademacher_estimate(z, 1.0, 100, 3000 + seed);
    CHECK(e.estimate <= e.analytic_bound + 3.0 * e.std_error + 1e-12);
  }
}

TEST_CASE("evaluate_model produces consistent reports") {
  EnsembleSpec spec;
  spec.num_states = 4;
  spec.num_actions = 2;
  spec.horizon = 3;
  spec.num_tasks = 3;
  spec.latent_dim = 3;
  const TaskEnsemble e = generate_ensemble(spec, 77);
  const EncoderClass cls = build_encoder_class(e.true_features, 3, 1.0, 5);
  const DatasetBundle bundle = collect_bundle(e, BehaviorSpec::parse("uniform"), 80, 9);
  const TrainResult trained = run_mtfqi(bundle, cls, SolverConfig{});
  const Evaluation eval =
      evaluate_model(e, trained.model, BehaviorSpec::parse("uniform"));

  CHECK(eval.lambda >= 1.0 - 1e-12);
  REQUIRE(eval.vs_optimal.delta.size() == 3);
  for (int h = 0; h < 3; ++h) {
    CHECK(eval.vs_optimal.delta[h] >= 0.0);
    CHECK(eval.vs_behavior.delta[h] >= 0.0);
    CHECK(eval.vs_optimal.mean_sq[h] + 1e-15 >=
          eval.vs_optimal.delta[h] * eval.vs_optimal.delta[h]);  // Jensen
    REQUIRE(eval.vs_optimal.per_task[h].size() == 3);
  }
  // the last stage regression is noiseless, so both comparators agree there
  CHECK(eval.vs_optimal.delta[2] == doctest::Approx(eval.vs_behavior.delta[2]));
}
