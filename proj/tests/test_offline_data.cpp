#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <string>

#include "mtfqi/offline_data.hpp"
#include "mtfqi/serialize.hpp"
#include "test_util.hpp"

using namespace mtfqi;

namespace {

TaskEnsemble small_ensemble(std::uint64_t seed, int S = 3, int K = 2, int H = 3,
                            int T = 2, int d = 2) {
  EnsembleSpec spec;
  spec.num_states = S;
  spec.num_actions = K;
  spec.horizon = H;
  spec.num_tasks = T;
  spec.latent_dim = d;
  return generate_ensemble(spec, seed);
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/mtfqi_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

bool bundles_equal(const DatasetBundle& a, const DatasetBundle& b) {
  if (a.num_tasks() != b.num_tasks() || a.n != b.n || a.horizon != b.horizon ||
      a.behavior != b.behavior || a.ensemble_hash != b.ensemble_hash)
    return false;
  for (int t = 0; t < a.num_tasks(); ++t) {
    for (int h = 0; h < a.horizon; ++h) {
      const auto& sa = a.tasks[t].stages[h];
      const auto& sb = b.tasks[t].stages[h];
      if (sa.size() != sb.size()) return false;
      for (std::size_t i = 0; i < sa.size(); ++i) {
        if (sa[i].s != sb[i].s || sa[i].a != sb[i].a || sa[i].s_next != sb[i].s_next ||
            sa[i].r != sb[i].r || sa[i].h != sb[i].h)
          return false;
      }
    }
  }
  return true;
}

}  // namespace

TEST_CASE("behavior spec parsing") {
  CHECK(BehaviorSpec::parse("uniform").kind == BehaviorSpec::Kind::Uniform);
  const BehaviorSpec eps = BehaviorSpec::parse("eps:0.25");
  CHECK(eps.kind == BehaviorSpec::Kind::EpsilonGreedy);
  CHECK(eps.epsilon == 0.25);
  CHECK(eps.to_string() == "eps:0.25");
  CHECK_THROWS_AS(BehaviorSpec::parse("greedy"), std::invalid_argument);
  CHECK_THROWS_AS(BehaviorSpec::parse("eps:1.5"), std::invalid_argument);
  CHECK_THROWS_AS(BehaviorSpec::parse("eps:abc"), std::invalid_argument);
}

TEST_CASE("epsilon-greedy rows keep floor probability on every action") {
  const TaskEnsemble e = small_ensemble(1);
  const BehaviorPolicy pi = make_behavior(e.tasks[0], BehaviorSpec::parse("eps:0.2"));
  for (const Matrix& stage : pi.table.probs) {
    for (int s = 0; s < e.spec.num_states; ++s) {
      CHECK(stage.row(s).sum() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(stage.row(s).minCoeff() >= 0.2 / e.spec.num_actions - 1e-15);
    }
  }
}

TEST_CASE("collect slices episodes per stage") {
  const TaskEnsemble e = small_ensemble(2);
  const BehaviorPolicy pi = make_behavior(e.tasks[0], BehaviorSpec::parse("uniform"));
  const TaskDataset data = collect(e, 0, pi, 4, 9);
  REQUIRE(data.horizon() == e.spec.horizon);
  for (int h = 0; h < data.horizon(); ++h) {
    REQUIRE(data.stages[h].size() == 4);
    for (const Transition& tr : data.stages[h]) {
      CHECK(tr.h == h);
      CHECK(tr.r == e.tasks[0].rewards[h](tr.s, tr.a));
    }
  }
  // the first stage always starts at the fixed initial state
  for (const Transition& tr : data.stages[0]) CHECK(tr.s == e.tasks[0].initial_state);
}

TEST_CASE("collection is deterministic given the seed") {
  const TaskEnsemble e = small_ensemble(3);
  const DatasetBundle a = collect_bundle(e, BehaviorSpec::parse("uniform"), 50, 123);
  const DatasetBundle b = collect_bundle(e, BehaviorSpec::parse("uniform"), 50, 123);
  CHECK(bundles_equal(a, b));
  const DatasetBundle c = collect_bundle(e, BehaviorSpec::parse("uniform"), 50, 124);
  CHECK_FALSE(bundles_equal(a, c));
}

TEST_CASE("stage marginals match the occupancy measure") {
  const TaskEnsemble e = small_ensemble(4);
  const BehaviorPolicy pi = make_behavior(e.tasks[0], BehaviorSpec::parse("uniform"));
  const OccupancyMeasure mu = occupancy(e.tasks[0], pi.table);
  const int n = 100000;
  const TaskDataset data = collect(e, 0, pi, n, 31);
  for (int h = 0; h < e.spec.horizon; ++h) {
    Matrix counts = Matrix::Zero(e.spec.num_states, e.spec.num_actions);
    for (const Transition& tr : data.stages[h]) counts(tr.s, tr.a) += 1.0;
    for (int s = 0; s < e.spec.num_states; ++s) {
      for (int a = 0; a < e.spec.num_actions; ++a) {
        const double p = mu.weights[h](s, a);
        const double se = std::sqrt(std::max(p * (1.0 - p), 1e-12) / n);
        CHECK(std::abs(counts(s, a) / n - p) < 3.0 * se + 1e-9);
      }
    }
  }
}

TEST_CASE("bundle save/load round trip") {
  const TaskEnsemble e = small_ensemble(5);
  DatasetBundle bundle = collect_bundle(e, BehaviorSpec::parse("eps:0.3"), 20, 77);
  bundle.ensemble_hash = ensemble_hash(e);
  TempFile file("bundle.jsonl");
  save_bundle(bundle, file.path);
  const DatasetBundle loaded = load_bundle(file.path);
  CHECK(bundles_equal(bundle, loaded));
}

TEST_CASE("empty bundle round trips") {
  DatasetBundle empty;
  TempFile file("empty.jsonl");
  save_bundle(empty, file.path);
  const DatasetBundle loaded = load_bundle(file.path);
  CHECK(loaded.num_tasks() == 0);
  CHECK(loaded.n == 0);
}

TEST_CASE("schema version mismatch names both versions") {
  TempFile file("schema.jsonl");
  {
    std::ofstream out(file.path);
    out << R"({"schema_version":2,"kind":"mtfqi.bundle","ensemble_hash":"","T":0,"n":0,"H":0,"seed":0,"behavior":"uniform"})"
        << "\n";
  }
  CHECK_THROWS_WITH_AS(load_bundle(file.path),
                       "bundle schema version 2 unsupported; this build reads version 1",
                       std::runtime_error);
}

TEST_CASE("corrupt header is a parse error, not a crash") {
  TempFile file("corrupt.jsonl");
  {
    std::ofstream out(file.path);
    out << "{\"schema_version\": oops\n";
  }
  CHECK_THROWS_WITH_AS(load_bundle(file.path), doctest::Contains("parse error at byte"),
                       std::runtime_error);
}

TEST_CASE("truncated files report the byte offset") {
  const TaskEnsemble e = small_ensemble(6);
  DatasetBundle bundle = collect_bundle(e, BehaviorSpec::parse("uniform"), 5, 13);
  TempFile file("truncated.jsonl");
  save_bundle(bundle, file.path);

  std::ifstream in(file.path, std::ios::binary);
  std::string contents((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
  in.close();
  contents.resize(contents.size() - contents.size() / 3);  // chop the tail
  std::ofstream out(file.path, std::ios::binary);
  out << contents;
  out.close();

  CHECK_THROWS_WITH_AS(load_bundle(file.path), doctest::Contains("parse error at byte"),
                       std::runtime_error);
}
