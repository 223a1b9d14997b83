#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <string>

#include "mtfqi/analysis.hpp"
#include "mtfqi/serialize.hpp"

using namespace mtfqi;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/mtfqi_ser_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

TaskEnsemble sample_ensemble(std::uint64_t seed) {
  EnsembleSpec spec;
  spec.num_states = 4;
  spec.num_actions = 2;
  spec.horizon = 3;
  spec.num_tasks = 2;
  spec.latent_dim = 3;
  spec.gamma = 0.9;
  return generate_ensemble(spec, seed);
}

}  // namespace

TEST_CASE("ensemble serialization is lossless to full precision") {
  const TaskEnsemble e = sample_ensemble(5);
  TempFile file("ensemble.json");
  save_ensemble(e, file.path);
  const LoadedEnsemble loaded = load_ensemble(file.path);
  const TaskEnsemble& f = loaded.ensemble;

  CHECK_FALSE(loaded.encoders.has_value());
  CHECK(f.seed == e.seed);
  CHECK(f.spec.gamma == e.spec.gamma);
  CHECK(f.feature_scale == e.feature_scale);
  CHECK((f.true_features.table - e.true_features.table).cwiseAbs().maxCoeff() == 0.0);
  for (std::size_t t = 0; t < e.tasks.size(); ++t) {
    for (int h = 0; h < e.spec.horizon; ++h) {
      CHECK((f.tasks[t].transitions[h] - e.tasks[t].transitions[h])
                .cwiseAbs()
                .maxCoeff() == 0.0);
      CHECK((f.tasks[t].rewards[h] - e.tasks[t].rewards[h]).cwiseAbs().maxCoeff() ==
            0.0);
      CHECK((f.true_decoders[t][h] - e.true_decoders[t][h]).cwiseAbs().maxCoeff() ==
            0.0);
    }
    CHECK((f.reward_params[t] - e.reward_params[t]).cwiseAbs().maxCoeff() == 0.0);
  }

  // a second round trip produces the identical document
  TempFile file2("ensemble2.json");
  save_ensemble(f, file2.path);
  std::ifstream a(file.path), b(file2.path);
  const std::string sa((std::istreambuf_iterator<char>(a)),
                       std::istreambuf_iterator<char>());
  const std::string sb((std::istreambuf_iterator<char>(b)),
                       std::istreambuf_iterator<char>());
  CHECK(sa == sb);
}

TEST_CASE("encoder classes travel inside the ensemble document") {
  const TaskEnsemble e = sample_ensemble(6);
  const EncoderClass cls = build_encoder_class(e.true_features, 3, 0.5, 11);
  TempFile file("with_encoders.json");
  save_ensemble(e, file.path, &cls);
  const LoadedEnsemble loaded = load_ensemble(file.path);
  REQUIRE(loaded.encoders.has_value());
  CHECK(loaded.encoders->size() == cls.size());
  CHECK(loaded.encoders->truth_index == cls.truth_index);
  for (int i = 0; i < cls.size(); ++i) {
    CHECK(loaded.encoders->members[i].label == cls.members[i].label);
    CHECK((loaded.encoders->members[i].table - cls.members[i].table)
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }
}

TEST_CASE("ensemble hash is stable and ignores the encoder class") {
  const TaskEnsemble e = sample_ensemble(7);
  const std::string h1 = ensemble_hash(e);
  const std::string h2 = ensemble_hash(e);
  CHECK(h1 == h2);
  CHECK(h1.size() == 16);
  const TaskEnsemble other = sample_ensemble(8);
  CHECK(ensemble_hash(other) != h1);
}

TEST_CASE("wrong kind or schema version is rejected") {
  TempFile file("wrong.json");
  {
    std::ofstream out(file.path);
    out << R"({"schema_version":1,"kind":"mtfqi.model"})";
  }
  CHECK_THROWS_WITH_AS(load_ensemble(file.path),
                       doctest::Contains("not a mtfqi.ensemble"), std::runtime_error);
  {
    std::ofstream out(file.path);
    out << R"({"schema_version":9,"kind":"mtfqi.ensemble"})";
  }
  CHECK_THROWS_WITH_AS(load_ensemble(file.path), doctest::Contains("schema version 9"),
                       std::runtime_error);
}

TEST_CASE("model serialization round trips") {
  const TaskEnsemble e = sample_ensemble(9);
  const EncoderClass cls = build_encoder_class(e.true_features, 2, 1.0, 3);
  const DatasetBundle bundle = collect_bundle(e, BehaviorSpec::parse("uniform"), 25, 5);
  SolverConfig config;
  config.gamma = 0.9;
  config.psi_eff = default_psi_eff(1.0, bundle.n, e.spec.latent_dim);
  const TrainResult trained = run_mtfqi(bundle, cls, config);

  TempFile file("model.json");
  save_model(trained.model, trained.report, file.path);
  const LoadedModel loaded = load_model(file.path);

  CHECK(loaded.model.encoder_index == trained.model.encoder_index);
  CHECK(loaded.model.stage_losses == trained.model.stage_losses);
  CHECK(loaded.model.selection_trace == trained.model.selection_trace);
  CHECK(loaded.model.config.gamma == config.gamma);
  CHECK(loaded.model.config.psi_eff == config.psi_eff);
  for (std::size_t t = 0; t < e.tasks.size(); ++t)
    for (int h = 0; h < e.spec.horizon; ++h)
      CHECK((loaded.model.decoders[t][h] - trained.model.decoders[t][h])
                .cwiseAbs()
                .maxCoeff() == 0.0);
  for (int h = 0; h < e.spec.horizon; ++h)
    CHECK((loaded.model.stage_encoders[h].table - trained.model.stage_encoders[h].table)
              .cwiseAbs()
              .maxCoeff() == 0.0);
  CHECK(loaded.report.iterations == trained.report.iterations);
  CHECK(loaded.report.dtheta == trained.report.dtheta);
}
