#include "mtfqi/serialize.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace mtfqi {

namespace {

using nlohmann::json;

constexpr int kEnsembleSchemaVersion = 1;
constexpr int kModelSchemaVersion = 1;

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& rows) {
  if (!rows.is_array() || rows.empty())
    throw std::runtime_error("ensemble: expected a non-empty matrix");
  const int nr = static_cast<int>(rows.size());
  const int nc = static_cast<int>(rows[0].size());
  Matrix m(nr, nc);
  for (int r = 0; r < nr; ++r) {
    if (static_cast<int>(rows[r].size()) != nc)
      throw std::runtime_error("ensemble: ragged matrix rows");
    for (int c = 0; c < nc; ++c) m(r, c) = rows[r][c].get<double>();
  }
  return m;
}

json vector_to_json(const Vector& v) {
  json arr = json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Vector vector_from_json(const json& arr) {
  Vector v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) v[i] = arr[i].get<double>();
  return v;
}

json encoder_to_json(const FeatureMap& m) {
  return json{{"label", m.label},
              {"S", m.num_states},
              {"K", m.num_actions},
              {"table", matrix_to_json(m.table)}};
}

FeatureMap encoder_from_json(const json& j) {
  FeatureMap m;
  m.label = j["label"].get<std::string>();
  m.num_states = j["S"].get<int>();
  m.num_actions = j["K"].get<int>();
  m.table = matrix_from_json(j["table"]);
  return m;
}

json encoder_class_to_json(const EncoderClass& cls) {
  json members = json::array();
  for (const FeatureMap& m : cls.members) members.push_back(encoder_to_json(m));
  return json{{"contains_truth", cls.contains_truth},
              {"truth_index", cls.truth_index},
              {"members", std::move(members)}};
}

EncoderClass encoder_class_from_json(const json& j) {
  EncoderClass cls;
  cls.contains_truth = j["contains_truth"].get<bool>();
  cls.truth_index = j["truth_index"].get<int>();
  for (const json& m : j["members"]) cls.members.push_back(encoder_from_json(m));
  cls.validate();
  return cls;
}

void check_version(const json& doc, const std::string& kind, int expected) {
  if (!doc.is_object() || doc.value("kind", "") != kind)
    throw std::runtime_error("file is not a " + kind + " document");
  const int version = doc.value("schema_version", -1);
  if (version != expected)
    throw std::runtime_error(kind + " schema version " + std::to_string(version) +
                             " unsupported; this build reads version " +
                             std::to_string(expected));
}

json load_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return json::parse(in);
}

json ensemble_doc(const TaskEnsemble& e) {
  json tasks = json::array();
  for (std::size_t t = 0; t < e.tasks.size(); ++t) {
    const TabularMDP& task = e.tasks[t];
    json transitions = json::array();
    json rewards = json::array();
    for (int h = 0; h < task.horizon; ++h) {
      transitions.push_back(matrix_to_json(task.transitions[h]));
      rewards.push_back(matrix_to_json(task.rewards[h]));
    }
    tasks.push_back(json{{"transitions", std::move(transitions)},
                         {"rewards", std::move(rewards)},
                         {"reward_params", matrix_to_json(e.reward_params[t])}});
  }
  json decoders = json::array();
  for (const auto& per_task : e.true_decoders) {
    json stages = json::array();
    for (const Vector& w : per_task) stages.push_back(vector_to_json(w));
    decoders.push_back(std::move(stages));
  }
  return json{{"schema_version", kEnsembleSchemaVersion},
              {"kind", "mtfqi.ensemble"},
              {"S", e.spec.num_states},
              {"K", e.spec.num_actions},
              {"H", e.spec.horizon},
              {"T", e.spec.num_tasks},
              {"d", e.spec.latent_dim},
              {"gamma", e.spec.gamma},
              {"w_max", e.spec.w_max},
              {"seed", e.seed},
              {"feature_scale", e.feature_scale},
              {"reward_scale", e.reward_scale},
              {"features", matrix_to_json(e.true_features.table)},
              {"tasks", std::move(tasks)},
              {"true_decoders", std::move(decoders)}};
}

}  // namespace

std::string ensemble_to_json(const TaskEnsemble& ensemble, const EncoderClass* encoders) {
  json doc = ensemble_doc(ensemble);
  if (encoders) doc["encoder_class"] = encoder_class_to_json(*encoders);
  return doc.dump();
}

void save_ensemble(const TaskEnsemble& ensemble, const std::string& path,
                   const EncoderClass* encoders) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_ensemble: cannot open " + path);
  out << ensemble_to_json(ensemble, encoders) << "\n";
  if (!out) throw std::runtime_error("save_ensemble: write failed for " + path);
}

LoadedEnsemble load_ensemble(const std::string& path) {
  const json doc = load_json_file(path);
  check_version(doc, "mtfqi.ensemble", kEnsembleSchemaVersion);

  LoadedEnsemble loaded;
  TaskEnsemble& e = loaded.ensemble;
  e.spec.num_states = doc["S"].get<int>();
  e.spec.num_actions = doc["K"].get<int>();
  e.spec.horizon = doc["H"].get<int>();
  e.spec.num_tasks = doc["T"].get<int>();
  e.spec.latent_dim = doc["d"].get<int>();
  e.spec.gamma = doc["gamma"].get<double>();
  e.spec.w_max = doc["w_max"].get<double>();
  e.seed = doc["seed"].get<std::uint64_t>();
  e.feature_scale = doc["feature_scale"].get<double>();
  e.reward_scale = doc["reward_scale"].get<double>();
  e.true_features.label = "truth";
  e.true_features.num_states = e.spec.num_states;
  e.true_features.num_actions = e.spec.num_actions;
  e.true_features.table = matrix_from_json(doc["features"]);

  for (const json& jt : doc["tasks"]) {
    TabularMDP task;
    task.num_states = e.spec.num_states;
    task.num_actions = e.spec.num_actions;
    task.horizon = e.spec.horizon;
    task.gamma = e.spec.gamma;
    task.initial_state = 0;
    for (const json& m : jt["transitions"]) task.transitions.push_back(matrix_from_json(m));
    for (const json& m : jt["rewards"]) task.rewards.push_back(matrix_from_json(m));
    task.validate();
    e.tasks.push_back(std::move(task));
    e.reward_params.push_back(matrix_from_json(jt["reward_params"]));
  }

  for (const json& jt : doc["true_decoders"]) {
    std::vector<Vector> stages;
    for (const json& w : jt) stages.push_back(vector_from_json(w));
    e.true_decoders.push_back(std::move(stages));
  }

  if (doc.contains("encoder_class"))
    loaded.encoders = encoder_class_from_json(doc["encoder_class"]);
  return loaded;
}

std::string ensemble_hash(const TaskEnsemble& ensemble) {
  const std::string text = ensemble_to_json(ensemble, nullptr);
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return std::string(buf);
}

void save_model(const LearnedModel& model, const FitReport& report,
                const std::string& path) {
  json encoders = json::array();
  for (const FeatureMap& m : model.stage_encoders) encoders.push_back(encoder_to_json(m));
  json decoders = json::array();
  for (const auto& per_task : model.decoders) {
    json stages = json::array();
    for (const Vector& w : per_task) stages.push_back(vector_to_json(w));
    decoders.push_back(std::move(stages));
  }
  json doc{{"schema_version", kModelSchemaVersion},
           {"kind", "mtfqi.model"},
           {"mode", model.config.mode == SolverConfig::Mode::Global ? "global" : "per-stage"},
           {"gamma", model.config.gamma},
           {"ridge", model.config.ridge},
           {"psi_eff", model.config.psi_eff},
           {"q_cap", model.q_cap},
           {"encoder_index", model.encoder_index},
           {"stage_encoders", std::move(encoders)},
           {"decoders", std::move(decoders)},
           {"selection_trace", model.selection_trace},
           {"stage_losses", model.stage_losses},
           {"report",
            json{{"stage_losses", report.stage_losses},
                 {"iterations", report.iterations},
                 {"dtheta", report.dtheta},
                 {"residual_sq_variance", report.residual_sq_variance}}}};

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_model: cannot open " + path);
  out << doc.dump() << "\n";
  if (!out) throw std::runtime_error("save_model: write failed for " + path);
}

LoadedModel load_model(const std::string& path) {
  const json doc = load_json_file(path);
  check_version(doc, "mtfqi.model", kModelSchemaVersion);

  LoadedModel loaded;
  LearnedModel& model = loaded.model;
  model.config.mode = doc["mode"].get<std::string>() == "global"
                          ? SolverConfig::Mode::Global
                          : SolverConfig::Mode::PerStage;
  model.config.gamma = doc["gamma"].get<double>();
  model.config.ridge = doc["ridge"].get<double>();
  model.config.psi_eff = doc["psi_eff"].get<double>();
  model.q_cap = doc["q_cap"].get<double>();
  model.encoder_index = doc["encoder_index"].get<std::vector<int>>();
  for (const json& m : doc["stage_encoders"])
    model.stage_encoders.push_back(encoder_from_json(m));
  for (const json& jt : doc["decoders"]) {
    std::vector<Vector> stages;
    for (const json& w : jt) stages.push_back(vector_from_json(w));
    model.decoders.push_back(std::move(stages));
  }
  model.selection_trace = doc["selection_trace"].get<std::vector<std::vector<double>>>();
  model.stage_losses = doc["stage_losses"].get<std::vector<double>>();

  const json& rep = doc["report"];
  loaded.report.stage_losses = rep["stage_losses"].get<std::vector<double>>();
  loaded.report.iterations = rep["iterations"].get<std::vector<int>>();
  loaded.report.dtheta = rep["dtheta"].get<std::vector<std::vector<double>>>();
  loaded.report.residual_sq_variance =
      rep["residual_sq_variance"].get<std::vector<double>>();
  return loaded;
}

}  // namespace mtfqi
