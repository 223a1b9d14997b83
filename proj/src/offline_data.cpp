#include "mtfqi/offline_data.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "mtfqi/format.hpp"
#include "mtfqi/rng.hpp"

namespace mtfqi {

namespace {

using nlohmann::json;

constexpr int kBundleSchemaVersion = 1;

[[noreturn]] void parse_error_at(std::size_t byte_offset, const std::string& what) {
  throw std::runtime_error("bundle parse error at byte " +
                           std::to_string(byte_offset) + ": " + what);
}

json parse_line(const std::string& line, std::size_t line_start) {
  try {
    return json::parse(line);
  } catch (const json::parse_error& e) {
    // e.byte is 1-based within the line
    parse_error_at(line_start + (e.byte > 0 ? e.byte - 1 : 0), e.what());
  }
}

}  // namespace

BehaviorSpec BehaviorSpec::parse(const std::string& text) {
  BehaviorSpec spec;
  if (text == "uniform") {
    spec.kind = Kind::Uniform;
    return spec;
  }
  if (text.rfind("eps:", 0) == 0) {
    spec.kind = Kind::EpsilonGreedy;
    try {
      spec.epsilon = std::stod(text.substr(4));
    } catch (const std::exception&) {
      throw std::invalid_argument("behavior: cannot parse epsilon in '" + text + "'");
    }
    if (!(spec.epsilon > 0.0 && spec.epsilon <= 1.0))
      throw std::invalid_argument("behavior: epsilon must lie in (0,1]");
    return spec;
  }
  throw std::invalid_argument("behavior: expected 'uniform' or 'eps:<float>', got '" +
                              text + "'");
}

std::string BehaviorSpec::to_string() const {
  if (kind == Kind::Uniform) return "uniform";
  return "eps:" + format_double(epsilon);
}

BehaviorPolicy make_behavior(const TabularMDP& task, const BehaviorSpec& spec) {
  const int S = task.num_states;
  const int K = task.num_actions;
  BehaviorPolicy policy;
  policy.spec = spec;
  policy.table.probs.assign(task.horizon, Matrix::Constant(S, K, 1.0 / K));
  if (spec.kind == BehaviorSpec::Kind::EpsilonGreedy) {
    const Policy greedy = greedy_policy(optimal_q(task));
    for (int h = 0; h < task.horizon; ++h) {
      policy.table.probs[h].setConstant(spec.epsilon / K);
      for (int s = 0; s < S; ++s)
        policy.table.probs[h](s, greedy.action_of[h][s]) += 1.0 - spec.epsilon;
    }
  }
  return policy;
}

TaskDataset collect(const TaskEnsemble& ensemble, int task, const BehaviorPolicy& behavior,
                    int n, std::uint64_t seed) {
  if (task < 0 || task >= static_cast<int>(ensemble.tasks.size()))
    throw std::out_of_range("collect: task index out of range");
  if (n < 1) throw std::invalid_argument("collect: n must be positive");
  const TabularMDP& mdp = ensemble.tasks[task];
  if (static_cast<int>(behavior.table.probs.size()) != mdp.horizon)
    throw std::invalid_argument("collect: behavior horizon mismatch");

  TaskDataset data;
  data.task_id = task;
  data.seed = seed;
  data.behavior = behavior.spec.to_string();
  data.stages.assign(mdp.horizon, {});
  for (auto& stage : data.stages) stage.reserve(n);

  Rng rng(seed);
  for (int episode = 0; episode < n; ++episode) {
    int s = mdp.initial_state;
    for (int h = 0; h < mdp.horizon; ++h) {
      const int a = rng.categorical(behavior.table.probs[h].row(s));
      const int s_next = rng.categorical(mdp.transitions[h].row(mdp.sa_index(s, a)));
      data.stages[h].push_back({h, s, a, mdp.rewards[h](s, a), s_next});
      s = s_next;
    }
  }
  return data;
}

DatasetBundle collect_bundle(const TaskEnsemble& ensemble, const BehaviorSpec& behavior,
                             int n, std::uint64_t master_seed) {
  DatasetBundle bundle;
  bundle.n = n;
  bundle.horizon = ensemble.spec.horizon;
  bundle.seed = master_seed;
  bundle.behavior = behavior.to_string();
  bundle.tasks.reserve(ensemble.tasks.size());
  for (int t = 0; t < static_cast<int>(ensemble.tasks.size()); ++t) {
    const BehaviorPolicy policy = make_behavior(ensemble.tasks[t], behavior);
    bundle.tasks.push_back(collect(ensemble, t, policy, n, derive_seed(master_seed, t)));
  }
  return bundle;
}

void save_bundle(const DatasetBundle& bundle, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_bundle: cannot open " + path);

  json header = {{"schema_version", kBundleSchemaVersion},
                 {"kind", "mtfqi.bundle"},
                 {"ensemble_hash", bundle.ensemble_hash},
                 {"T", bundle.num_tasks()},
                 {"n", bundle.n},
                 {"H", bundle.horizon},
                 {"seed", bundle.seed},
                 {"behavior", bundle.behavior}};
  out << header.dump() << "\n";
  for (const TaskDataset& task : bundle.tasks) {
    for (const auto& stage : task.stages) {
      for (const Transition& tr : stage) {
        json line = {{"t", task.task_id}, {"h", tr.h + 1}, {"s", tr.s},
                     {"a", tr.a},         {"r", tr.r},     {"s_next", tr.s_next}};
        out << line.dump() << "\n";
      }
    }
  }
  if (!out) throw std::runtime_error("save_bundle: write failed for " + path);
}

DatasetBundle load_bundle(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_bundle: cannot open " + path);

  std::string line;
  std::size_t offset = 0;
  if (!std::getline(in, line)) parse_error_at(0, "missing header line");
  const json header = parse_line(line, 0);
  offset += line.size() + 1;

  if (!header.is_object() || !header.contains("schema_version"))
    parse_error_at(0, "header is not a bundle header object");
  const int version = header["schema_version"].get<int>();
  if (version != kBundleSchemaVersion)
    throw std::runtime_error("bundle schema version " + std::to_string(version) +
                             " unsupported; this build reads version " +
                             std::to_string(kBundleSchemaVersion));

  DatasetBundle bundle;
  bundle.ensemble_hash = header.value("ensemble_hash", "");
  bundle.n = header["n"].get<int>();
  bundle.horizon = header["H"].get<int>();
  bundle.seed = header["seed"].get<std::uint64_t>();
  bundle.behavior = header.value("behavior", "uniform");
  const int num_tasks = header["T"].get<int>();
  if (num_tasks < 0 || bundle.horizon < 0)
    parse_error_at(0, "negative task count or horizon in header");

  bundle.tasks.resize(num_tasks);
  for (int t = 0; t < num_tasks; ++t) {
    bundle.tasks[t].task_id = t;
    bundle.tasks[t].behavior = bundle.behavior;
    bundle.tasks[t].stages.assign(bundle.horizon, {});
  }

  std::size_t lines_read = 0;
  const std::size_t expected =
      static_cast<std::size_t>(num_tasks) * bundle.horizon * bundle.n;
  while (std::getline(in, line)) {
    if (line.empty()) {
      offset += 1;
      continue;
    }
    const json rec = parse_line(line, offset);
    const int t = rec["t"].get<int>();
    const int h = rec["h"].get<int>() - 1;
    if (t < 0 || t >= num_tasks || h < 0 || h >= bundle.horizon)
      parse_error_at(offset, "transition task/stage out of range");
    Transition tr;
    tr.h = h;
    tr.s = rec["s"].get<int>();
    tr.a = rec["a"].get<int>();
    tr.r = rec["r"].get<double>();
    tr.s_next = rec["s_next"].get<int>();
    bundle.tasks[t].stages[h].push_back(tr);
    offset += line.size() + 1;
    ++lines_read;
  }
  if (lines_read != expected)
    parse_error_at(offset, "expected " + std::to_string(expected) +
                               " transition lines, found " + std::to_string(lines_read));
  return bundle;
}

}  // namespace mtfqi
