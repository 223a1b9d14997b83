#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtfqi/ensemble.hpp"
#include "mtfqi/mdp.hpp"

namespace mtfqi {

// Parsed form of the CLI behavior argument: "uniform" or "eps:<float>".
struct BehaviorSpec {
  enum class Kind { Uniform, EpsilonGreedy };
  Kind kind = Kind::Uniform;
  double epsilon = 0.0;

  static BehaviorSpec parse(const std::string& text);
  std::string to_string() const;
};

// Stage-indexed stochastic behavior policy. Uniform rows give every action
// probability 1/K; epsilon-greedy rows keep probability >= eps/K on every
// action, so behavior occupancies cover everything a policy can reach.
struct BehaviorPolicy {
  BehaviorSpec spec;
  StochasticPolicy table;
};

BehaviorPolicy make_behavior(const TabularMDP& task, const BehaviorSpec& spec);

struct Transition {
  int h = 0;  // 0-based stage
  int s = 0;
  int a = 0;
  double r = 0.0;
  int s_next = 0;
};

// n full episodes sliced per stage: stages[h] holds exactly n transitions
// whose (s,a) marginal is the stage-h behavior occupancy.
struct TaskDataset {
  int task_id = 0;
  std::uint64_t seed = 0;
  std::string behavior;
  std::vector<std::vector<Transition>> stages;  // [H][n]

  int horizon() const { return static_cast<int>(stages.size()); }
  int samples_per_stage() const {
    return stages.empty() ? 0 : static_cast<int>(stages[0].size());
  }
};

struct DatasetBundle {
  std::vector<TaskDataset> tasks;
  int n = 0;
  int horizon = 0;
  std::uint64_t seed = 0;
  std::string behavior;
  std::string ensemble_hash;

  int num_tasks() const { return static_cast<int>(tasks.size()); }
};

// Simulates n episodes of task `t` under `behavior` from the fixed initial
// state. Deterministic given (ensemble, t, n, seed).
TaskDataset collect(const TaskEnsemble& ensemble, int task, const BehaviorPolicy& behavior,
                    int n, std::uint64_t seed);

// One dataset per task; task t uses the derived seed hash(master_seed, t).
DatasetBundle collect_bundle(const TaskEnsemble& ensemble, const BehaviorSpec& behavior,
                             int n, std::uint64_t master_seed);

// Versioned JSON-lines: one header line, then one line per transition.
// load_bundle reports schema-version mismatches by naming both versions and
// parse failures with the absolute byte offset.
void save_bundle(const DatasetBundle& bundle, const std::string& path);
DatasetBundle load_bundle(const std::string& path);

}  // namespace mtfqi
