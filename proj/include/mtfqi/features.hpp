#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtfqi/mdp.hpp"

namespace mtfqi {

// Feature table over state-action pairs; row (s,a) has l2 norm <= 1.
struct FeatureMap {
  std::string label;
  int num_states = 0;
  int num_actions = 0;
  Matrix table;  // (S*K) x d

  int dim() const { return static_cast<int>(table.cols()); }
  int row_index(int s, int a) const { return s * num_actions + a; }
};

// Finite encoder hypothesis class. Members share (S, K, d) and carry unique
// labels; the generating truth is identified by truth_index when present.
struct EncoderClass {
  std::vector<FeatureMap> members;
  bool contains_truth = false;
  int truth_index = -1;

  int size() const { return static_cast<int>(members.size()); }
  void validate() const;
};

// Class = {truth} + distractors. Each distractor blends an independently
// drawn simplex feature table into the truth (corruption = 1 is fully
// random), rows rescaled to keep norms <= 1. Member order is shuffled
// deterministically by seed.
EncoderClass build_encoder_class(const FeatureMap& truth, int num_distractors,
                                 double corruption, std::uint64_t seed);

// <phi(s,a), w>; throws on out-of-range indices or dimension mismatch.
double linear_q(const FeatureMap& phi, const Vector& w, int s, int a);

// Dense S x K evaluation of <phi(.), w>.
Matrix linear_q_table(const FeatureMap& phi, const Vector& w);

}  // namespace mtfqi
