#include "mtfqi/features.hpp"

#include <set>
#include <stdexcept>

#include "mtfqi/rng.hpp"

namespace mtfqi {

void EncoderClass::validate() const {
  if (members.empty()) throw std::invalid_argument("EncoderClass: empty class");
  std::set<std::string> labels;
  for (const auto& m : members) {
    if (m.num_states != members[0].num_states ||
        m.num_actions != members[0].num_actions || m.dim() != members[0].dim())
      throw std::invalid_argument("EncoderClass: members must share (S, K, d)");
    if (!labels.insert(m.label).second)
      throw std::invalid_argument("EncoderClass: duplicate label " + m.label);
    for (int r = 0; r < m.table.rows(); ++r) {
      if (!m.table.row(r).allFinite())
        throw std::invalid_argument("EncoderClass: non-finite feature entry");
      if (m.table.row(r).norm() > 1.0 + 1e-12)
        throw std::invalid_argument("EncoderClass: feature row norm exceeds 1");
    }
  }
  if (contains_truth && (truth_index < 0 || truth_index >= size()))
    throw std::invalid_argument("EncoderClass: truth index out of range");
}

EncoderClass build_encoder_class(const FeatureMap& truth, int num_distractors,
                                 double corruption, std::uint64_t seed) {
  if (num_distractors < 0)
    throw std::invalid_argument("build_encoder_class: negative distractor count");
  if (!(corruption > 0.0 && corruption <= 1.0) && corruption != 0.0)
    throw std::invalid_argument("build_encoder_class: corruption must lie in [0,1]");

  Rng rng(seed);
  const int rows = static_cast<int>(truth.table.rows());
  const int d = truth.dim();

  std::vector<FeatureMap> members;
  members.reserve(num_distractors + 1);
  FeatureMap t = truth;
  t.label = "truth";
  members.push_back(std::move(t));

  for (int k = 0; k < num_distractors; ++k) {
    FeatureMap m;
    m.label = "distractor-" + std::to_string(k);
    m.num_states = truth.num_states;
    m.num_actions = truth.num_actions;
    m.table.resize(rows, d);
    for (int r = 0; r < rows; ++r) {
      Vector random_row = rng.simplex(d);
      m.table.row(r) =
          corruption * random_row.transpose() + (1.0 - corruption) * truth.table.row(r);
      const double norm = m.table.row(r).norm();
      if (norm > 1.0) m.table.row(r) /= norm;
    }
    members.push_back(std::move(m));
  }

  std::vector<int> order(members.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  rng.shuffle(order);

  EncoderClass cls;
  cls.contains_truth = true;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (order[i] == 0) cls.truth_index = static_cast<int>(i);
    cls.members.push_back(std::move(members[order[i]]));
  }
  cls.validate();
  return cls;
}

double linear_q(const FeatureMap& phi, const Vector& w, int s, int a) {
  if (s < 0 || s >= phi.num_states || a < 0 || a >= phi.num_actions)
    throw std::out_of_range("linear_q: state or action index out of range");
  if (w.size() != phi.dim())
    throw std::invalid_argument("linear_q: decoder dimension mismatch");
  return phi.table.row(phi.row_index(s, a)).dot(w);
}

Matrix linear_q_table(const FeatureMap& phi, const Vector& w) {
  if (w.size() != phi.dim())
    throw std::invalid_argument("linear_q_table: decoder dimension mismatch");
  Matrix q(phi.num_states, phi.num_actions);
  for (int s = 0; s < phi.num_states; ++s)
    for (int a = 0; a < phi.num_actions; ++a)
      q(s, a) = phi.table.row(phi.row_index(s, a)).dot(w);
  return q;
}

}  // namespace mtfqi
