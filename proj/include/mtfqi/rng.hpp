#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace mtfqi {

// splitmix64 mixing step; used for seed derivation so that parallel
// collectors get independent streams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t s = master;
  std::uint64_t a = splitmix64(s);
  s = master ^ (0x6a09e667f3bcc909ULL + stream);
  std::uint64_t b = splitmix64(s);
  return a ^ (b + 0x9e3779b97f4a7c15ULL * (stream + 1));
}

// Deterministic generator: mt19937_64 engine plus hand-rolled conversions.
// std::* distributions are implementation-defined, so results would not be
// reproducible across standard libraries; these conversions are portable.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // uniform double in [0, 1)
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n) via 128-bit multiply-shift
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(engine_()) * n) >> 64);
  }

  // point on the probability simplex in R^dim (flat Dirichlet)
  Eigen::VectorXd simplex(int dim) {
    Eigen::VectorXd v(dim);
    double total = 0.0;
    for (int i = 0; i < dim; ++i) {
      v[i] = -std::log(1.0 - uniform());
      total += v[i];
    }
    if (total <= 0.0) {
      v.setConstant(1.0 / dim);
      return v;
    }
    v /= total;
    return v;
  }

  // index drawn from the distribution given by a nonnegative row summing to 1
  int categorical(const Eigen::Ref<const Eigen::RowVectorXd>& probs) {
    const double u = uniform();
    double acc = 0.0;
    for (int i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return i;
    }
    return static_cast<int>(probs.size()) - 1;
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = uniform_int(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mtfqi
