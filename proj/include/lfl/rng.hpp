#ifndef LFL_RNG_HPP
#define LFL_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

#include "lfl/tensor.hpp"

namespace lfl {

// splitmix64 mixing step; used both as a stream deriver and a seed scrambler.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic child stream: parallel and serial generation must agree bitwise,
// so every per-item stream is derived from (seed, index) rather than shared state.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return mix64(master ^ mix64(index + 0x632be59bd9b4e019ULL));
}

// mt19937_64 output is pinned by the standard; uniform/normal are built by hand
// (std::*_distribution is implementation-defined and would break cross-platform
// determinism).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(mix64(seed)) {}

  std::uint64_t next_u64() { return gen_(); }

  // [0, 1)
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  Index uniform_index(Index n) {
    return static_cast<Index>(gen_() % static_cast<std::uint64_t>(n));
  }

  // Box-Muller, cached spare
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  Tensor normal_tensor(Shape s, double sigma = 1.0, double mean = 0.0) {
    Tensor t(std::move(s));
    for (Index i = 0; i < t.size(); ++i) t.data[i] = mean + sigma * normal();
    return t;
  }

  Tensor uniform_tensor(Shape s, double lo = 0.0, double hi = 1.0) {
    Tensor t(std::move(s));
    for (Index i = 0; i < t.size(); ++i) t.data[i] = uniform(lo, hi);
    return t;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_index(static_cast<Index>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace lfl

#endif
