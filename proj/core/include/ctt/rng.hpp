#pragma once

#include <cstdint>
#include <vector>

namespace ctt {

// Deterministic splitmix64 generator. Hand-rolled so that every emitted
// number is reproducible bit-for-bit independent of the standard library
// implementation; all seeds in the project flow through this type.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform();
  double uniform(double lo, double hi);

  // Box-Muller; consumes two uniforms per call, no cached spare.
  double normal(double mean, double stddev);

  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i + 1));
      std::swap(v[i], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

// Stateless combiner for deriving independent seed streams, e.g.
// mix_seed(run_seed, fold_index). Order-sensitive.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace ctt
