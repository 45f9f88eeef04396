#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace mli {

// Deterministic counter-based RNG. Every consumer derives a named child
// stream from one top-level seed, so results are reproducible across
// platforms (no std::*_distribution involved).
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(mix(seed ^ kInit)) {}

  // Child streams: same seed + same name/index -> same stream.
  Rng derive(std::string_view name) const;
  Rng derive(uint64_t index) const;

  uint64_t next_u64();

  double uniform01();                     // (0, 1]
  double uniform(double lo, double hi);   // [lo, hi)
  double normal();                        // standard normal, Box-Muller
  double normal(double mean, double std) { return mean + std * normal(); }
  int uniform_int(int lo, int hi);        // inclusive bounds
  bool bernoulli(double p);

  // k distinct values from {1, ..., n}, ascending.
  std::vector<int> sample_without_replacement(int n, int k);

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(next_u64() % i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static constexpr uint64_t kInit = 0x9e3779b97f4a7c15ull;
  static uint64_t mix(uint64_t x);
  uint64_t state_;
};

}  // namespace mli
