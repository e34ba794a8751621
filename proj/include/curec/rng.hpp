#pragma once

#include <cstdint>
#include <vector>

namespace curec {

// Deterministic RNG. All transforms (uniform, normal, shuffle) are written
// out by hand so that a given seed produces the same stream on every
// platform and standard library; std::distribution objects are
// implementation-defined and are not used anywhere in the project.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();
  // [0, 1)
  double uniform();
  double uniform(double lo, double hi);
  // inclusive bounds
  int64_t uniform_int(int64_t lo, int64_t hi);
  double normal(double mean = 0.0, double stddev = 1.0);

  // Fisher-Yates, swapping from the back.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (size_t i = v.size() - 1; i > 0; --i) {
      const auto j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i)));
      std::swap(v[i], v[j]);
    }
  }

  // Independent derived stream: same (seed, stream) pair always yields the
  // same child generator regardless of how much of the parent was consumed.
  Rng fork(uint64_t stream) const;

 private:
  // xoshiro256** state seeded via splitmix64.
  uint64_t s_[4];
  uint64_t seed_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace curec
