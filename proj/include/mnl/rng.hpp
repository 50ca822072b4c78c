#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace mnl {

// All randomness in the library flows through this wrapper so that a seed
// fully determines every trajectory, independent of the standard library's
// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on the open interval (0, 1).  The half-ulp offset keeps both
  // endpoints unreachable, which callers rely on (e.g. sampling x > 0 for
  // sin(1/x)).
  double uniform01() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Uniform on the open interval (lo, hi).
  double uniform(double lo, double hi) { return lo + uniform01() * (hi - lo); }

  // Uniform integer in [0, n), n > 0.  Rejection sampling keeps draws exactly
  // uniform and still deterministic.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = engine_();
    while (v >= limit) v = engine_();
    return v % n;
  }

  // Derive an independent stream for a named purpose, so that e.g. batch
  // shuffling and probe-set generation never share draws.
  Rng fork(std::uint64_t purpose) const {
    std::uint64_t x = seed_ + (purpose + 1) * 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return Rng(x ^ (x >> 31));
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

template <typename T>
void shuffle_indices(std::vector<T>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(idx[i - 1], idx[j]);
  }
}

}  // namespace mnl
