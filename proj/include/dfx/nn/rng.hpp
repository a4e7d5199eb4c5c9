#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace dfx::nn {

// Seedable generator with named substreams: Rng::stream(seed, "init") and
// Rng::stream(seed, "data") never share state. Deterministic within one build.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static Rng stream(std::uint64_t seed, std::string_view name);
  Rng split(std::string_view name) { return stream(engine_(), name); }

  std::uint64_t next_u64() { return engine_(); }
  // Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);
  double uniform(double lo = 0.0, double hi = 1.0);
  double normal(double mean, double stddev);

  template <class It>
  void shuffle(It first, It last) {
    for (auto n = last - first; n > 1; --n) std::iter_swap(first + (n - 1), first + static_cast<decltype(n)>(below(n)));
  }

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept;

}  // namespace dfx::nn
