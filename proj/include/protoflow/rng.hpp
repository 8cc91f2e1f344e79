#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace protoflow {

// Deterministic random source. mt19937_64 gives a portable bit stream, but
// the std distributions are implementation-defined, so the value-level
// transforms (uniform double, Box-Muller normal, unbiased ints) are done here
// to keep results identical across platforms and library versions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Independent stream for a (seed, stream_index) pair, e.g. one per episode,
  // so parallel evaluation stays deterministic regardless of thread count.
  static Rng derive(std::uint64_t seed, std::uint64_t stream);

  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);
  // Standard normal via Box-Muller (pairs cached).
  double normal();
  // Unbiased integer in [0, n), n > 0.
  std::uint64_t uniform_int(std::uint64_t n);

  // Fisher-Yates; deterministic given the stream state.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  bool has_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

}  // namespace protoflow
