#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace xlp {

// The standard distributions are implementation-defined, so anything that
// must replay bit-for-bit across toolchains draws through these helpers.
class SeededRng {
 public:
  explicit SeededRng(uint64_t seed) : engine_(seed) {}

  uint64_t next() { return engine_(); }

  // Uniform integer in [0, bound) by rejection; bound must be > 0.
  uint64_t below(uint64_t bound);

  // Uniform real in [0, 1) from the top 53 bits.
  double unit();

  // Standard normal via Box-Muller on unit().
  double normal();

  template <typename T>
  void shuffle(std::span<T> items) {
    for (size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// splitmix64 finalizer; used to derive independent sub-seeds.
uint64_t mix_seed(uint64_t seed, uint64_t salt);

}  // namespace xlp
