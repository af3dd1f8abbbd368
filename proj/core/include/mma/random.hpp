#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <vector>

namespace mma {

/// Deterministic random stream. All value transforms (uniform, gaussian,
/// sphere/ball sampling) are hand-rolled on top of mt19937_64 so that a seed
/// produces bit-identical streams on every platform and standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1) with 53 random mantissa bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Unbiased integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  /// Standard normal via Box-Muller (one spare cached).
  double gaussian();

  std::array<double, 3> on_unit_sphere();

  /// Uniform over the solid unit ball.
  std::array<double, 3> in_unit_ball();

  /// Deterministic Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    if (items.size() < 2) return;
    for (std::size_t i = items.size() - 1; i > 0; --i) {
      std::size_t j = static_cast<std::size_t>(below(i + 1));
      std::swap(items[i], items[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mma
