// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace gm {

/// xoshiro256** (Blackman & Vigna) with 256 bits of state, seeded through
/// splitmix64. Normal deviates use Box-Muller so sequences do not depend on
/// the standard library implementation.
///
/// There is no global generator: the harness owns a root seed and hands out
/// named sub-streams (`Rng::stream(seed, "init")`), so e.g. toggling an
/// ablation never shifts the noise drawn for data augmentation.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed);
  static Rng stream(std::uint64_t seed, std::string_view name);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()();

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);

 private:
  std::uint64_t s_[4];
};

}  // namespace gm
