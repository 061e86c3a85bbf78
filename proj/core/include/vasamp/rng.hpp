#pragma once

// Seeded randomness. Every random draw in the library flows from a master
// seed through derive_seed(master, stream, index): stream names a purpose
// ("rollout", "fit_value", ...) and index a trajectory or epoch, so any
// sub-computation can be re-run in isolation and reproduce bit-for-bit.

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

#include "vasamp/mdp.hpp"

namespace vas {

std::uint64_t splitmix64(std::uint64_t x) noexcept;

// FNV-1a over the stream name mixed with master and index through splitmix64.
std::uint64_t derive_seed(std::uint64_t master, std::string_view stream, std::uint64_t index = 0) noexcept;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform double in [0, 1) built from the top 53 bits, independent of the
  // standard library's distribution implementations.
  double uniform() noexcept { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  std::uint64_t next() noexcept { return engine_(); }

  // Uniform integer in [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept;

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
};

// Inverse-CDF draw using one uniform. Returns the last positive-mass index if
// rounding leaves the cumulative sum short of the draw.
TokenId sample_categorical(std::span<const double> dist, Rng& rng);

}  // namespace vas
