#include "vasamp/rng.hpp"

#include "vasamp/errors.hpp"

namespace vas {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view stream, std::uint64_t index) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : stream) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(splitmix64(master ^ h) + index);
}

std::uint64_t Rng::below(std::uint64_t n) noexcept {
  // Rejection against the largest multiple of n keeps the draw unbiased.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return x % n;
}

TokenId sample_categorical(std::span<const double> dist, Rng& rng) {
  if (dist.empty()) throw InvalidArgumentError("cannot sample from an empty distribution");
  const double u = rng.uniform();
  double acc = 0.0;
  std::size_t last_positive = dist.size();
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (dist[i] <= 0.0) continue;
    acc += dist[i];
    last_positive = i;
    if (u < acc) return static_cast<TokenId>(i);
  }
  if (last_positive == dist.size()) throw ZeroMassError("distribution has no positive mass");
  return static_cast<TokenId>(last_positive);
}

}  // namespace vas
