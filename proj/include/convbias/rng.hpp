#ifndef CONVBIAS_RNG_HPP
#define CONVBIAS_RNG_HPP

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

namespace convbias {

/// splitmix64 finaliser; used to derive independent per-trial seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// FNV-1a, for folding experiment names into seeds.
constexpr std::uint64_t hash_name(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed for one trial, independent of scheduling order.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::string_view experiment,
                                    std::uint64_t n, std::uint64_t trial) noexcept {
  std::uint64_t h = mix64(base);
  h = mix64(h ^ hash_name(experiment));
  h = mix64(h ^ n);
  h = mix64(h ^ trial);
  return h;
}

/// Seeded random stream owned by a single run.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform index in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  double normal(double stddev = 1.0) {
    return std::normal_distribution<double>(0.0, stddev)(engine_);
  }

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }

  /// Fresh seed for a child stream.
  std::uint64_t fork() { return mix64(engine_()); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace convbias

#endif  // CONVBIAS_RNG_HPP
