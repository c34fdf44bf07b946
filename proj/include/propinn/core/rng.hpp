#pragma once

#include <cstdint>
#include <random>

namespace propinn {

/// splitmix64 finaliser; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed for the `index`-th draw of a named stream under an experiment seed.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream,
                                    std::uint64_t index = 0) noexcept {
  return mix64(mix64(mix64(seed) ^ stream) + index);
}

namespace streams {
inline constexpr std::uint64_t kInit = 0x1;
inline constexpr std::uint64_t kPerturbation = 0x2;
inline constexpr std::uint64_t kSampling = 0x3;
inline constexpr std::uint64_t kEvaluation = 0x4;
inline constexpr std::uint64_t kDiagnostics = 0x5;
}  // namespace streams

/// Bit-reproducible uniform generator. std::uniform_real_distribution is
/// implementation-defined, so the mapping to [0,1) is done by hand.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace propinn
