#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace gmmddpm {

// Stateless 64-bit mixer (splitmix64 finalizer).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Domain tags keep independent consumers of one master seed apart.
enum class StreamTag : std::uint64_t {
  kReverseInit = 1,
  kReverseStep = 2,
  kTargetSample = 3,
  kForwardNoise = 4,
  kProjection = 5,
  kPerturbation = 6,
  kScoreError = 7,
  kProbe = 8,
  kNullCalibration = 9,
  kGeometry = 10,
  kMisc = 11,
};

// Derives a child seed from (master, tag, a, b). The map is a fixed hash, so
// the stream for e.g. (chain i, step t) never depends on execution order.
constexpr std::uint64_t derive_seed(std::uint64_t master, StreamTag tag, std::uint64_t a = 0,
                                    std::uint64_t b = 0) noexcept {
  std::uint64_t h = mix64(master ^ 0x6a09e667f3bcc908ULL);
  h = mix64(h ^ static_cast<std::uint64_t>(tag));
  h = mix64(h ^ a);
  h = mix64(h ^ (b * 0x9e3779b97f4a7c15ULL));
  return h;
}

// xoshiro256++ satisfying UniformRandomBitGenerator; seeded through splitmix64.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) noexcept;

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept;

  double uniform() noexcept;  // in [0, 1)
  double normal();

 private:
  std::uint64_t s_[4];
  std::normal_distribution<double> normal_{0.0, 1.0};
};

inline Rng make_stream(std::uint64_t master, StreamTag tag, std::uint64_t a = 0,
                       std::uint64_t b = 0) {
  return Rng(derive_seed(master, tag, a, b));
}

}  // namespace gmmddpm
