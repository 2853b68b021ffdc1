#pragma once

/**
 * Deterministic splittable random streams.
 *
 * Every source of randomness in the project is a Stream derived from the run
 * seed by hashing labels (epoch, prompt, tree index, node id, child index).
 * Streams are cheap value types; deriving a child stream never perturbs the
 * parent, so sampling order cannot leak between components. All draws are
 * produced by SplitMix64 + Box-Muller, which keeps runs bit-reproducible
 * across platforms independent of libstdc++ distribution internals.
 */

#include <cmath>
#include <cstdint>

namespace treegrpo::rng {

inline uint64_t splitmix64(uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Order-sensitive combiner: mix(a, b) != mix(b, a).
inline uint64_t mix(uint64_t a, uint64_t b) {
  uint64_t s = a ^ (0x9e3779b97f4a7c15ULL + (b << 6) + (b >> 2));
  s ^= splitmix64(b);
  return splitmix64(s);
}

class Stream {
 public:
  explicit Stream(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() { return splitmix64(state_); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; the spare draw is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    while (u1 == 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * M_PI * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  // Independent stream keyed by (label, a, b); deterministic in the inputs.
  Stream child(uint64_t label, uint64_t a = 0, uint64_t b = 0) const {
    return Stream(mix(mix(mix(state_, label), a), b));
  }

 private:
  uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Labels for deriving the per-component streams from the run seed.
// Kept in one place so the derivation tree is documented.
namespace stream_label {
inline constexpr uint64_t kInit = 0x01;       // parameter initialization
inline constexpr uint64_t kPretrain = 0x02;   // pretraining batches
inline constexpr uint64_t kWindow = 0x03;     // per-epoch window draw
inline constexpr uint64_t kTreeSeed = 0x04;   // shared root latent per tree
inline constexpr uint64_t kBranch = 0x05;     // per-edge SDE noise
inline constexpr uint64_t kEval = 0x06;       // evaluation rollouts
inline constexpr uint64_t kTrajectory = 0x07; // baseline trajectories
}  // namespace stream_label

}  // namespace treegrpo::rng
