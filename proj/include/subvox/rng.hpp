#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace subvox {

// 64-bit finalizer from splitmix64; bijective, good avalanche.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Stage tags keep the per-(model, replica) streams of the different
// generation phases decorrelated.
enum class Stage : std::uint64_t {
  model_sample = 1,
  replica_geometry = 2,
  texture = 3,
  psf_draw = 4,
  noise = 5,
  augment = 6,
  weight_init = 7,
  shuffle = 8,
  split = 9,
  sweep_cell = 10,
};

// Derives an independent stream key from a global seed and a list of ids
// (model id, replica id, stage, ...). The id order matters.
inline std::uint64_t stream_key(std::uint64_t seed,
                                std::initializer_list<std::uint64_t> ids) {
  std::uint64_t key = mix64(seed ^ 0x6a09e667f3bcc909ULL);
  for (std::uint64_t id : ids)
    key = mix64(key ^ (mix64(id) + 0x9e3779b97f4a7c15ULL));
  return key;
}

// Small counter-based generator (splitmix64 stream). Streams created from
// disjoint keys are independent, so generation order never matters.
class Rng {
 public:
  explicit Rng(std::uint64_t key) : state_(key) {}

  Rng(std::uint64_t seed, std::initializer_list<std::uint64_t> ids)
      : state_(stream_key(seed, ids)) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [lo, hi], inclusive.
  int uniform_int(int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  bool bernoulli(double p) { return uniform01() < p; }

  // Standard normal via Box-Muller; second value cached.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

 private:
  std::uint64_t state_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace subvox
