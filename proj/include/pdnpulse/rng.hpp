#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

// Deterministic random-number plumbing.  Campaign results must be
// byte-identical across reruns and across platforms for a fixed seed, so
// every distribution here is written out explicitly on top of
// std::mt19937_64 raw output (the engine's sequence is pinned by the
// standard; std::normal_distribution's algorithm is not).

namespace pdnpulse {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// FNV-1a over bytes; used for stream derivation and file manifests.
// Collision-resistant enough for bookkeeping, not cryptographic.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t hash_mix(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ splitmix64(b + 0x9e3779b97f4a7c15ull));
}

// Derives an independent substream id from a root seed, a textual stream
// label (e.g. a campaign arm name) and a trial counter.
inline std::uint64_t derive_stream(std::uint64_t root_seed, std::string_view label,
                                   std::uint64_t trial) {
  return hash_mix(hash_mix(root_seed, fnv1a64(label)), trial);
}

// Gaussian stream with an explicit Box-Muller transform so the draw
// sequence is reproducible bit-for-bit everywhere.
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : eng_(seed) {}

  // Uniform in (0, 1]; never returns 0 so log() below is safe.
  double next_uniform() {
    return static_cast<double>((eng_() >> 11) + 1) * 0x1.0p-53;
  }

  // Standard normal.  One draw consumes exactly two engine outputs; the
  // sine partner of the Box-Muller pair is discarded to keep the mapping
  // from engine state to samples trivial.
  double next_normal() {
    const double u1 = next_uniform();
    const double u2 = next_uniform();
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  std::uint64_t next_raw() { return eng_(); }

  // Uniform integer in [0, n); rejection sampling keeps it unbiased.
  std::uint64_t next_index(std::uint64_t n) {
    if (n == 0) return 0;
    const std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % n;
    std::uint64_t x;
    do {
      x = eng_();
    } while (x >= limit);
    return x % n;
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace pdnpulse
