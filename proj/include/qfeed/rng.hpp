#pragma once

#include <cstdint>

namespace qfeed {

// Counter-based randomness: every draw is a pure hash of its address
// (seed, replication, sensor, step, purpose). Any single variate in a
// simulation is reproducible regardless of execution order or thread count.

enum class Draw : std::uint64_t {
  observation = 1,
  channel = 2,
  bootstrap = 3,
  synthetic = 4,
};

namespace detail {

inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t absorb(std::uint64_t h, std::uint64_t v) { return mix64(h ^ v); }

}  // namespace detail

struct StreamKey {
  std::uint64_t seed = 0;
  std::uint64_t rep = 0;
  std::uint64_t sensor = 0;
  std::uint64_t step = 0;
  Draw purpose = Draw::observation;
};

inline std::uint64_t stream_bits(const StreamKey& k) {
  using detail::absorb;
  std::uint64_t h = detail::mix64(k.seed);
  h = absorb(h, k.rep);
  h = absorb(h, k.sensor);
  h = absorb(h, k.step);
  h = absorb(h, static_cast<std::uint64_t>(k.purpose));
  return h;
}

// uniform draw in the open interval (0,1); safe for inverse-CDF sampling
inline double stream_uniform(const StreamKey& k) {
  const std::uint64_t bits = stream_bits(k) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

inline bool stream_bernoulli(const StreamKey& k, double p) { return stream_uniform(k) < p; }

}  // namespace qfeed
