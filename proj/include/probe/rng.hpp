#pragma once

#include <cmath>
#include <cstdint>

#include "probe/tensor.hpp"

namespace probe {

namespace detail {
inline std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}
}  // namespace detail

// Counter-based generator (splitmix64 core). Identical seed gives an
// identical draw sequence on every platform; split() derives independent
// streams keyed by an explicit stream id.
struct Rng {
  std::uint64_t key = 0;
  std::uint64_t counter = 0;

  Rng() = default;
  explicit Rng(std::uint64_t seed) : key(seed) {}

  std::uint64_t next_u64() {
    counter += 1;
    return detail::mix64(key + counter * 0x9E3779B97F4A7C15ULL);
  }

  Rng split(std::uint64_t stream_id) const {
    return Rng(detail::mix64(key ^ detail::mix64(stream_id + 0x9E3779B97F4A7C15ULL)));
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1); never returns an exact endpoint.
  double uniform_open() {
    return (static_cast<double>(next_u64() >> 12) + 0.5) * 0x1.0p-52;
  }

  std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

  // Box-Muller from two fresh uniforms; no cached second draw, so the
  // stream position is a pure function of the call count.
  double normal() {
    double u1 = uniform_open();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  Tensor normal_tensor(const Shape& shape) {
    Tensor t(shape);
    for (auto& x : t.data) x = normal();
    return t;
  }
};

}  // namespace probe
