#pragma once

// Reproducible, splittable random streams: xoshiro256++ seeded through
// SplitMix64 from a (seed, stream_id) pair. Distinct pairs give
// statistically independent sequences; equal pairs are bit-reproducible.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace markovsde {

inline std::uint64_t splitmix64_next(std::uint64_t& s) {
  s += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = s;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

class WienerStream {
 public:
  explicit WienerStream(std::uint64_t seed, std::uint64_t stream_id = 0)
      : seed_(seed), stream_id_(stream_id) {
    std::uint64_t s = seed;
    const std::uint64_t h = splitmix64_next(s);
    s = h ^ (0xD1B54A32D192ED03ull * stream_id + 0x8CB92BA72F3D8DD7ull);
    bool all_zero = true;
    for (auto& w : state_) {
      w = splitmix64_next(s);
      all_zero = all_zero && w == 0;
    }
    if (all_zero) state_[0] = 1;
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform on (0, 1]; never returns 0, so log() below is safe.
  double uniform() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

  // Standard normal via Box-Muller, one spare cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    const double theta = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // m independent Wiener increments over a step of length dt.
  void sample_dw_into(double dt, int m, double* out) {
    if (dt <= 0.0) throw std::invalid_argument("sample_dw: dt must be > 0");
    const double sd = std::sqrt(dt);
    for (int k = 0; k < m; ++k) out[k] = sd * normal();
  }

  std::vector<double> sample_dw(double dt, int m) {
    std::vector<double> out(static_cast<std::size_t>(m));
    sample_dw_into(dt, m, out.data());
    return out;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::uint64_t seed_ = 0;
  std::uint64_t stream_id_ = 0;
  std::array<std::uint64_t, 4> state_{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace markovsde
