#pragma once

// Counter-based random streams. Each stream is keyed by (seed, stream index)
// and draws are a pure function of (key, counter), so a stream can be
// reconstructed anywhere without touching shared state.

#include <cmath>
#include <cstdint>
#include <limits>

#include "constants.hpp"

namespace hcf {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Stream domains keep unrelated uses of the same (seed, index) apart.
enum class StreamDomain : std::uint64_t {
  cloud_sampling = 1,
  trapped_sampling = 2,
  probe_counts = 3,
  bootstrap = 4,
};

class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng(std::uint64_t seed, std::uint64_t stream,
             StreamDomain domain = StreamDomain::cloud_sampling)
      : key_(splitmix64(splitmix64(seed ^ (static_cast<std::uint64_t>(domain) << 56)) ^
                        splitmix64(stream + 0x632be59bd9b4e019ULL))) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return splitmix64(key_ + 0x9e3779b97f4a7c15ULL * counter_++); }

  /// Uniform on (0, 1).
  double uniform() { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double phase = 2.0 * constants::pi * u2;
    spare_ = radius * std::sin(phase);
    has_spare_ = true;
    return radius * std::cos(phase);
  }

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace hcf
