#pragma once

// Shared helpers for the unit tests: the shipped species table, a scratch
// directory, and small seeded generators for property checks.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "hcf/atomic_data.hpp"

namespace hcf::test {

inline const AtomSpecies& rb87() {
  static const AtomSpecies s = load_species_file(std::filesystem::path(HCF_DATA_DIR) / "rb87_d2.json");
  return s;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const char* env = std::getenv("HCF_TEST_TMP");
  auto dir = std::filesystem::path(env ? env : "/tmp/hcf_test") / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Seeded case generator; every property test draws from its own seed.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double log_uniform(double lo, double hi) {
    return std::exp(uniform(std::log(lo), std::log(hi)));
  }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  double normal() { return std::normal_distribution<double>()(rng_); }
  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

inline double rel_diff(double a, double b) {
  const double s = std::max(std::abs(a), std::abs(b));
  return s == 0 ? 0.0 : std::abs(a - b) / s;
}

}  // namespace hcf::test
