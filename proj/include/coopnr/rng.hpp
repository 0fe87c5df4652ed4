#pragma once

#include <complex>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace coopnr {

// Stream tags for seed derivation. Every random draw in the simulator comes
// from a stream keyed by (master seed, tag, indices...), so independent parts
// of a run never share or depend on the consumption order of another stream.
enum class Stream : std::uint64_t {
  scenario = 1,
  channel = 2,
  noise = 3,
  payload = 4,
  training = 5,
  init = 6,
  covariance = 7,
  validation = 8,
  dropout = 9,
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;
std::uint64_t derive_seed(std::uint64_t master, Stream tag, std::initializer_list<std::uint64_t> path = {}) noexcept;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t master, Stream tag, std::initializer_list<std::uint64_t> path = {})
      : engine_(derive_seed(master, tag, path)) {}

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  // Circularly-symmetric complex Gaussian with E|z|^2 = variance.
  std::complex<double> complex_normal(double variance);
  std::uint8_t bit() { return static_cast<std::uint8_t>(engine_() >> 63); }
  std::uint64_t next() { return engine_(); }

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace coopnr
