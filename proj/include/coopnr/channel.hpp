#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "coopnr/grid.hpp"
#include "coopnr/rng.hpp"

namespace coopnr {

// Tapped-delay-line multipath surrogate with exponential power-delay profile
// and per-symbol AR(1) tap evolution.
struct TdlChannelSpec {
  std::size_t taps = 8;
  // Delay of the last tap as a fraction of the useful OFDM symbol duration.
  double max_delay = 0.1;
  // Power of the last tap relative to the first, in dB.
  double last_tap_db = -15.0;
  // AR(1) coefficient between consecutive OFDM symbols (1 = static).
  double time_correlation = 1.0;
  // H = 1 on every RE (AWGN reference channel); the other fields are ignored.
  bool unit_gain = false;

  std::vector<double> tap_powers() const;  // sums to 1
  std::vector<double> tap_delays() const;  // fractions of the useful symbol duration
};

// Jakes-style per-symbol correlation exp(-(2 pi f_d T)^2 / 2).
double doppler_correlation(double speed_mps, double carrier_hz, double symbol_duration_s);

// H[f,t] = sum_l g_l(t) exp(-j 2 pi f tau_l), E|H|^2 = 1.
ResourceGrid generate_channel(const TdlChannelSpec& spec, std::size_t subcarriers, std::size_t symbols, Rng& rng);

// Y = H o X + N with N ~ CN(0, sigma2) i.i.d.
ResourceGrid apply_channel(const ResourceGrid& x, const ResourceGrid& h, double sigma2, Rng& rng);

struct ScenarioConfig {
  double area_side_m = 25.0;
  std::size_t n_ap = 1;
  double carrier_hz = 2.4e9;
  double bandwidth_hz = 20e6;
  double subcarrier_spacing_hz = 15e3;
  double cyclic_prefix_ratio = 0.07;
  double pathloss_exponent = 3.0;
  double reference_pathloss_db = 40.0;
  double min_distance_m = 1.0;
  bool shadowing = false;
  double shadowing_std_db = 4.0;
  double speed_min_mps = 0.0;
  double speed_max_mps = 3.0;
  // Target of the mean (in dB) of the per-link Eb/N0 values.
  double target_ebno_db = 10.0;
  // When set, used verbatim as the per-link Eb/N0 (size must equal n_ap).
  std::optional<std::vector<double>> link_ebno_override_db;
  // Places every AP at the UE's distance-equivalent point (equal gains).
  bool colocated = false;

  double symbol_duration_s() const { return (1.0 + cyclic_prefix_ratio) / subcarrier_spacing_hz; }
  void validate() const;
};

struct LinkBudget {
  std::vector<double> link_ebno_db;
  double average_ebno_db = 0.0;
  double ue_speed_mps = 0.0;
  std::vector<double> distances_m;
};

LinkBudget sample_scenario(const ScenarioConfig& cfg, Rng& rng);

// sigma^2 for unit-energy symbols over a unit-energy channel.
double noise_variance_from_ebno(double ebno_db, unsigned bits_per_symbol, double code_rate);
double ebno_from_noise_variance(double sigma2, unsigned bits_per_symbol, double code_rate);

// Second-order statistics of the vectorized channel used by LMMSE.
struct ChannelCovariance {
  std::vector<std::size_t> pilot_indices;
  Eigen::MatrixXcd pilot_pilot;  // R_pp, Hermitian PSD
  Eigen::MatrixXcd all_pilot;    // R_{all,p}
  Eigen::VectorXd all_diag;      // diag(R_all,all)
};

// Sample covariance over `samples` channel draws; speeds drawn uniformly from
// [speed_min, speed_max] set the time correlation of each draw.
ChannelCovariance empirical_covariance(const TdlChannelSpec& spec, const ScenarioConfig& scenario,
                                       std::size_t subcarriers, std::size_t symbols,
                                       const std::vector<std::size_t>& pilot_indices, std::size_t samples,
                                       std::uint64_t seed);

// Symmetrizes and clips negative eigenvalues.
Eigen::MatrixXcd project_hermitian_psd(const Eigen::MatrixXcd& m);

std::string covariance_cache_key(const TdlChannelSpec& spec, const ScenarioConfig& scenario, std::size_t subcarriers,
                                 std::size_t symbols, const std::vector<std::size_t>& pilot_indices,
                                 std::size_t samples, std::uint64_t seed);
void save_covariance(const std::filesystem::path& path, const ChannelCovariance& cov);
ChannelCovariance load_covariance(const std::filesystem::path& path);
// Loads dir/<key>.cov when present, otherwise computes and stores it.
ChannelCovariance cached_covariance(const std::filesystem::path& dir, const TdlChannelSpec& spec,
                                    const ScenarioConfig& scenario, std::size_t subcarriers, std::size_t symbols,
                                    const std::vector<std::size_t>& pilot_indices, std::size_t samples,
                                    std::uint64_t seed);

}  // namespace coopnr
