#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "coopnr/channel.hpp"
#include "coopnr/classical.hpp"
#include "coopnr/link.hpp"
#include "coopnr/model.hpp"
#include "coopnr/trainer.hpp"

namespace coopnr {

inline constexpr const char* kEbnoConvention =
    "Eb/N0 = Es/N0 - 10log10(m * code_rate); pilot overhead excluded; x-axis = configured mean of per-link dB values";
inline constexpr const char* kFloorConvention = "zero-error BER floored at 1/(2*bits) before log-domain smoothing";

// Grid, modulation, code, channel, model and run-size defaults.
struct Profile {
  std::string name;
  std::size_t subcarriers = 48;
  std::size_t symbols = 36;
  std::vector<std::size_t> pilots_two{2, 32};
  std::vector<std::size_t> pilots_one{2};
  unsigned bits_per_symbol = 6;
  std::size_t lifting = 27;
  TdlChannelSpec channel{};
  ScenarioConfig scenario{};
  ModelConfig model{};

  std::size_t train_steps = 2000;
  std::size_t train_batch = 16;
  double train_ebno_min_db = 0.0;
  double train_ebno_max_db = 24.0;
  std::size_t train_n_ap_min = 1;
  std::size_t train_n_ap_max = 3;
  double train_learning_rate = 1e-3;
  std::string train_lr_schedule = "constant";

  std::vector<double> ebno_db;
  std::size_t iterations = 200;
  std::size_t frames_per_iteration = 4;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  double bandwidth_db = 1.0;
  std::size_t covariance_samples = 1000;

  const std::vector<std::size_t>& pilot_columns(std::size_t count) const;
};

// "desk" (paper grid, desk-scale Monte Carlo), "paper" (full protocol) or
// "micro" (12x12 grid, 4-QAM, small model).
Profile profile_by_name(const std::string& name);

LinkSetup make_link(const Profile& profile, std::size_t pilot_count, bool coded = true);

struct SweepConfig {
  std::string profile = "desk";
  std::vector<std::string> receivers{"ls", "lmmse", "perfect"};
  std::string equalizer = "zf";
  std::string fusion = "sum";
  std::vector<std::size_t> n_ap{1, 2, 3};
  std::size_t pilot_columns = 2;
  std::vector<double> ebno_db;
  std::size_t iterations = 200;
  std::size_t frames_per_iteration = 4;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  double bandwidth_db = 1.0;
  bool coded = true;
  std::string channel = "tdl";  // "tdl" or "awgn"
  bool noiseless = false;
  std::string checkpoint;
  std::string anchor = "first";  // "first" or "snr"
  double sigma2_mismatch = 1.0;
  std::string covariance_cache;  // directory; empty disables caching

  void validate() const;
  std::string to_json() const;
  // Keys absent from `json` keep the values of `base`.
  static SweepConfig from_json(const std::string& json, const SweepConfig& base);
  std::string hash() const;
};

SweepConfig sweep_defaults(const Profile& profile);

struct BerSample {
  double ebno_db = 0.0;           // configured average Eb/N0
  double realized_ebno_db = 0.0;  // mean realized average Eb/N0
  double ber = 0.0;               // mean of per-seed BERs
  double std_error = 0.0;         // over (seed, iteration) BER samples
  std::uint64_t bit_errors = 0;
  std::uint64_t bits = 0;
  std::vector<double> per_seed_ber;
  bool operator==(const BerSample&) const = default;
};

struct BerCurve {
  std::string receiver;
  std::string profile;
  std::size_t n_ap = 1;
  std::size_t pilot_columns = 2;
  bool coded = true;
  std::string equalizer;
  std::string fusion;
  std::string config_hash;
  std::vector<std::uint64_t> seeds;
  double bandwidth_db = 1.0;
  std::vector<BerSample> samples;
  std::vector<double> smoothed;
  bool operator==(const BerCurve&) const = default;
};

using ProgressFn = std::function<void(const std::string&)>;

std::vector<BerCurve> run_monte_carlo_ber(const SweepConfig& cfg, const ProgressFn& progress = {});

// Nadaraya-Watson smoothing of log10(BER) with a Gaussian kernel, evaluated at
// `at`. Zero BERs are floored at 1/(2 bits).
std::vector<double> kernel_smooth(std::span<const double> ebno_db, std::span<const double> ber,
                                  std::span<const std::uint64_t> bits, double bandwidth_db,
                                  std::span<const double> at);
std::vector<double> kernel_smooth(std::span<const double> ebno_db, std::span<const double> ber,
                                  std::span<const std::uint64_t> bits, double bandwidth_db);

void write_curve_csv(std::ostream& os, const BerCurve& curve);
BerCurve parse_curve_csv(std::istream& is);
std::string curve_file_name(const BerCurve& curve);

// Writes one CSV per curve plus manifest.json; returns the written paths.
std::vector<std::filesystem::path> emit_csv(const std::vector<BerCurve>& curves, const std::filesystem::path& dir,
                                            const std::string& manifest_json);

struct TrainJobConfig {
  std::string profile = "micro";
  std::size_t pilot_columns = 2;
  std::size_t steps = 2000;
  std::uint64_t seed = 1;
  std::size_t batch = 16;
  double ebno_min_db = 0.0;
  double ebno_max_db = 10.0;
  std::size_t n_ap_min = 1;
  std::size_t n_ap_max = 2;
  std::size_t validate_every = 100;
  std::size_t checkpoint_every = 0;  // 0: only at the end
  double ap_dropout = 0.0;
  std::string anchor = "first";
  double learning_rate = 1e-3;
  std::string lr_schedule = "constant";  // "constant" or "cosine" (decays to 0.1x over `steps`)
  std::string resume;

  void validate() const;
  std::string to_json() const;
  static TrainJobConfig from_json(const std::string& json, const TrainJobConfig& base);
  std::string hash() const;
};

TrainJobConfig train_defaults(const Profile& profile);
TrainingSetup training_setup(const TrainJobConfig& cfg, const Profile& profile);

struct TrainJobResult {
  std::filesystem::path checkpoint;
  std::filesystem::path metrics;
  std::filesystem::path manifest;
  std::uint64_t steps = 0;
  double validation_rate = 0.0;
};

// Trains and writes model.ckpt, metrics.csv and manifest.json into out_dir.
// On divergence the last good parameters are saved before rethrowing.
TrainJobResult run_training_job(const TrainJobConfig& cfg, const std::filesystem::path& out_dir,
                                const ProgressFn& progress = {});

struct FlopEntry {
  std::string block;
  double per_ap_macs = 0.0;  // 0 for blocks that run once
  double total_macs = 0.0;
};

struct FlopReport {
  std::vector<FlopEntry> entries;
  double total_macs = 0.0;
  std::size_t n_ap = 1;
  std::size_t tokens = 0;
  double gflops() const noexcept { return 2.0 * total_macs * 1e-9; }
};

inline constexpr double kPaperTransformerGflops = 0.243;

// Multiply-accumulates of one inference pass; element-wise ops, softmax,
// layer norms and positional encodings are not counted.
FlopReport estimate_flops(const ModelConfig& cfg, std::size_t subcarriers, std::size_t symbols, std::size_t n_ap);
std::string format_flop_report(const FlopReport& report);

}  // namespace coopnr
