#pragma once

#include <span>
#include <string>
#include <vector>

#include "coopnr/channel.hpp"
#include "coopnr/grid.hpp"
#include "coopnr/link.hpp"
#include "coopnr/qam.hpp"

namespace coopnr {

// Bit LLRs (log p(1)/p(0)) for the data resource elements of one grid, in
// fill order, bits_per_symbol values per element. Aligned with coded bits.
struct LlrGrid {
  std::size_t subcarriers = 0;
  std::size_t symbols = 0;
  std::size_t bits_per_symbol = 0;
  std::vector<double> values;

  std::size_t data_res() const noexcept { return bits_per_symbol ? values.size() / bits_per_symbol : 0; }
  bool congruent(const LlrGrid& o) const noexcept {
    return subcarriers == o.subcarriers && symbols == o.symbols && bits_per_symbol == o.bits_per_symbol &&
           values.size() == o.values.size();
  }
};

enum class EstimatorKind { ls, lmmse, perfect };
enum class EqualizerKind { zf, mmse };
enum class FusionMode { sum, snr };

EstimatorKind parse_estimator(const std::string& s);
EqualizerKind parse_equalizer(const std::string& s);
FusionMode parse_fusion(const std::string& s);
std::string to_string(EstimatorKind k);
std::string to_string(EqualizerKind k);
std::string to_string(FusionMode k);

struct ChannelEstimate {
  ResourceGrid h;
  std::vector<double> error_variance;  // per RE, >= 0
  EstimatorKind method = EstimatorKind::ls;
};

// Linear interpolation along time between the pilots of each subcarrier row,
// constant extrapolation outside them. `values` is read at pilot REs only.
ResourceGrid interpolate_grid(const ResourceGrid& values, const PilotMask& mask);

ChannelEstimate ls_estimate(const ResourceGrid& y, const PilotMask& mask, double sigma2);

// H_all = R_{all,p} (R_pp + sigma2 I)^-1 H_p^LS, with per-RE posterior variance.
// sigma2 is raised to 1e-9 of the mean pilot power when smaller.
ChannelEstimate lmmse_estimate(const ResourceGrid& y, const PilotMask& mask, const ChannelCovariance& cov,
                               double sigma2);

ChannelEstimate perfect_estimate(const ResourceGrid& h);

struct Equalized {
  std::vector<cd> symbols;         // per RE
  std::vector<double> gain;        // effective scaling of x in symbols (1 for ZF)
  std::vector<double> noise_variance;
};

inline constexpr double kChannelFloor = 1e-6;

// sigma2 is the thermal noise; the estimate's error variance is added per RE.
Equalized equalize(const ResourceGrid& y, const ChannelEstimate& est, double sigma2, EqualizerKind kind);

LlrGrid demap_equalized(const Equalized& eq, const PilotMask& mask, const Constellation& qam);

LlrGrid perfect_csi_llr(const ResourceGrid& y, const ResourceGrid& h, double sigma2, const PilotMask& mask,
                        const Constellation& qam);

struct FusionPolicy {
  FusionMode mode = FusionMode::sum;
};

// snrs[r] is the linear SNR of link r (used only in snr mode).
LlrGrid fuse_llrs(std::span<const LlrGrid> grids, const FusionPolicy& policy, std::span<const double> snrs);

struct ClassicalConfig {
  EstimatorKind estimator = EstimatorKind::ls;
  EqualizerKind equalizer = EqualizerKind::zf;
  FusionPolicy fusion{};
};

// Per-AP estimate -> equalize -> demap, then central fusion.
// cov is required for LMMSE and ignored otherwise.
LlrGrid classical_receive(const MultiApObservation& obs, const LinkSetup& link, const ClassicalConfig& cfg,
                          const ChannelCovariance* cov);

std::vector<std::uint8_t> hard_decisions(const LlrGrid& llrs);

}  // namespace coopnr
