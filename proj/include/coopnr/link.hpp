#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "coopnr/channel.hpp"
#include "coopnr/grid.hpp"
#include "coopnr/ldpc.hpp"
#include "coopnr/qam.hpp"

namespace coopnr {

// Everything the transmitter and receivers agree on: grid, pilots, modulation,
// channel code and the packing of codewords into the grid.
class LinkSetup {
 public:
  // code == nullopt selects uncoded transmission (all data bits are payload).
  LinkSetup(PilotMask mask, Constellation qam, std::optional<LdpcCode> code, DecoderConfig decoder = {});

  const PilotMask& mask() const noexcept { return mask_; }
  const Constellation& qam() const noexcept { return qam_; }
  const std::optional<LdpcCode>& code() const noexcept { return code_; }
  const DecoderConfig& decoder() const noexcept { return decoder_; }
  const FrameLayout& layout() const noexcept { return layout_; }
  bool coded() const noexcept { return code_.has_value(); }
  double code_rate() const noexcept { return code_ ? code_->rate() : 1.0; }
  unsigned bits_per_symbol() const noexcept { return qam_.bits_per_symbol(); }
  std::size_t subcarriers() const noexcept { return mask_.subcarriers(); }
  std::size_t symbols() const noexcept { return mask_.symbols(); }

  // Info bits + filler bits -> coded bits filling the grid capacity.
  std::vector<std::uint8_t> encode_frame(std::span<const std::uint8_t> info, std::span<const std::uint8_t> filler) const;

  struct FrameDecode {
    std::vector<std::uint8_t> info_bits;
    std::size_t unconverged_codewords = 0;
  };
  // LLRs over the full coded capacity -> info bit estimates (filler ignored).
  FrameDecode decode_frame(std::span<const double> llrs) const;

  double noise_variance(double ebno_db) const {
    return noise_variance_from_ebno(ebno_db, bits_per_symbol(), code_rate());
  }

 private:
  PilotMask mask_;
  Constellation qam_;
  std::optional<LdpcCode> code_;
  DecoderConfig decoder_;
  FrameLayout layout_;
};

struct MultiApObservation {
  std::vector<ResourceGrid> received;
  std::vector<double> noise_variance;
  std::vector<ResourceGrid> channels;
  ResourceGrid transmitted;
  std::vector<std::uint8_t> coded_bits;  // full capacity, filler included
  std::vector<std::uint8_t> info_bits;
  std::vector<std::uint64_t> noise_seeds;  // one per link; regenerates N^(r)
  std::vector<double> link_ebno_db;
  double average_ebno_db = 0.0;

  std::size_t n_ap() const noexcept { return received.size(); }
};

// Runs encode -> map -> assemble and, per access point, channel + noise.
// Filler bits, channels and noise all come from `rng`.
MultiApObservation make_observation(const LinkSetup& link, const TdlChannelSpec& channel,
                                    const ScenarioConfig& scenario, const LinkBudget& budget,
                                    std::span<const std::uint8_t> info_bits, Rng& rng);

// Regenerates the noise grid of link r from its stored seed.
ResourceGrid regenerate_noise(const MultiApObservation& obs, std::size_t r);

// Draws random payload bits of the layout's info size.
std::vector<std::uint8_t> random_bits(std::size_t count, Rng& rng);

}  // namespace coopnr
