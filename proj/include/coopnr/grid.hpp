#pragma once

#include <complex>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "coopnr/ldpc.hpp"
#include "coopnr/qam.hpp"

namespace coopnr {

enum class GridRole { transmitted, channel, received, estimate, noise };

// Complex N_c x N_s matrix, stored subcarrier-major: index = f * N_s + t.
class ResourceGrid {
 public:
  ResourceGrid() = default;
  ResourceGrid(std::size_t subcarriers, std::size_t symbols, GridRole role, cd fill = cd{0.0, 0.0})
      : nc_(subcarriers), ns_(symbols), role_(role), data_(subcarriers * symbols, fill) {}

  std::size_t subcarriers() const noexcept { return nc_; }
  std::size_t symbols() const noexcept { return ns_; }
  std::size_t size() const noexcept { return data_.size(); }
  GridRole role() const noexcept { return role_; }
  void set_role(GridRole r) noexcept { role_ = r; }

  cd& at(std::size_t f, std::size_t t) { return data_[f * ns_ + t]; }
  const cd& at(std::size_t f, std::size_t t) const { return data_[f * ns_ + t]; }
  cd& operator[](std::size_t i) { return data_[i]; }
  const cd& operator[](std::size_t i) const { return data_[i]; }
  std::span<cd> data() noexcept { return data_; }
  std::span<const cd> data() const noexcept { return data_; }

  bool same_shape(const ResourceGrid& o) const noexcept { return nc_ == o.nc_ && ns_ == o.ns_; }
  bool operator==(const ResourceGrid&) const = default;

 private:
  std::size_t nc_ = 0;
  std::size_t ns_ = 0;
  GridRole role_ = GridRole::transmitted;
  std::vector<cd> data_;
};

inline const cd kDefaultPilot{0.70710678118654752, 0.70710678118654752};

// Pilot layout shared by every access point. Pilot symbols are unit-modulus.
class PilotMask {
 public:
  PilotMask(std::size_t subcarriers, std::size_t symbols, std::vector<bool> is_pilot, std::vector<cd> pilot_values);

  // Full pilot columns at the given OFDM symbol indices, every pilot RE
  // carrying the same unit-modulus symbol.
  static PilotMask columns(std::size_t subcarriers, std::size_t symbols, std::vector<std::size_t> cols,
                           cd pilot_value = kDefaultPilot);

  std::size_t subcarriers() const noexcept { return nc_; }
  std::size_t symbols() const noexcept { return ns_; }
  bool is_pilot(std::size_t f, std::size_t t) const { return is_pilot_[f * ns_ + t]; }
  bool is_pilot_index(std::size_t i) const { return is_pilot_[i]; }
  cd pilot(std::size_t f, std::size_t t) const { return values_[f * ns_ + t]; }

  // Flat grid indices in fill order: OFDM symbols left to right, subcarriers
  // ascending within each symbol.
  const std::vector<std::size_t>& data_indices() const noexcept { return data_indices_; }
  const std::vector<std::size_t>& pilot_indices() const noexcept { return pilot_indices_; }
  std::size_t data_count() const noexcept { return data_indices_.size(); }
  std::size_t pilot_count() const noexcept { return pilot_indices_.size(); }

  // Symbols in which every subcarrier is a pilot (sorted).
  std::vector<std::size_t> pilot_columns() const;
  // True when each subcarrier row carries at least one pilot.
  bool covers_every_subcarrier() const;

  void write_csv(std::ostream& os) const;

 private:
  std::size_t nc_, ns_;
  std::vector<bool> is_pilot_;
  std::vector<cd> values_;
  std::vector<std::size_t> data_indices_;
  std::vector<std::size_t> pilot_indices_;
};

ResourceGrid grid_assemble(std::span<const cd> data_symbols, const PilotMask& mask);
std::vector<cd> grid_extract_data(const ResourceGrid& grid, const PilotMask& mask);

// How coded bits are packed into one resource grid: as many whole codewords
// as fit, the remainder padded with known filler bits.
struct FrameLayout {
  std::size_t data_res = 0;
  std::size_t bits_per_symbol = 0;
  std::size_t coded_capacity = 0;
  std::size_t codeword_length = 0;
  std::size_t codewords = 0;
  std::size_t info_bits_per_codeword = 0;
  std::size_t filler_bits = 0;

  std::size_t info_bits() const noexcept { return codewords * info_bits_per_codeword; }
  std::size_t coded_bits() const noexcept { return codewords * codeword_length; }
};

FrameLayout frame_layout(const PilotMask& mask, const Constellation& qam, const LdpcCode& code);

// Uncoded layout: every data bit is an information bit.
FrameLayout uncoded_layout(const PilotMask& mask, const Constellation& qam);

}  // namespace coopnr
