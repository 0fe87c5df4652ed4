#include "coopnr/grid.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "coopnr/tensor.hpp"

namespace coopnr {

PilotMask::PilotMask(std::size_t subcarriers, std::size_t symbols, std::vector<bool> is_pilot,
                     std::vector<cd> pilot_values)
    : nc_(subcarriers), ns_(symbols), is_pilot_(std::move(is_pilot)), values_(std::move(pilot_values)) {
  const std::size_t total = nc_ * ns_;
  if (total == 0) throw std::invalid_argument("pilot mask needs a non-empty grid");
  if (is_pilot_.size() != total || values_.size() != total) {
    throw DimensionError("pilot mask layout does not match a " + std::to_string(nc_) + "x" + std::to_string(ns_) +
                         " grid");
  }
  for (std::size_t t = 0; t < ns_; ++t) {
    for (std::size_t f = 0; f < nc_; ++f) {
      const std::size_t i = f * ns_ + t;
      if (is_pilot_[i]) {
        if (std::abs(std::abs(values_[i]) - 1.0) > 1e-12) {
          throw std::invalid_argument("pilot symbols must be unit-modulus");
        }
        pilot_indices_.push_back(i);
      } else {
        values_[i] = cd{0.0, 0.0};
        data_indices_.push_back(i);
      }
    }
  }
}

PilotMask PilotMask::columns(std::size_t subcarriers, std::size_t symbols, std::vector<std::size_t> cols,
                             cd pilot_value) {
  if (std::abs(std::abs(pilot_value) - 1.0) > 1e-12) throw std::invalid_argument("pilot symbols must be unit-modulus");
  std::vector<bool> is_pilot(subcarriers * symbols, false);
  std::vector<cd> values(subcarriers * symbols, cd{0.0, 0.0});
  for (auto t : cols) {
    if (t >= symbols) throw std::invalid_argument("pilot column " + std::to_string(t) + " outside the grid");
    for (std::size_t f = 0; f < subcarriers; ++f) {
      const std::size_t i = f * symbols + t;
      is_pilot[i] = true;
      values[i] = pilot_value;
    }
  }
  return PilotMask(subcarriers, symbols, std::move(is_pilot), std::move(values));
}

std::vector<std::size_t> PilotMask::pilot_columns() const {
  std::vector<std::size_t> cols;
  for (std::size_t t = 0; t < ns_; ++t) {
    bool full = true;
    for (std::size_t f = 0; f < nc_ && full; ++f) full = is_pilot(f, t);
    if (full) cols.push_back(t);
  }
  return cols;
}

bool PilotMask::covers_every_subcarrier() const {
  for (std::size_t f = 0; f < nc_; ++f) {
    bool any = false;
    for (std::size_t t = 0; t < ns_ && !any; ++t) any = is_pilot(f, t);
    if (!any) return false;
  }
  return true;
}

void PilotMask::write_csv(std::ostream& os) const {
  os << "subcarrier,symbol,pilot,real,imag\n";
  os.precision(17);
  for (std::size_t f = 0; f < nc_; ++f) {
    for (std::size_t t = 0; t < ns_; ++t) {
      const cd v = pilot(f, t);
      os << f << ',' << t << ',' << (is_pilot(f, t) ? 1 : 0) << ',' << v.real() << ',' << v.imag() << '\n';
    }
  }
}

ResourceGrid grid_assemble(std::span<const cd> data_symbols, const PilotMask& mask) {
  if (data_symbols.size() != mask.data_count()) {
    throw DimensionError("grid_assemble: " + std::to_string(data_symbols.size()) + " symbols for " +
                         std::to_string(mask.data_count()) + " data resource elements");
  }
  ResourceGrid grid(mask.subcarriers(), mask.symbols(), GridRole::transmitted);
  for (auto i : mask.pilot_indices()) grid[i] = mask.pilot(i / mask.symbols(), i % mask.symbols());
  const auto& idx = mask.data_indices();
  for (std::size_t j = 0; j < idx.size(); ++j) grid[idx[j]] = data_symbols[j];
  return grid;
}

std::vector<cd> grid_extract_data(const ResourceGrid& grid, const PilotMask& mask) {
  if (grid.subcarriers() != mask.subcarriers() || grid.symbols() != mask.symbols()) {
    throw DimensionError("grid_extract_data: grid and pilot mask dimensions differ");
  }
  std::vector<cd> out;
  out.reserve(mask.data_count());
  for (auto i : mask.data_indices()) out.push_back(grid[i]);
  return out;
}

FrameLayout frame_layout(const PilotMask& mask, const Constellation& qam, const LdpcCode& code) {
  FrameLayout l;
  l.data_res = mask.data_count();
  l.bits_per_symbol = qam.bits_per_symbol();
  l.coded_capacity = l.data_res * l.bits_per_symbol;
  l.codeword_length = code.n();
  l.info_bits_per_codeword = code.k();
  l.codewords = l.coded_capacity / code.n();
  if (l.codewords == 0) {
    throw std::invalid_argument("grid capacity of " + std::to_string(l.coded_capacity) +
                                " bits cannot hold one codeword of " + std::to_string(code.n()) + " bits");
  }
  l.filler_bits = l.coded_capacity - l.codewords * code.n();
  return l;
}

FrameLayout uncoded_layout(const PilotMask& mask, const Constellation& qam) {
  FrameLayout l;
  l.data_res = mask.data_count();
  l.bits_per_symbol = qam.bits_per_symbol();
  l.coded_capacity = l.data_res * l.bits_per_symbol;
  l.codeword_length = l.coded_capacity;
  l.info_bits_per_codeword = l.coded_capacity;
  l.codewords = 1;
  l.filler_bits = 0;
  return l;
}

}  // namespace coopnr
