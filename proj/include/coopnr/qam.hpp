#pragma once

#include <complex>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace coopnr {

using cd = std::complex<double>;

// Square Gray-labeled QAM with unit average energy.
//
// A label is m bits b_0..b_{m-1}. The first m/2 bits select the in-phase
// level, the last m/2 the quadrature level; on each axis the bits are a
// binary-reflected Gray code (first bit most significant), so neighbouring
// levels differ in exactly one bit.
class Constellation {
 public:
  static Constellation square_qam(unsigned bits_per_symbol);

  unsigned bits_per_symbol() const noexcept { return m_; }
  std::size_t size() const noexcept { return points_.size(); }
  // points()[label] where label packs b_0 as the most significant bit.
  std::span<const cd> points() const noexcept { return points_; }
  std::vector<std::uint8_t> label_bits(std::size_t label) const;

  std::vector<cd> map(std::span<const std::uint8_t> bits) const;

  // Max-log LLRs (log p(b=1)/p(b=0)) of y = h x + n, n ~ CN(0, sigma2), written to out[0..m).
  // Exploits I/Q separability: |y - h x|^2 = |h|^2 |y/h - x|^2.
  void demap(cd y, cd h, double sigma2, std::span<double> out) const;
  // Same quantity by exhaustive search over all points.
  void demap_exhaustive(cd y, cd h, double sigma2, std::span<double> out) const;

  // Bits of the nearest constellation point to z.
  std::vector<std::uint8_t> hard_decision(cd z) const;

  void write_csv(std::ostream& os) const;

 private:
  unsigned m_ = 0;
  unsigned axis_bits_ = 0;
  std::vector<cd> points_;
  std::vector<double> axis_levels_;               // ascending, already normalized
  std::vector<std::uint32_t> axis_level_label_;   // Gray label of each level
};

}  // namespace coopnr
