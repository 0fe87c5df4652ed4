#include "coopnr/qam.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "coopnr/tensor.hpp"

namespace coopnr {
namespace {

std::uint32_t gray_encode(std::uint32_t i) { return i ^ (i >> 1); }

}  // namespace

Constellation Constellation::square_qam(unsigned bits_per_symbol) {
  if (bits_per_symbol < 2 || bits_per_symbol % 2 != 0 || bits_per_symbol > 16) {
    throw std::invalid_argument("square QAM needs an even number of bits per symbol in [2, 16], got " +
                                std::to_string(bits_per_symbol));
  }
  Constellation c;
  c.m_ = bits_per_symbol;
  c.axis_bits_ = bits_per_symbol / 2;
  const std::size_t levels = std::size_t{1} << c.axis_bits_;
  const double order = static_cast<double>(levels * levels);
  const double scale = 1.0 / std::sqrt(2.0 * (order - 1.0) / 3.0);

  c.axis_levels_.resize(levels);
  c.axis_level_label_.resize(levels);
  std::vector<double> level_of_label(levels);
  for (std::size_t i = 0; i < levels; ++i) {
    const double amp = (2.0 * static_cast<double>(i) - static_cast<double>(levels - 1)) * scale;
    c.axis_levels_[i] = amp;
    c.axis_level_label_[i] = gray_encode(static_cast<std::uint32_t>(i));
    level_of_label[c.axis_level_label_[i]] = amp;
  }
  c.points_.resize(levels * levels);
  for (std::size_t label = 0; label < c.points_.size(); ++label) {
    const std::size_t li = label >> c.axis_bits_;
    const std::size_t lq = label & (levels - 1);
    c.points_[label] = cd(level_of_label[li], level_of_label[lq]);
  }
  return c;
}

std::vector<std::uint8_t> Constellation::label_bits(std::size_t label) const {
  std::vector<std::uint8_t> bits(m_);
  for (unsigned b = 0; b < m_; ++b) bits[b] = static_cast<std::uint8_t>((label >> (m_ - 1 - b)) & 1U);
  return bits;
}

std::vector<cd> Constellation::map(std::span<const std::uint8_t> bits) const {
  if (bits.size() % m_ != 0) {
    throw DimensionError("qam_map: " + std::to_string(bits.size()) + " bits is not a multiple of " +
                         std::to_string(m_));
  }
  std::vector<cd> out(bits.size() / m_);
  for (std::size_t s = 0; s < out.size(); ++s) {
    std::size_t label = 0;
    for (unsigned b = 0; b < m_; ++b) label = (label << 1) | (bits[s * m_ + b] & 1U);
    out[s] = points_[label];
  }
  return out;
}

void Constellation::demap(cd y, cd h, double sigma2, std::span<double> out) const {
  if (!(sigma2 > 0)) throw std::invalid_argument("demap: noise variance must be positive");
  if (out.size() < m_) throw DimensionError("demap: output span shorter than bits per symbol");
  const double h2 = std::norm(h);
  if (h2 == 0.0) {
    std::fill(out.begin(), out.begin() + m_, 0.0);
    return;
  }
  const cd z = y / h;
  const double gain = h2 / sigma2;
  const double inf = std::numeric_limits<double>::infinity();
  const std::size_t levels = axis_levels_.size();
  for (unsigned axis = 0; axis < 2; ++axis) {
    const double coord = axis == 0 ? z.real() : z.imag();
    for (unsigned b = 0; b < axis_bits_; ++b) {
      const std::uint32_t mask = 1U << (axis_bits_ - 1 - b);
      double d0 = inf, d1 = inf;
      for (std::size_t i = 0; i < levels; ++i) {
        const double e = coord - axis_levels_[i];
        const double d = e * e;
        if (axis_level_label_[i] & mask) {
          d1 = std::min(d1, d);
        } else {
          d0 = std::min(d0, d);
        }
      }
      out[axis * axis_bits_ + b] = gain * (d0 - d1);
    }
  }
}

void Constellation::demap_exhaustive(cd y, cd h, double sigma2, std::span<double> out) const {
  if (!(sigma2 > 0)) throw std::invalid_argument("demap: noise variance must be positive");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> d0(m_, inf), d1(m_, inf);
  for (std::size_t label = 0; label < points_.size(); ++label) {
    const double d = std::norm(y - h * points_[label]) / sigma2;
    for (unsigned b = 0; b < m_; ++b) {
      if ((label >> (m_ - 1 - b)) & 1U) {
        d1[b] = std::min(d1[b], d);
      } else {
        d0[b] = std::min(d0[b], d);
      }
    }
  }
  for (unsigned b = 0; b < m_; ++b) out[b] = d0[b] - d1[b];
}

std::vector<std::uint8_t> Constellation::hard_decision(cd z) const {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t label = 0; label < points_.size(); ++label) {
    const double d = std::norm(z - points_[label]);
    if (d < best_d) {
      best_d = d;
      best = label;
    }
  }
  return label_bits(best);
}

void Constellation::write_csv(std::ostream& os) const {
  os << "label,bits,real,imag\n";
  os.precision(17);
  for (std::size_t label = 0; label < points_.size(); ++label) {
    os << label << ',';
    for (auto b : label_bits(label)) os << static_cast<int>(b);
    os << ',' << points_[label].real() << ',' << points_[label].imag() << '\n';
  }
}

}  // namespace coopnr
