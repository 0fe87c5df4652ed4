#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace coopnr {

// Binary LDPC code given by a sparse parity-check matrix.
//
// Encoding is systematic over the information positions found by Gaussian
// elimination of H (pivots are taken from the rightmost columns first, so a
// matrix whose right block is invertible keeps its information bits in the
// leading k positions).
class LdpcCode {
 public:
  // rows[r] lists the column indices of the ones in check r.
  LdpcCode(std::size_t n, std::vector<std::vector<std::size_t>> rows);

  // IEEE 802.11n rate-3/4 quasi-cyclic code. lifting = 27 gives the standard
  // n = 648 code; other lifting sizes reduce the shifts modulo the new size.
  static LdpcCode ieee80211n_r34(std::size_t lifting = 27);

  static LdpcCode from_alist(std::istream& is);
  static LdpcCode load_alist(const std::filesystem::path& path);
  void write_alist(std::ostream& os) const;

  std::size_t n() const noexcept { return n_; }
  std::size_t k() const noexcept { return info_positions_.size(); }
  std::size_t checks() const noexcept { return rows_.size(); }
  double rate() const noexcept { return static_cast<double>(k()) / static_cast<double>(n_); }
  const std::vector<std::vector<std::size_t>>& rows() const noexcept { return rows_; }
  const std::vector<std::size_t>& info_positions() const noexcept { return info_positions_; }

  std::vector<std::uint8_t> encode(std::span<const std::uint8_t> info) const;
  bool is_codeword(std::span<const std::uint8_t> word) const;
  std::vector<std::uint8_t> extract_info(std::span<const std::uint8_t> word) const;

 private:
  struct ParityEquation {
    std::size_t position;
    std::vector<std::size_t> info_terms;  // indices into the info vector
  };

  std::size_t n_;
  std::vector<std::vector<std::size_t>> rows_;
  std::vector<std::size_t> info_positions_;
  std::vector<ParityEquation> parity_;
};

struct DecoderConfig {
  double normalization = 0.8;
  unsigned max_iterations = 25;
  double llr_clamp = 20.0;
};

struct DecodeResult {
  std::vector<std::uint8_t> info_bits;
  std::vector<std::uint8_t> codeword;
  bool converged = false;
  unsigned iterations = 0;
};

// Normalized min-sum belief propagation. Input LLRs follow log p(1)/p(0).
// A variable whose posterior is exactly zero is undecided and blocks convergence.
DecodeResult decode_min_sum(const LdpcCode& code, std::span<const double> llrs,
                            const DecoderConfig& config = {});

}  // namespace coopnr
