#include "coopnr/ldpc.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>

#include "coopnr/tensor.hpp"

namespace coopnr {
namespace {

// IEEE 802.11n, rate 3/4, Z = 27 base matrix (-1 = all-zero block).
constexpr int kBase80211nR34[6][24] = {
    {16, 17, 22, 24, 9, 3, 14, -1, 4, 2, 7, -1, 26, -1, 2, -1, 21, -1, 1, 0, -1, -1, -1, -1},
    {25, 12, 12, 3, 3, 26, 6, 21, -1, 15, 22, -1, 15, -1, 4, -1, -1, 16, -1, 0, 0, -1, -1, -1},
    {25, 18, 26, 16, 22, 23, 9, -1, 0, -1, 4, -1, 4, -1, 8, 23, 11, -1, -1, -1, 0, 0, -1, -1},
    {9, 7, 0, 1, 17, -1, -1, 7, 3, -1, 3, 23, -1, 16, -1, -1, 21, -1, 0, -1, -1, 0, 0, -1},
    {24, 5, 26, 7, 1, -1, -1, 15, 24, 15, -1, 8, -1, 13, -1, 13, -1, 11, -1, -1, -1, -1, 0, 0},
    {2, 2, 19, 14, 24, 1, 15, 19, -1, 21, -1, 2, -1, 24, -1, 3, -1, 2, 1, -1, -1, -1, -1, 0},
};

using Word = std::uint64_t;

struct BitMatrix {
  std::size_t rows, cols, words;
  std::vector<Word> bits;
  BitMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), words((c + 63) / 64), bits(r * words, 0) {}
  bool get(std::size_t r, std::size_t c) const { return (bits[r * words + c / 64] >> (c % 64)) & 1U; }
  void set(std::size_t r, std::size_t c) { bits[r * words + c / 64] ^= Word{1} << (c % 64); }
  Word* row(std::size_t r) { return bits.data() + r * words; }
};

}  // namespace

LdpcCode::LdpcCode(std::size_t n, std::vector<std::vector<std::size_t>> rows) : n_(n), rows_(std::move(rows)) {
  if (n_ == 0 || rows_.empty()) throw std::invalid_argument("LDPC code needs n > 0 and at least one check");
  BitMatrix h(rows_.size(), n_);
  for (std::size_t r = 0; r < rows_.size(); ++r) {
    auto& cols = rows_[r];
    std::sort(cols.begin(), cols.end());
    if (std::adjacent_find(cols.begin(), cols.end()) != cols.end()) {
      throw std::invalid_argument("LDPC check " + std::to_string(r) + " lists a column twice");
    }
    for (auto c : cols) {
      if (c >= n_) throw std::invalid_argument("LDPC column index out of range");
      h.set(r, c);
    }
  }

  // Reduced row echelon form, pivot columns chosen right to left.
  std::vector<std::size_t> pivot_col;
  std::size_t rank = 0;
  for (std::size_t c = n_; c-- > 0 && rank < h.rows;) {
    std::size_t sel = rank;
    while (sel < h.rows && !h.get(sel, c)) ++sel;
    if (sel == h.rows) continue;
    if (sel != rank) std::swap_ranges(h.row(sel), h.row(sel) + h.words, h.row(rank));
    for (std::size_t r = 0; r < h.rows; ++r) {
      if (r != rank && h.get(r, c)) {
        Word* dst = h.row(r);
        const Word* src = h.row(rank);
        for (std::size_t w = 0; w < h.words; ++w) dst[w] ^= src[w];
      }
    }
    pivot_col.push_back(c);
    ++rank;
  }

  std::vector<bool> is_pivot(n_, false);
  for (auto c : pivot_col) is_pivot[c] = true;
  std::vector<std::size_t> info_index(n_, 0);
  for (std::size_t c = 0; c < n_; ++c) {
    if (!is_pivot[c]) {
      info_index[c] = info_positions_.size();
      info_positions_.push_back(c);
    }
  }
  parity_.reserve(rank);
  for (std::size_t r = 0; r < rank; ++r) {
    ParityEquation eq{pivot_col[r], {}};
    for (auto c : info_positions_) {
      if (h.get(r, c)) eq.info_terms.push_back(info_index[c]);
    }
    parity_.push_back(std::move(eq));
  }
}

LdpcCode LdpcCode::ieee80211n_r34(std::size_t lifting) {
  if (lifting == 0) throw std::invalid_argument("lifting size must be positive");
  const std::size_t z = lifting;
  std::vector<std::vector<std::size_t>> rows(6 * z);
  for (std::size_t br = 0; br < 6; ++br) {
    for (std::size_t bc = 0; bc < 24; ++bc) {
      const int shift = kBase80211nR34[br][bc];
      if (shift < 0) continue;
      const std::size_t s = static_cast<std::size_t>(shift) % z;
      for (std::size_t i = 0; i < z; ++i) rows[br * z + i].push_back(bc * z + (i + s) % z);
    }
  }
  return LdpcCode(24 * z, std::move(rows));
}

LdpcCode LdpcCode::from_alist(std::istream& is) {
  auto read = [&is]() {
    long long v;
    if (!(is >> v)) throw std::runtime_error("alist: unexpected end of input");
    if (v < 0) throw std::runtime_error("alist: negative entry");
    return static_cast<std::size_t>(v);
  };
  const std::size_t n = read();
  const std::size_t m = read();
  read();  // max column weight
  read();  // max row weight
  std::vector<std::size_t> col_w(n), row_w(m);
  for (auto& w : col_w) w = read();
  for (auto& w : row_w) w = read();
  auto read_nonzero = [&]() {
    std::size_t v;
    do v = read();
    while (v == 0);
    return v;
  };
  std::vector<std::vector<std::size_t>> rows_from_cols(m);
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t i = 0; i < col_w[c]; ++i) {
      const std::size_t r = read_nonzero();
      if (r > m) throw std::runtime_error("alist: row index out of range");
      rows_from_cols[r - 1].push_back(c);
    }
  }
  std::vector<std::vector<std::size_t>> rows(m);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t i = 0; i < row_w[r]; ++i) {
      const std::size_t c = read_nonzero();
      if (c > n) throw std::runtime_error("alist: column index out of range");
      rows[r].push_back(c - 1);
    }
    std::sort(rows[r].begin(), rows[r].end());
    if (rows[r] != rows_from_cols[r]) {
      throw std::runtime_error("alist: row and column lists disagree at row " + std::to_string(r + 1));
    }
  }
  return LdpcCode(n, std::move(rows));
}

LdpcCode LdpcCode::load_alist(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open alist file: " + path.string());
  return from_alist(is);
}

void LdpcCode::write_alist(std::ostream& os) const {
  std::vector<std::vector<std::size_t>> cols(n_);
  for (std::size_t r = 0; r < rows_.size(); ++r) {
    for (auto c : rows_[r]) cols[c].push_back(r);
  }
  std::size_t max_cw = 0, max_rw = 0;
  for (const auto& c : cols) max_cw = std::max(max_cw, c.size());
  for (const auto& r : rows_) max_rw = std::max(max_rw, r.size());
  os << n_ << ' ' << rows_.size() << '\n' << max_cw << ' ' << max_rw << '\n';
  for (std::size_t c = 0; c < n_; ++c) os << cols[c].size() << (c + 1 < n_ ? ' ' : '\n');
  for (std::size_t r = 0; r < rows_.size(); ++r) os << rows_[r].size() << (r + 1 < rows_.size() ? ' ' : '\n');
  auto emit = [&os](const std::vector<std::size_t>& idx, std::size_t width) {
    for (std::size_t i = 0; i < width; ++i) {
      if (i) os << ' ';
      os << (i < idx.size() ? idx[i] + 1 : 0);
    }
    os << '\n';
  };
  for (const auto& c : cols) emit(c, max_cw);
  for (const auto& r : rows_) emit(r, max_rw);
}

std::vector<std::uint8_t> LdpcCode::encode(std::span<const std::uint8_t> info) const {
  if (info.size() != k()) {
    throw DimensionError("ldpc_encode: expected " + std::to_string(k()) + " info bits, got " +
                         std::to_string(info.size()));
  }
  std::vector<std::uint8_t> word(n_, 0);
  for (std::size_t i = 0; i < info_positions_.size(); ++i) word[info_positions_[i]] = info[i] & 1U;
  for (const auto& eq : parity_) {
    std::uint8_t p = 0;
    for (auto t : eq.info_terms) p ^= info[t] & 1U;
    word[eq.position] = p;
  }
  return word;
}

bool LdpcCode::is_codeword(std::span<const std::uint8_t> word) const {
  if (word.size() != n_) return false;
  for (const auto& row : rows_) {
    std::uint8_t s = 0;
    for (auto c : row) s ^= word[c] & 1U;
    if (s) return false;
  }
  return true;
}

std::vector<std::uint8_t> LdpcCode::extract_info(std::span<const std::uint8_t> word) const {
  if (word.size() != n_) throw DimensionError("extract_info: codeword length mismatch");
  std::vector<std::uint8_t> info(k());
  for (std::size_t i = 0; i < info.size(); ++i) info[i] = word[info_positions_[i]];
  return info;
}

DecodeResult decode_min_sum(const LdpcCode& code, std::span<const double> llrs, const DecoderConfig& config) {
  const std::size_t n = code.n();
  if (llrs.size() != n) {
    throw DimensionError("ldpc_decode: expected " + std::to_string(n) + " LLRs, got " + std::to_string(llrs.size()));
  }
  const auto& rows = code.rows();
  std::vector<std::size_t> row_start(rows.size() + 1, 0);
  for (std::size_t r = 0; r < rows.size(); ++r) row_start[r + 1] = row_start[r] + rows[r].size();
  const std::size_t edges = row_start.back();
  std::vector<std::size_t> edge_var(edges);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy(rows[r].begin(), rows[r].end(), edge_var.begin() + static_cast<std::ptrdiff_t>(row_start[r]));
  }

  // Internally L0 = log p(0)/p(1), the classic min-sum orientation.
  std::vector<double> channel(n);
  for (std::size_t v = 0; v < n; ++v) {
    const double l = std::clamp(llrs[v], -config.llr_clamp, config.llr_clamp);
    if (!std::isfinite(l)) throw NumericError("ldpc_decode: non-finite LLR at position " + std::to_string(v));
    channel[v] = -l;
  }
  std::vector<double> c2v(edges, 0.0);
  std::vector<double> posterior = channel;
  std::vector<std::uint8_t> hard(n, 0);

  DecodeResult result;
  for (unsigned it = 1; it <= config.max_iterations; ++it) {
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const std::size_t b = row_start[r], e = row_start[r + 1];
      double min1 = std::numeric_limits<double>::infinity(), min2 = min1;
      std::size_t arg = b;
      bool neg = false;
      for (std::size_t i = b; i < e; ++i) {
        const double msg = posterior[edge_var[i]] - c2v[i];
        const double a = std::abs(msg);
        if (msg < 0) neg = !neg;
        if (a < min1) {
          min2 = min1;
          min1 = a;
          arg = i;
        } else if (a < min2) {
          min2 = a;
        }
      }
      for (std::size_t i = b; i < e; ++i) {
        const double msg = posterior[edge_var[i]] - c2v[i];
        const bool sign = neg != (msg < 0);
        double mag = config.normalization * (i == arg ? min2 : min1);
        if (!std::isfinite(mag)) mag = config.llr_clamp;  // degree-1 check
        const double out = sign ? -mag : mag;
        posterior[edge_var[i]] += out - c2v[i];
        c2v[i] = out;
      }
    }
    bool decided = true;
    for (std::size_t v = 0; v < n; ++v) {
      hard[v] = posterior[v] < 0 ? 1 : 0;
      if (posterior[v] == 0.0) decided = false;
    }
    result.iterations = it;
    if (decided && code.is_codeword(hard)) {
      result.converged = true;
      break;
    }
  }
  result.codeword = hard;
  result.info_bits = code.extract_info(hard);
  return result;
}

}  // namespace coopnr
