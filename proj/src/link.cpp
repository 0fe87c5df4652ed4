#include "coopnr/link.hpp"

#include <stdexcept>

#include "coopnr/tensor.hpp"

namespace coopnr {

LinkSetup::LinkSetup(PilotMask mask, Constellation qam, std::optional<LdpcCode> code, DecoderConfig decoder)
    : mask_(std::move(mask)), qam_(std::move(qam)), code_(std::move(code)), decoder_(decoder) {
  layout_ = code_ ? frame_layout(mask_, qam_, *code_) : uncoded_layout(mask_, qam_);
}

std::vector<std::uint8_t> LinkSetup::encode_frame(std::span<const std::uint8_t> info,
                                                  std::span<const std::uint8_t> filler) const {
  if (info.size() != layout_.info_bits()) {
    throw DimensionError("payload of " + std::to_string(info.size()) + " bits does not match the frame's " +
                         std::to_string(layout_.info_bits()) + " info bits");
  }
  if (filler.size() != layout_.filler_bits) {
    throw DimensionError("expected " + std::to_string(layout_.filler_bits) + " filler bits");
  }
  std::vector<std::uint8_t> coded;
  coded.reserve(layout_.coded_capacity);
  if (!code_) {
    coded.assign(info.begin(), info.end());
    return coded;
  }
  const std::size_t k = layout_.info_bits_per_codeword;
  for (std::size_t c = 0; c < layout_.codewords; ++c) {
    const auto word = code_->encode(info.subspan(c * k, k));
    coded.insert(coded.end(), word.begin(), word.end());
  }
  coded.insert(coded.end(), filler.begin(), filler.end());
  return coded;
}

LinkSetup::FrameDecode LinkSetup::decode_frame(std::span<const double> llrs) const {
  if (llrs.size() != layout_.coded_capacity) {
    throw DimensionError("expected " + std::to_string(layout_.coded_capacity) + " LLRs, got " +
                         std::to_string(llrs.size()));
  }
  FrameDecode out;
  out.info_bits.reserve(layout_.info_bits());
  if (!code_) {
    for (double l : llrs) out.info_bits.push_back(l > 0 ? 1 : 0);
    return out;
  }
  const std::size_t n = layout_.codeword_length;
  for (std::size_t c = 0; c < layout_.codewords; ++c) {
    const auto res = decode_min_sum(*code_, llrs.subspan(c * n, n), decoder_);
    if (!res.converged) ++out.unconverged_codewords;
    out.info_bits.insert(out.info_bits.end(), res.info_bits.begin(), res.info_bits.end());
  }
  return out;
}

std::vector<std::uint8_t> random_bits(std::size_t count, Rng& rng) {
  std::vector<std::uint8_t> bits(count);
  for (auto& b : bits) b = rng.bit();
  return bits;
}

MultiApObservation make_observation(const LinkSetup& link, const TdlChannelSpec& channel,
                                    const ScenarioConfig& scenario, const LinkBudget& budget,
                                    std::span<const std::uint8_t> info_bits, Rng& rng) {
  const std::size_t n_ap = budget.link_ebno_db.size();
  if (n_ap == 0) throw std::invalid_argument("make_observation: link budget lists no access points");
  MultiApObservation obs;
  obs.info_bits.assign(info_bits.begin(), info_bits.end());
  const auto filler = random_bits(link.layout().filler_bits, rng);
  obs.coded_bits = link.encode_frame(info_bits, filler);
  const auto symbols = link.qam().map(obs.coded_bits);
  obs.transmitted = grid_assemble(symbols, link.mask());

  TdlChannelSpec draw = channel;
  draw.time_correlation = doppler_correlation(budget.ue_speed_mps, scenario.carrier_hz, scenario.symbol_duration_s());
  obs.link_ebno_db = budget.link_ebno_db;
  obs.average_ebno_db = budget.average_ebno_db;
  for (std::size_t r = 0; r < n_ap; ++r) {
    const double sigma2 = link.noise_variance(budget.link_ebno_db[r]);
    ResourceGrid h = generate_channel(draw, link.subcarriers(), link.symbols(), rng);
    const std::uint64_t noise_seed = rng.next();
    Rng noise_rng(noise_seed);
    obs.received.push_back(apply_channel(obs.transmitted, h, sigma2, noise_rng));
    obs.channels.push_back(std::move(h));
    obs.noise_variance.push_back(sigma2);
    obs.noise_seeds.push_back(noise_seed);
  }
  return obs;
}

ResourceGrid regenerate_noise(const MultiApObservation& obs, std::size_t r) {
  const ResourceGrid& y = obs.received.at(r);
  ResourceGrid zeros(y.subcarriers(), y.symbols(), GridRole::transmitted);
  ResourceGrid ones(y.subcarriers(), y.symbols(), GridRole::channel, cd{1.0, 0.0});
  Rng rng(obs.noise_seeds.at(r));
  auto n = apply_channel(zeros, ones, obs.noise_variance.at(r), rng);
  n.set_role(GridRole::noise);
  return n;
}

}  // namespace coopnr
