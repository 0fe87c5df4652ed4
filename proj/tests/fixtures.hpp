#pragma once

// Small links, configurations and observations shared by the test binaries.

#include <optional>
#include <vector>

#include "coopnr/link.hpp"
#include "coopnr/model.hpp"

namespace coopnr::testing {

// 4x4 grid, one pilot column, uncoded 4-QAM.
inline LinkSetup tiny_link() {
  return LinkSetup(PilotMask::columns(4, 4, {1}), Constellation::square_qam(2), std::nullopt);
}

inline ModelConfig tiny_config() {
  ModelConfig c;
  c.d_model = 8;
  c.heads = 2;
  c.layers = 1;
  c.ffn_dim = 16;
  c.head_hidden = 16;
  c.bits_per_symbol = 2;
  c.max_aps = 3;
  c.sigma2_shift = 0.1;
  c.sigma2_scale = 0.2;
  return c;
}

inline MultiApObservation observe(const LinkSetup& link, std::size_t n_ap, double ebno_db, std::uint64_t seed) {
  TdlChannelSpec ch;
  ch.taps = 4;
  ScenarioConfig sc;
  sc.n_ap = n_ap;
  sc.target_ebno_db = ebno_db;
  Rng rng(seed);
  const auto budget = sample_scenario(sc, rng);
  const auto info = random_bits(link.layout().info_bits(), rng);
  return make_observation(link, ch, sc, budget, info, rng);
}

}  // namespace coopnr::testing
