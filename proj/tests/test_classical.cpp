#include <doctest.h>

#include <cmath>

#include "coopnr/classical.hpp"
#include "coopnr/link.hpp"
#include "coopnr/tensor.hpp"

using namespace coopnr;

namespace {

LlrGrid random_llrs(std::size_t nc, std::size_t ns, std::size_t m, std::size_t res, Rng& rng) {
  LlrGrid g{nc, ns, m, std::vector<double>(res * m)};
  for (auto& v : g.values) v = rng.uniform(-6.0, 6.0);
  return g;
}

}  // namespace

TEST_CASE("parsers accept the documented names and reject others") {
  CHECK(parse_estimator("lmmse") == EstimatorKind::lmmse);
  CHECK(parse_equalizer("mmse") == EqualizerKind::mmse);
  CHECK(parse_fusion("snr") == FusionMode::snr);
  CHECK(to_string(EstimatorKind::perfect) == "perfect");
  CHECK_THROWS(parse_estimator("mmse"));
  CHECK_THROWS(parse_equalizer("x"));
  CHECK_THROWS(parse_fusion("max"));
}

TEST_CASE("interpolation: linear between pilots, constant outside") {
  const auto mask = PilotMask::columns(2, 5, {1, 3});
  ResourceGrid v(2, 5, GridRole::estimate);
  v.at(0, 1) = {2.0, 0.0};
  v.at(0, 3) = {4.0, -2.0};
  v.at(1, 1) = {1.0, 1.0};
  v.at(1, 3) = {1.0, 1.0};
  const auto out = interpolate_grid(v, mask);
  CHECK(out.at(0, 0) == cd(2.0, 0.0));
  CHECK(std::abs(out.at(0, 2) - cd(3.0, -1.0)) < 1e-15);
  CHECK(out.at(0, 4) == cd(4.0, -2.0));
  for (std::size_t t = 0; t < 5; ++t) CHECK(out.at(1, t) == cd(1.0, 1.0));

  std::vector<bool> partial(10, false);
  partial[1] = true;
  const PilotMask holey(2, 5, partial, std::vector<cd>(10, cd{1.0, 0.0}));
  CHECK_THROWS(interpolate_grid(v, holey));
}

TEST_CASE("ls: exact on a time-invariant channel without noise; variance at pilots is sigma2") {
  const auto mask = PilotMask::columns(6, 8, {2, 6});
  Rng rng(41);
  ResourceGrid h(6, 8, GridRole::channel), x(6, 8, GridRole::transmitted);
  for (std::size_t f = 0; f < 6; ++f) {
    const cd hf = rng.complex_normal(1.0);
    for (std::size_t t = 0; t < 8; ++t) {
      h.at(f, t) = hf;
      x.at(f, t) = mask.is_pilot(f, t) ? mask.pilot(f, t) : cd{1.0, 0.0};
    }
  }
  const auto y = apply_channel(x, h, 0.0, rng);
  const auto est = ls_estimate(y, mask, 0.3);
  for (std::size_t i = 0; i < h.size(); ++i) CHECK(std::abs(est.h[i] - h[i]) < 1e-12);
  for (std::size_t i : mask.pilot_indices()) CHECK(est.error_variance[i] == doctest::Approx(0.3));
  // Midway between the pilots the two LS errors are averaged: 0.25 + 0.25.
  CHECK(est.error_variance[0 * 8 + 4] == doctest::Approx(0.15));
}

TEST_CASE("perfect estimate has zero error variance; zf restores symbols exactly") {
  const auto mask = PilotMask::columns(4, 4, {0});
  Rng rng(42);
  ResourceGrid h(4, 4, GridRole::channel), x(4, 4, GridRole::transmitted);
  for (std::size_t i = 0; i < 16; ++i) {
    h[i] = rng.complex_normal(1.0);
    x[i] = rng.complex_normal(1.0);
  }
  const auto y = apply_channel(x, h, 0.0, rng);
  const auto est = perfect_estimate(h);
  for (double v : est.error_variance) CHECK(v == 0.0);
  const auto eq = equalize(y, est, 0.1, EqualizerKind::zf);
  for (std::size_t i = 0; i < 16; ++i) {
    CHECK(std::abs(eq.symbols[i] - x[i]) < 1e-12);
    CHECK(eq.gain[i] == 1.0);
    CHECK(eq.noise_variance[i] == doctest::Approx(0.1 / std::norm(h[i])));
  }
  const auto mm = equalize(y, est, 0.1, EqualizerKind::mmse);
  for (std::size_t i = 0; i < 16; ++i) {
    const double a = std::norm(h[i]);
    CHECK(mm.gain[i] == doctest::Approx(a / (a + 0.1)));
    CHECK(std::abs(mm.symbols[i] - mm.gain[i] * x[i]) < 1e-12);
  }
}

TEST_CASE("mmse and zf demapped LLRs agree in sign on a clean channel") {
  const auto mask = PilotMask::columns(6, 6, {0});
  const auto qam = Constellation::square_qam(4);
  Rng rng(43);
  ResourceGrid h(6, 6, GridRole::channel);
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = rng.complex_normal(1.0);
  std::vector<std::uint8_t> bits(mask.data_count() * 4);
  for (auto& b : bits) b = rng.bit();
  const auto x = grid_assemble(qam.map(bits), mask);
  const auto y = apply_channel(x, h, 1e-4, rng);
  const auto est = perfect_estimate(h);
  const auto a = demap_equalized(equalize(y, est, 1e-4, EqualizerKind::zf), mask, qam);
  const auto b = demap_equalized(equalize(y, est, 1e-4, EqualizerKind::mmse), mask, qam);
  CHECK(hard_decisions(a) == bits);
  CHECK(hard_decisions(b) == bits);
  const auto c = perfect_csi_llr(y, h, 1e-4, mask, qam);
  for (std::size_t i = 0; i < c.values.size(); ++i) CHECK(c.values[i] == doctest::Approx(a.values[i]).epsilon(1e-9));
}

TEST_CASE("fusion: single AP identity, sum, permutation invariance, snr weights") {
  Rng rng(44);
  std::vector<LlrGrid> g;
  for (int r = 0; r < 3; ++r) g.push_back(random_llrs(4, 4, 2, 10, rng));
  const std::vector<double> snr{1.0, 3.0, 4.0};
  const auto one = fuse_llrs(std::span(g).first(1), {}, {});
  CHECK(one.values == g[0].values);
  const auto s = fuse_llrs(g, {}, {});
  for (std::size_t i = 0; i < s.values.size(); ++i) {
    CHECK(s.values[i] == doctest::Approx(g[0].values[i] + g[1].values[i] + g[2].values[i]));
  }
  std::vector<LlrGrid> perm{g[2], g[0], g[1]};
  const auto sp = fuse_llrs(perm, {}, {});
  for (std::size_t i = 0; i < s.values.size(); ++i) CHECK(sp.values[i] == doctest::Approx(s.values[i]).epsilon(1e-14));
  const auto w = fuse_llrs(g, {FusionMode::snr}, snr);
  for (std::size_t i = 0; i < w.values.size(); ++i) {
    CHECK(w.values[i] == doctest::Approx((g[0].values[i] + 3 * g[1].values[i] + 4 * g[2].values[i]) / 8.0));
  }
  CHECK_THROWS(fuse_llrs({}, {}, {}));
  CHECK_THROWS(fuse_llrs(g, {FusionMode::snr}, std::vector<double>{1.0}));
  std::vector<LlrGrid> mismatch{g[0], random_llrs(4, 4, 2, 9, rng)};
  CHECK_THROWS(fuse_llrs(mismatch, {}, {}));
}

TEST_CASE("classical_receive: noiseless perfect-CSI chain recovers the coded bits") {
  const LinkSetup link(PilotMask::columns(12, 12, {2, 9}), Constellation::square_qam(2),
                       LdpcCode::ieee80211n_r34(10));
  TdlChannelSpec ch;
  ScenarioConfig sc;
  sc.n_ap = 2;
  sc.link_ebno_override_db = std::vector<double>{200.0, 200.0};
  Rng rng(45);
  const auto budget = sample_scenario(sc, rng);
  const auto info = random_bits(link.layout().info_bits(), rng);
  const auto obs = make_observation(link, ch, sc, budget, info, rng);
  for (auto kind : {EstimatorKind::perfect, EstimatorKind::ls}) {
    ClassicalConfig cfg;
    cfg.estimator = kind;
    const auto llr = classical_receive(obs, link, cfg, nullptr);
    CHECK(hard_decisions(llr) == obs.coded_bits);
    CHECK(link.decode_frame(llr.values).info_bits == info);
  }
  ClassicalConfig lm;
  lm.estimator = EstimatorKind::lmmse;
  CHECK_THROWS(classical_receive(obs, link, lm, nullptr));
}

TEST_CASE("lmmse: singular regularized covariance is a numeric error") {
  const auto mask = PilotMask::columns(2, 2, {0});
  ChannelCovariance cov;
  cov.pilot_indices = mask.pilot_indices();
  cov.pilot_pilot = Eigen::MatrixXcd::Zero(2, 2);
  cov.all_pilot = Eigen::MatrixXcd::Zero(4, 2);
  cov.all_diag = Eigen::VectorXd::Zero(4);
  ResourceGrid y(2, 2, GridRole::received);
  CHECK_THROWS_AS(lmmse_estimate(y, mask, cov, 0.0), NumericError);
}

TEST_CASE("ls and equalizer scalar examples") {
  std::vector<bool> is_pilot{true};
  const PilotMask one(1, 1, is_pilot, {cd{1.0, 0.0}});
  ResourceGrid y(1, 1, GridRole::received, cd{2.0, 0.0});
  CHECK(ls_estimate(y, one, 0.0).h[0] == cd(2.0, 0.0));

  ChannelEstimate unit{ResourceGrid(1, 1, GridRole::estimate, cd{1.0, 0.0}), {0.0}, EstimatorKind::perfect};
  ResourceGrid y2(1, 1, GridRole::received, cd{0.3, -0.7});
  CHECK(equalize(y2, unit, 0.1, EqualizerKind::zf).symbols[0] == cd(0.3, -0.7));
  ChannelEstimate half{ResourceGrid(1, 1, GridRole::estimate, cd{0.0, 0.5}), {0.0}, EstimatorKind::perfect};
  CHECK(equalize(y2, half, 0.1, EqualizerKind::zf).noise_variance[0] == doctest::Approx(0.4));
}

TEST_CASE("interpolation: time-linear channel between columns 2 and 32 is reconstructed") {
  const auto mask = PilotMask::columns(48, 36, {2, 32});
  ResourceGrid h(48, 36, GridRole::channel), x(48, 36, GridRole::transmitted, cd{1.0, 0.0});
  for (std::size_t f = 0; f < 48; ++f) {
    for (std::size_t t = 0; t < 36; ++t) {
      h.at(f, t) = cd(0.1 * static_cast<double>(f), -0.5) + cd(0.02, 0.01 * static_cast<double>(f)) * static_cast<double>(t);
      if (mask.is_pilot(f, t)) x.at(f, t) = mask.pilot(f, t);
    }
  }
  Rng rng(46);
  const auto est = ls_estimate(apply_channel(x, h, 0.0, rng), mask, 0.0);
  for (std::size_t f = 0; f < 48; ++f) {
    for (std::size_t t = 2; t <= 32; ++t) CHECK(std::abs(est.h.at(f, t) - h.at(f, t)) < 1e-12);
  }
}

TEST_CASE("lmmse: rank-one covariance forces a constant estimate") {
  const auto mask = PilotMask::columns(3, 3, {1});
  ChannelCovariance cov;
  cov.pilot_indices = mask.pilot_indices();
  cov.pilot_pilot = Eigen::MatrixXcd::Ones(3, 3);
  cov.all_pilot = Eigen::MatrixXcd::Ones(9, 3);
  cov.all_diag = Eigen::VectorXd::Ones(9);
  Rng rng(47);
  ResourceGrid y(3, 3, GridRole::received);
  for (auto& v : y.data()) v = rng.complex_normal(1.0);
  const auto est = lmmse_estimate(y, mask, cov, 0.5);
  for (std::size_t i = 1; i < 9; ++i) CHECK(std::abs(est.h[i] - est.h[0]) < 1e-12);
}

TEST_CASE("perfect-csi LLRs are invariant to a joint phase rotation") {
  const auto mask = PilotMask::columns(4, 4, {0});
  const auto qam = Constellation::square_qam(6);
  Rng rng(48);
  ResourceGrid y(4, 4, GridRole::received), h(4, 4, GridRole::channel);
  for (std::size_t i = 0; i < 16; ++i) {
    y[i] = rng.complex_normal(1.0);
    h[i] = rng.complex_normal(1.0);
  }
  const auto a = perfect_csi_llr(y, h, 0.2, mask, qam);
  const cd rot = std::polar(1.0, 0.7);
  ResourceGrid yr = y, hr = h;
  for (std::size_t i = 0; i < 16; ++i) {
    yr[i] *= rot;
    hr[i] *= rot;
  }
  const auto b = perfect_csi_llr(yr, hr, 0.2, mask, qam);
  for (std::size_t i = 0; i < a.values.size(); ++i) CHECK(b.values[i] == doctest::Approx(a.values[i]).epsilon(1e-9));
}

TEST_CASE("fusion: identical grids double; vanishing SNR vanishes the weight") {
  Rng rng(49);
  const auto g = random_llrs(2, 2, 2, 3, rng);
  const std::vector<LlrGrid> two{g, g};
  const auto s = fuse_llrs(two, {}, {});
  for (std::size_t i = 0; i < g.values.size(); ++i) CHECK(s.values[i] == 2 * g.values[i]);
  const auto h = random_llrs(2, 2, 2, 3, rng);
  const std::vector<LlrGrid> mix{g, h};
  const auto w = fuse_llrs(mix, {FusionMode::snr}, std::vector<double>{1.0, 1e-15});
  for (std::size_t i = 0; i < g.values.size(); ++i) CHECK(w.values[i] == doctest::Approx(g.values[i]).epsilon(1e-12));
}
