#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "coopnr/channel.hpp"
#include "coopnr/link.hpp"

using namespace coopnr;

TEST_CASE("tdl: tap powers sum to one and decay to the last-tap level") {
  TdlChannelSpec s;
  const auto p = s.tap_powers();
  double total = 0;
  for (double v : p) total += v;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(10 * std::log10(p.back() / p.front()) == doctest::Approx(-15.0));
  const auto d = s.tap_delays();
  CHECK(d.front() == 0.0);
  CHECK(d.back() == doctest::Approx(0.1));
  s.taps = 0;
  CHECK_THROWS(s.tap_powers());
}

TEST_CASE("tdl: unit average gain and static channel when correlation is one") {
  TdlChannelSpec s;
  Rng rng(31);
  double acc = 0;
  const int draws = 400;
  for (int i = 0; i < draws; ++i) {
    const auto h = generate_channel(s, 12, 4, rng);
    for (std::size_t f = 0; f < 12; ++f) {
      CHECK(h.at(f, 0) == h.at(f, 3));
      acc += std::norm(h.at(f, 0));
    }
  }
  CHECK(acc / (draws * 12) == doctest::Approx(1.0).epsilon(0.08));
}

TEST_CASE("tdl: single tap is flat in frequency") {
  TdlChannelSpec s;
  s.taps = 1;
  Rng rng(32);
  const auto h = generate_channel(s, 8, 3, rng);
  for (std::size_t f = 1; f < 8; ++f) CHECK(std::abs(h.at(f, 1) - h.at(0, 1)) < 1e-12);
}

TEST_CASE("tdl: unit_gain gives an all-ones grid") {
  TdlChannelSpec s;
  s.unit_gain = true;
  Rng rng(33);
  const auto h = generate_channel(s, 5, 6, rng);
  for (auto v : h.data()) CHECK(v == cd(1.0, 0.0));
}

TEST_CASE("doppler correlation: one at rest, decreasing with speed") {
  CHECK(doppler_correlation(0.0, 2.4e9, 7e-5) == 1.0);
  const double a = doppler_correlation(1.0, 2.4e9, 7e-5);
  const double b = doppler_correlation(3.0, 2.4e9, 7e-5);
  CHECK(a < 1.0);
  CHECK(b < a);
  CHECK(b > 0.0);
}

TEST_CASE("apply_channel: zero noise is the exact product; shape mismatch throws") {
  Rng rng(34);
  ResourceGrid x(3, 2, GridRole::transmitted), h(3, 2, GridRole::channel);
  for (std::size_t i = 0; i < 6; ++i) {
    x[i] = cd(static_cast<double>(i), 1.0);
    h[i] = cd(0.5, -static_cast<double>(i));
  }
  const auto y = apply_channel(x, h, 0.0, rng);
  for (std::size_t i = 0; i < 6; ++i) CHECK(y[i] == x[i] * h[i]);
  CHECK_THROWS(apply_channel(x, ResourceGrid(2, 2, GridRole::channel), 0.1, rng));
  CHECK_THROWS(apply_channel(x, h, -1.0, rng));
}

TEST_CASE("noise variance and Eb/N0 conversions are inverse") {
  for (double e : {-3.0, 0.0, 7.5, 20.0}) {
    const double s2 = noise_variance_from_ebno(e, 6, 0.75);
    CHECK(s2 == doctest::Approx(1.0 / (4.5 * std::pow(10.0, e / 10.0))));
    CHECK(ebno_from_noise_variance(s2, 6, 0.75) == doctest::Approx(e));
  }
}

TEST_CASE("scenario: per-link Eb/N0 has the configured dB mean") {
  ScenarioConfig c;
  c.n_ap = 3;
  c.target_ebno_db = 8.0;
  Rng rng(35);
  for (int i = 0; i < 50; ++i) {
    const auto b = sample_scenario(c, rng);
    REQUIRE(b.link_ebno_db.size() == 3);
    CHECK(b.average_ebno_db == doctest::Approx(8.0).epsilon(1e-12));
    CHECK(b.ue_speed_mps >= 0.0);
    CHECK(b.ue_speed_mps <= 3.0);
  }
  c.link_ebno_override_db = std::vector<double>{1.0, 2.0, 6.0};
  const auto b = sample_scenario(c, rng);
  CHECK(b.link_ebno_db == std::vector<double>{1.0, 2.0, 6.0});
  CHECK(b.average_ebno_db == doctest::Approx(3.0));
  c.link_ebno_override_db = std::vector<double>{1.0};
  CHECK_THROWS(c.validate());
  ScenarioConfig bad;
  bad.speed_max_mps = 10.0;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("covariance: Hermitian PSD, unit diagonal on average, cache round trip") {
  TdlChannelSpec s;
  ScenarioConfig sc;
  const std::vector<std::size_t> pilots{0, 4, 8, 12};  // 4x4 grid, column 0
  const auto cov = empirical_covariance(s, sc, 4, 4, pilots, 500, 7);
  CHECK((cov.pilot_pilot - cov.pilot_pilot.adjoint()).norm() < 1e-12);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(cov.pilot_pilot);
  CHECK(es.eigenvalues().minCoeff() > -1e-12);
  CHECK(cov.all_diag.mean() == doctest::Approx(1.0).epsilon(0.2));
  CHECK(cov.all_pilot.rows() == 16);
  CHECK(cov.all_pilot.cols() == 4);

  Eigen::MatrixXcd m(2, 2);
  m << cd(1, 0), cd(0, 2), cd(0, 0), cd(-1, 0);
  const auto p = project_hermitian_psd(m);
  CHECK((p - p.adjoint()).norm() < 1e-12);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> ep(p);
  CHECK(ep.eigenvalues().minCoeff() > -1e-12);

  const auto dir = std::filesystem::temp_directory_path() / "coopnr_test_cov";
  std::filesystem::remove_all(dir);
  const auto a = cached_covariance(dir, s, sc, 4, 4, pilots, 500, 7);
  const auto b = cached_covariance(dir, s, sc, 4, 4, pilots, 500, 7);
  CHECK(a.pilot_pilot == cov.pilot_pilot);
  CHECK(b.pilot_pilot == cov.pilot_pilot);
  CHECK(b.all_pilot == cov.all_pilot);
  CHECK(covariance_cache_key(s, sc, 4, 4, pilots, 500, 7) != covariance_cache_key(s, sc, 4, 4, pilots, 500, 8));
  std::filesystem::remove_all(dir);
  CHECK_THROWS(empirical_covariance(s, sc, 4, 4, {}, 10, 1));
}

TEST_CASE("observation: noise regenerates from its seed and sums to the received grid") {
  const LinkSetup link(PilotMask::columns(12, 12, {2, 9}), Constellation::square_qam(2),
                       LdpcCode::ieee80211n_r34(10));
  TdlChannelSpec ch;
  ScenarioConfig sc;
  sc.n_ap = 2;
  Rng rng(36);
  const auto budget = sample_scenario(sc, rng);
  const auto info = random_bits(link.layout().info_bits(), rng);
  const auto obs = make_observation(link, ch, sc, budget, info, rng);
  REQUIRE(obs.n_ap() == 2);
  CHECK(obs.info_bits == info);
  for (std::size_t r = 0; r < 2; ++r) {
    const auto n = regenerate_noise(obs, r);
    for (std::size_t i = 0; i < n.size(); ++i) {
      CHECK(std::abs(obs.received[r][i] - (obs.channels[r][i] * obs.transmitted[i] + n[i])) < 1e-12);
    }
    CHECK(obs.noise_variance[r] == doctest::Approx(link.noise_variance(obs.link_ebno_db[r])));
  }
}

TEST_CASE("tdl: unit energy over 1e4 realizations and frequency selectivity") {
  TdlChannelSpec s;
  Rng rng(37);
  double acc = 0;
  std::complex<double> corr_far{0, 0};
  double p0 = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const auto h = generate_channel(s, 48, 1, rng);
    acc += std::norm(h.at(0, 0));
    p0 += std::norm(h.at(0, 0));
    corr_far += h.at(0, 0) * std::conj(h.at(47, 0));
  }
  CHECK(std::abs(acc / draws - 1.0) < 0.02);
  CHECK(std::abs(corr_far) / p0 < 0.99);
}

TEST_CASE("apply_channel: X = 0 leaves pure noise of variance sigma2") {
  Rng rng(38);
  ResourceGrid x(100, 100, GridRole::transmitted), h(100, 100, GridRole::channel, cd{1.0, 0.0});
  const auto y = apply_channel(x, h, 0.3, rng);
  double v = 0;
  for (auto e : y.data()) v += std::norm(e);
  CHECK(std::abs(v / 1e4 / 0.3 - 1.0) < 0.05);
  Rng a(5), b(5);
  CHECK(apply_channel(x, h, 0.3, a) == apply_channel(x, h, 0.3, b));
}

TEST_CASE("scenario: single AP equals the target; co-located APs have equal gains") {
  ScenarioConfig c;
  c.n_ap = 1;
  c.target_ebno_db = 6.5;
  Rng rng(39);
  const auto one = sample_scenario(c, rng);
  CHECK(one.link_ebno_db[0] == doctest::Approx(6.5).epsilon(1e-12));
  c.n_ap = 3;
  c.colocated = true;
  const auto co = sample_scenario(c, rng);
  for (double e : co.link_ebno_db) CHECK(e == doctest::Approx(6.5).epsilon(1e-12));
}

TEST_CASE("covariance: single-tap static channel is fully correlated") {
  TdlChannelSpec s;
  s.taps = 1;
  ScenarioConfig sc;
  sc.speed_max_mps = 0.0;
  const std::vector<std::size_t> pilots{0, 3, 6};  // 3x3 grid, column 0
  const auto cov = empirical_covariance(s, sc, 3, 3, pilots, 5000, 9);
  const double scale = cov.pilot_pilot(0, 0).real();
  CHECK(scale == doctest::Approx(1.0).epsilon(0.05));
  for (Eigen::Index i = 0; i < 3; ++i) {
    for (Eigen::Index j = 0; j < 3; ++j) CHECK(std::abs(cov.pilot_pilot(i, j) - scale) < 1e-9);
  }
}

TEST_CASE("observation: three APs, residual variance per link") {
  const LinkSetup link(PilotMask::columns(48, 36, {2, 32}), Constellation::square_qam(6), LdpcCode::ieee80211n_r34());
  TdlChannelSpec ch;
  ScenarioConfig sc;
  sc.n_ap = 3;
  sc.target_ebno_db = 5.0;
  Rng rng(40);
  const auto budget = sample_scenario(sc, rng);
  const auto obs = make_observation(link, ch, sc, budget, random_bits(link.layout().info_bits(), rng), rng);
  CHECK(obs.n_ap() == 3);
  CHECK(obs.noise_variance.size() == 3);
  CHECK(obs.channels.size() == 3);
  for (std::size_t r = 0; r < 3; ++r) {
    double v = 0;
    for (std::size_t i = 0; i < obs.transmitted.size(); ++i) {
      v += std::norm(obs.received[r][i] - obs.channels[r][i] * obs.transmitted[i]);
    }
    v /= static_cast<double>(obs.transmitted.size());
    CHECK(std::abs(v / obs.noise_variance[r] - 1.0) < 0.06);
  }
}
