#include "coopnr/channel.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "coopnr/hash.hpp"
#include "coopnr/tensor.hpp"

namespace coopnr {

std::vector<double> TdlChannelSpec::tap_powers() const {
  if (taps == 0) throw std::invalid_argument("TDL channel needs at least one tap");
  std::vector<double> p(taps, 1.0);
  if (taps > 1) {
    for (std::size_t l = 0; l < taps; ++l) {
      const double frac = static_cast<double>(l) / static_cast<double>(taps - 1);
      p[l] = std::pow(10.0, last_tap_db * frac / 10.0);
    }
  }
  double total = 0;
  for (auto v : p) total += v;
  for (auto& v : p) v /= total;
  return p;
}

std::vector<double> TdlChannelSpec::tap_delays() const {
  std::vector<double> d(taps, 0.0);
  for (std::size_t l = 1; l < taps; ++l) {
    d[l] = max_delay * static_cast<double>(l) / static_cast<double>(taps - 1);
  }
  return d;
}

double doppler_correlation(double speed_mps, double carrier_hz, double symbol_duration_s) {
  const double fd = speed_mps * carrier_hz / 299792458.0;
  const double x = 2.0 * std::numbers::pi * fd * symbol_duration_s;
  return std::exp(-x * x / 2.0);
}

ResourceGrid generate_channel(const TdlChannelSpec& spec, std::size_t subcarriers, std::size_t symbols, Rng& rng) {
  if (spec.unit_gain) return ResourceGrid(subcarriers, symbols, GridRole::channel, cd{1.0, 0.0});
  const auto powers = spec.tap_powers();
  const auto delays = spec.tap_delays();
  const double rho = spec.time_correlation;
  if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("time correlation must lie in [0, 1]");
  const double innov = std::sqrt(std::max(0.0, 1.0 - rho * rho));
  const std::size_t taps = powers.size();

  // Per-tap frequency response phasors exp(-j 2 pi f tau_l).
  std::vector<cd> phasor(subcarriers * taps);
  for (std::size_t f = 0; f < subcarriers; ++f) {
    for (std::size_t l = 0; l < taps; ++l) {
      phasor[f * taps + l] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(f) * delays[l]);
    }
  }
  std::vector<cd> g(taps);
  for (std::size_t l = 0; l < taps; ++l) g[l] = rng.complex_normal(powers[l]);

  ResourceGrid h(subcarriers, symbols, GridRole::channel);
  for (std::size_t t = 0; t < symbols; ++t) {
    if (t > 0 && rho < 1.0) {
      for (std::size_t l = 0; l < taps; ++l) g[l] = rho * g[l] + innov * rng.complex_normal(powers[l]);
    }
    for (std::size_t f = 0; f < subcarriers; ++f) {
      cd acc{0.0, 0.0};
      for (std::size_t l = 0; l < taps; ++l) acc += g[l] * phasor[f * taps + l];
      h.at(f, t) = acc;
    }
  }
  return h;
}

ResourceGrid apply_channel(const ResourceGrid& x, const ResourceGrid& h, double sigma2, Rng& rng) {
  if (!x.same_shape(h)) throw DimensionError("apply_channel: transmitted grid and channel grid differ in shape");
  if (!(sigma2 >= 0.0)) throw std::invalid_argument("apply_channel: noise variance must be non-negative");
  ResourceGrid y(x.subcarriers(), x.symbols(), GridRole::received);
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = h[i] * x[i];
    if (sigma2 > 0.0) y[i] += rng.complex_normal(sigma2);
  }
  return y;
}

void ScenarioConfig::validate() const {
  if (n_ap < 1) throw std::invalid_argument("scenario needs at least one access point");
  if (!(area_side_m > 0)) throw std::invalid_argument("area side must be positive");
  if (speed_min_mps < 0 || speed_max_mps > 3.0 || speed_min_mps > speed_max_mps) {
    throw std::invalid_argument("UE speed range must lie within [0, 3] m/s");
  }
  if (link_ebno_override_db && link_ebno_override_db->size() != n_ap) {
    throw std::invalid_argument("per-link Eb/N0 override must list one value per access point");
  }
}

LinkBudget sample_scenario(const ScenarioConfig& cfg, Rng& rng) {
  cfg.validate();
  LinkBudget lb;
  lb.ue_speed_mps = rng.uniform(cfg.speed_min_mps, cfg.speed_max_mps);
  const double ux = rng.uniform(0.0, cfg.area_side_m);
  const double uy = rng.uniform(0.0, cfg.area_side_m);
  std::vector<double> gain_db(cfg.n_ap);
  lb.distances_m.resize(cfg.n_ap);
  for (std::size_t r = 0; r < cfg.n_ap; ++r) {
    const double ax = rng.uniform(0.0, cfg.area_side_m);
    const double ay = rng.uniform(0.0, cfg.area_side_m);
    double d = std::hypot(ax - ux, ay - uy);
    if (cfg.colocated) d = cfg.min_distance_m;
    d = std::max(d, cfg.min_distance_m);
    lb.distances_m[r] = d;
    double pl = cfg.reference_pathloss_db + 10.0 * cfg.pathloss_exponent * std::log10(d);
    if (cfg.shadowing) pl += cfg.shadowing_std_db * rng.normal();
    gain_db[r] = -pl;
  }
  if (cfg.link_ebno_override_db) {
    lb.link_ebno_db = *cfg.link_ebno_override_db;
  } else {
    double mean_gain = 0;
    for (auto g : gain_db) mean_gain += g;
    mean_gain /= static_cast<double>(cfg.n_ap);
    lb.link_ebno_db.resize(cfg.n_ap);
    for (std::size_t r = 0; r < cfg.n_ap; ++r) lb.link_ebno_db[r] = cfg.target_ebno_db + (gain_db[r] - mean_gain);
  }
  double mean = 0;
  for (auto e : lb.link_ebno_db) mean += e;
  lb.average_ebno_db = mean / static_cast<double>(lb.link_ebno_db.size());
  return lb;
}

double noise_variance_from_ebno(double ebno_db, unsigned bits_per_symbol, double code_rate) {
  const double esno = std::pow(10.0, ebno_db / 10.0) * static_cast<double>(bits_per_symbol) * code_rate;
  return 1.0 / esno;
}

double ebno_from_noise_variance(double sigma2, unsigned bits_per_symbol, double code_rate) {
  return 10.0 * std::log10(1.0 / (sigma2 * static_cast<double>(bits_per_symbol) * code_rate));
}

Eigen::MatrixXcd project_hermitian_psd(const Eigen::MatrixXcd& m) {
  const Eigen::MatrixXcd herm = 0.5 * (m + m.adjoint());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(herm);
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
  Eigen::MatrixXcd out = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
  return 0.5 * (out + out.adjoint());
}

ChannelCovariance empirical_covariance(const TdlChannelSpec& spec, const ScenarioConfig& scenario,
                                       std::size_t subcarriers, std::size_t symbols,
                                       const std::vector<std::size_t>& pilot_indices, std::size_t samples,
                                       std::uint64_t seed) {
  const std::size_t np = pilot_indices.size();
  const std::size_t na = subcarriers * symbols;
  if (np == 0) throw std::invalid_argument("empirical_covariance: no pilot positions");
  if (samples < 10 * np) {
    throw std::invalid_argument("empirical_covariance: " + std::to_string(samples) +
                                " samples is fewer than 10x the " + std::to_string(np) + " pilot positions");
  }
  for (auto i : pilot_indices) {
    if (i >= na) throw std::invalid_argument("empirical_covariance: pilot index outside the grid");
  }
  Eigen::MatrixXcd rpp = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(np), static_cast<Eigen::Index>(np));
  Eigen::MatrixXcd rap = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(na), static_cast<Eigen::Index>(np));
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(na));
  Eigen::VectorXcd hall(static_cast<Eigen::Index>(na));
  Eigen::VectorXcd hp(static_cast<Eigen::Index>(np));
  for (std::size_t s = 0; s < samples; ++s) {
    Rng rng(seed, Stream::covariance, {s});
    TdlChannelSpec draw = spec;
    const double speed = rng.uniform(scenario.speed_min_mps, scenario.speed_max_mps);
    draw.time_correlation = doppler_correlation(speed, scenario.carrier_hz, scenario.symbol_duration_s());
    const ResourceGrid h = generate_channel(draw, subcarriers, symbols, rng);
    for (std::size_t i = 0; i < na; ++i) hall[static_cast<Eigen::Index>(i)] = h[i];
    for (std::size_t i = 0; i < np; ++i) hp[static_cast<Eigen::Index>(i)] = h[pilot_indices[i]];
    rpp.noalias() += hp * hp.adjoint();
    rap.noalias() += hall * hp.adjoint();
    diag += hall.cwiseAbs2();
  }
  const double inv = 1.0 / static_cast<double>(samples);
  ChannelCovariance cov;
  cov.pilot_indices = pilot_indices;
  cov.pilot_pilot = project_hermitian_psd(rpp * inv);
  cov.all_pilot = rap * inv;
  cov.all_diag = diag * inv;
  return cov;
}

std::string covariance_cache_key(const TdlChannelSpec& spec, const ScenarioConfig& scenario, std::size_t subcarriers,
                                 std::size_t symbols, const std::vector<std::size_t>& pilot_indices,
                                 std::size_t samples, std::uint64_t seed) {
  std::ostringstream os;
  os.precision(17);
  os << "tdl:" << spec.unit_gain << ':' << spec.taps << ':' << spec.max_delay << ':' << spec.last_tap_db << "|speed:" << scenario.speed_min_mps
     << ':' << scenario.speed_max_mps << ':' << scenario.carrier_hz << ':' << scenario.symbol_duration_s()
     << "|grid:" << subcarriers << 'x' << symbols << "|pilots:";
  for (auto i : pilot_indices) os << i << ',';
  os << "|samples:" << samples << "|seed:" << seed;
  return hex64(fnv1a64(os.str()));
}

namespace {

constexpr char kCovMagic[8] = {'C', 'N', 'R', 'C', 'O', 'V', '1', '\0'};

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_f64(std::vector<std::uint8_t>& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

struct CovReader {
  const std::vector<std::uint8_t>& b;
  std::size_t pos = 0;
  std::uint64_t u64() {
    if (b.size() - pos < 8) throw std::runtime_error("covariance file truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[pos + static_cast<std::size_t>(i)]) << (8 * i);
    pos += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
};

}  // namespace

void save_covariance(const std::filesystem::path& path, const ChannelCovariance& cov) {
  std::vector<std::uint8_t> out(std::begin(kCovMagic), std::end(kCovMagic));
  const auto np = static_cast<std::uint64_t>(cov.pilot_pilot.rows());
  const auto na = static_cast<std::uint64_t>(cov.all_pilot.rows());
  put_u64(out, np);
  put_u64(out, na);
  for (auto i : cov.pilot_indices) put_u64(out, i);
  for (Eigen::Index c = 0; c < cov.pilot_pilot.cols(); ++c) {
    for (Eigen::Index r = 0; r < cov.pilot_pilot.rows(); ++r) {
      put_f64(out, cov.pilot_pilot(r, c).real());
      put_f64(out, cov.pilot_pilot(r, c).imag());
    }
  }
  for (Eigen::Index c = 0; c < cov.all_pilot.cols(); ++c) {
    for (Eigen::Index r = 0; r < cov.all_pilot.rows(); ++r) {
      put_f64(out, cov.all_pilot(r, c).real());
      put_f64(out, cov.all_pilot(r, c).imag());
    }
  }
  for (Eigen::Index i = 0; i < cov.all_diag.size(); ++i) put_f64(out, cov.all_diag[i]);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write covariance cache: " + path.string());
  os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

ChannelCovariance load_covariance(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open covariance cache: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.size() < 8 || !std::equal(std::begin(kCovMagic), std::end(kCovMagic), bytes.begin())) {
    throw std::runtime_error("not a covariance cache file: " + path.string());
  }
  CovReader r{bytes, 8};
  const auto np = static_cast<Eigen::Index>(r.u64());
  const auto na = static_cast<Eigen::Index>(r.u64());
  ChannelCovariance cov;
  cov.pilot_indices.resize(static_cast<std::size_t>(np));
  for (auto& i : cov.pilot_indices) i = static_cast<std::size_t>(r.u64());
  cov.pilot_pilot.resize(np, np);
  for (Eigen::Index c = 0; c < np; ++c) {
    for (Eigen::Index rr = 0; rr < np; ++rr) {
      const double re = r.f64();
      cov.pilot_pilot(rr, c) = cd(re, r.f64());
    }
  }
  cov.all_pilot.resize(na, np);
  for (Eigen::Index c = 0; c < np; ++c) {
    for (Eigen::Index rr = 0; rr < na; ++rr) {
      const double re = r.f64();
      cov.all_pilot(rr, c) = cd(re, r.f64());
    }
  }
  cov.all_diag.resize(na);
  for (Eigen::Index i = 0; i < na; ++i) cov.all_diag[i] = r.f64();
  return cov;
}

ChannelCovariance cached_covariance(const std::filesystem::path& dir, const TdlChannelSpec& spec,
                                    const ScenarioConfig& scenario, std::size_t subcarriers, std::size_t symbols,
                                    const std::vector<std::size_t>& pilot_indices, std::size_t samples,
                                    std::uint64_t seed) {
  const auto file =
      dir / (covariance_cache_key(spec, scenario, subcarriers, symbols, pilot_indices, samples, seed) + ".cov");
  if (std::filesystem::exists(file)) return load_covariance(file);
  auto cov = empirical_covariance(spec, scenario, subcarriers, symbols, pilot_indices, samples, seed);
  std::filesystem::create_directories(dir);
  save_covariance(file, cov);
  return cov;
}

}  // namespace coopnr
