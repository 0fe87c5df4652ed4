#include "coopnr/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "coopnr/hash.hpp"
#include "coopnr/rng.hpp"

namespace coopnr {

using nlohmann::json;

const std::vector<std::size_t>& Profile::pilot_columns(std::size_t count) const {
  if (count == 2) return pilots_two;
  if (count == 1) return pilots_one;
  throw std::invalid_argument("pilot column count must be 1 or 2, got " + std::to_string(count));
}

namespace {

std::vector<double> ebno_grid(double lo, double hi, double step) {
  std::vector<double> g;
  for (int i = 0; lo + i * step <= hi + 1e-9; ++i) g.push_back(lo + i * step);
  return g;
}

void set_sigma2_standardization(Profile& p) {
  const double rate = 0.75;
  const auto [mu, sd] = sigma2_statistics(p.train_ebno_min_db, p.train_ebno_max_db, p.bits_per_symbol, rate);
  p.model.sigma2_shift = mu;
  p.model.sigma2_scale = sd;
}

}  // namespace

Profile profile_by_name(const std::string& name) {
  Profile p;
  p.name = name;
  if (name == "desk" || name == "paper") {
    p.ebno_db = ebno_grid(0.0, 24.0, 2.0);
    p.model.max_aps = 3;
    p.model.bits_per_symbol = 6;
    if (name == "paper") {
      p.iterations = 5000;
      p.frames_per_iteration = 16;
      p.seeds = {1, 2, 3, 4, 5};
      p.train_steps = 30000;
    }
  } else if (name == "micro") {
    p.subcarriers = 12;
    p.symbols = 12;
    p.pilots_two = {2, 9};
    p.pilots_one = {2};
    p.bits_per_symbol = 2;
    p.lifting = 10;
    p.channel.taps = 4;
    p.model.d_model = 32;
    p.model.heads = 4;
    p.model.layers = 2;
    p.model.ffn_dim = 64;
    p.model.head_hidden = 64;
    p.model.bits_per_symbol = 2;
    p.model.max_aps = 2;
    p.train_ebno_min_db = 0.0;
    p.train_ebno_max_db = 10.0;
    p.train_n_ap_max = 2;
    p.ebno_db = ebno_grid(0.0, 12.0, 2.0);
    p.covariance_samples = 2000;
  } else {
    throw std::invalid_argument("unknown profile '" + name + "' (expected desk, paper or micro)");
  }
  set_sigma2_standardization(p);
  return p;
}

LinkSetup make_link(const Profile& profile, std::size_t pilot_count, bool coded) {
  auto mask = PilotMask::columns(profile.subcarriers, profile.symbols, profile.pilot_columns(pilot_count));
  auto qam = Constellation::square_qam(profile.bits_per_symbol);
  std::optional<LdpcCode> code;
  if (coded) code = LdpcCode::ieee80211n_r34(profile.lifting);
  return LinkSetup(std::move(mask), std::move(qam), std::move(code));
}

// ---------------------------------------------------------------------------
// Sweep configuration

void SweepConfig::validate() const {
  if (receivers.empty()) throw std::invalid_argument("sweep: no receivers selected");
  for (const auto& r : receivers) {
    if (r != "neural") parse_estimator(r);
  }
  parse_equalizer(equalizer);
  parse_fusion(fusion);
  if (n_ap.empty()) throw std::invalid_argument("sweep: empty n_ap list");
  for (auto n : n_ap) {
    if (n == 0) throw std::invalid_argument("sweep: n_ap entries must be >= 1");
  }
  if (pilot_columns != 1 && pilot_columns != 2) throw std::invalid_argument("sweep: pilot_columns must be 1 or 2");
  if (ebno_db.empty()) throw std::invalid_argument("sweep: empty Eb/N0 grid");
  for (std::size_t i = 1; i < ebno_db.size(); ++i) {
    if (!(ebno_db[i] > ebno_db[i - 1])) throw std::invalid_argument("sweep: Eb/N0 grid must be strictly increasing");
  }
  if (iterations == 0 || frames_per_iteration == 0) throw std::invalid_argument("sweep: iterations and frames must be >= 1");
  if (seeds.empty()) throw std::invalid_argument("sweep: empty seed list");
  if (!(bandwidth_db > 0)) throw std::invalid_argument("sweep: smoothing bandwidth must be positive");
  if (channel != "tdl" && channel != "awgn") throw std::invalid_argument("sweep: channel must be tdl or awgn");
  if (anchor != "first" && anchor != "snr") throw std::invalid_argument("sweep: anchor must be first or snr");
  if (!(sigma2_mismatch > 0)) throw std::invalid_argument("sweep: sigma2_mismatch must be positive");
  if (std::find(receivers.begin(), receivers.end(), "neural") != receivers.end() && checkpoint.empty()) {
    throw std::invalid_argument("sweep: the neural receiver needs a checkpoint");
  }
}

std::string SweepConfig::to_json() const {
  json j{{"profile", profile},
         {"receivers", receivers},
         {"equalizer", equalizer},
         {"fusion", fusion},
         {"n_ap", n_ap},
         {"pilot_columns", pilot_columns},
         {"ebno_db", ebno_db},
         {"iterations", iterations},
         {"frames_per_iteration", frames_per_iteration},
         {"seeds", seeds},
         {"bandwidth_db", bandwidth_db},
         {"coded", coded},
         {"channel", channel},
         {"noiseless", noiseless},
         {"checkpoint", checkpoint},
         {"anchor", anchor},
         {"sigma2_mismatch", sigma2_mismatch},
         {"covariance_cache", covariance_cache}};
  return j.dump();
}

SweepConfig SweepConfig::from_json(const std::string& text, const SweepConfig& base) {
  const json j = json::parse(text);
  SweepConfig c = base;
  c.profile = j.value("profile", c.profile);
  c.receivers = j.value("receivers", c.receivers);
  c.equalizer = j.value("equalizer", c.equalizer);
  c.fusion = j.value("fusion", c.fusion);
  c.n_ap = j.value("n_ap", c.n_ap);
  c.pilot_columns = j.value("pilot_columns", c.pilot_columns);
  c.ebno_db = j.value("ebno_db", c.ebno_db);
  c.iterations = j.value("iterations", c.iterations);
  c.frames_per_iteration = j.value("frames_per_iteration", c.frames_per_iteration);
  c.seeds = j.value("seeds", c.seeds);
  c.bandwidth_db = j.value("bandwidth_db", c.bandwidth_db);
  c.coded = j.value("coded", c.coded);
  c.channel = j.value("channel", c.channel);
  c.noiseless = j.value("noiseless", c.noiseless);
  c.checkpoint = j.value("checkpoint", c.checkpoint);
  c.anchor = j.value("anchor", c.anchor);
  c.sigma2_mismatch = j.value("sigma2_mismatch", c.sigma2_mismatch);
  c.covariance_cache = j.value("covariance_cache", c.covariance_cache);
  return c;
}

std::string SweepConfig::hash() const { return hex64(fnv1a64(to_json())); }

SweepConfig sweep_defaults(const Profile& p) {
  SweepConfig c;
  c.profile = p.name;
  c.ebno_db = p.ebno_db;
  c.iterations = p.iterations;
  c.frames_per_iteration = p.frames_per_iteration;
  c.seeds = p.seeds;
  c.bandwidth_db = p.bandwidth_db;
  c.n_ap.clear();
  for (std::size_t n = 1; n <= p.model.max_aps; ++n) c.n_ap.push_back(n);
  return c;
}

// ---------------------------------------------------------------------------
// Monte Carlo BER

namespace {

struct Accumulator {
  std::vector<std::uint64_t> errors, bits;  // per seed
  std::vector<double> iteration_ber;        // per (seed, iteration)
  double realized_sum = 0.0;
  std::size_t realized_count = 0;
};

std::size_t count_errors(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  std::size_t e = 0;
  for (std::size_t i = 0; i < a.size(); ++i) e += a[i] != b[i];
  return e;
}

}  // namespace

std::vector<BerCurve> run_monte_carlo_ber(const SweepConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  const Profile profile = profile_by_name(cfg.profile);
  const LinkSetup link = make_link(profile, cfg.pilot_columns, cfg.coded);
  TdlChannelSpec channel = profile.channel;
  channel.unit_gain = cfg.channel == "awgn";

  std::optional<ModelParams<float>> neural;
  InferenceOptions neural_opts;
  neural_opts.anchor = cfg.anchor == "snr" ? AnchorPolicy::highest_snr : AnchorPolicy::first;
  neural_opts.sigma2_mismatch = cfg.sigma2_mismatch;
  const bool wants_lmmse = std::find(cfg.receivers.begin(), cfg.receivers.end(), "lmmse") != cfg.receivers.end();
  if (std::find(cfg.receivers.begin(), cfg.receivers.end(), "neural") != cfg.receivers.end()) {
    if (!std::filesystem::exists(cfg.checkpoint)) {
      throw std::runtime_error("sweep: checkpoint '" + cfg.checkpoint + "' not found");
    }
    neural = params_from_checkpoint(load_checkpoint(cfg.checkpoint));
    if (neural->config.bits_per_symbol != link.bits_per_symbol()) {
      throw std::invalid_argument("sweep: checkpoint modulation does not match the profile");
    }
    for (auto n : cfg.n_ap) {
      if (n > neural->config.max_aps) {
        throw std::invalid_argument("sweep: n_ap " + std::to_string(n) + " exceeds the checkpoint's max_aps " +
                                    std::to_string(neural->config.max_aps));
      }
    }
  }
  std::optional<ChannelCovariance> cov;
  if (wants_lmmse) {
    const auto& pilots = link.mask().pilot_indices();
    const std::uint64_t cov_seed = derive_seed(cfg.seeds.front(), Stream::covariance);
    if (cfg.covariance_cache.empty()) {
      cov = empirical_covariance(channel, profile.scenario, link.subcarriers(), link.symbols(), pilots,
                                 profile.covariance_samples, cov_seed);
    } else {
      cov = cached_covariance(cfg.covariance_cache, channel, profile.scenario, link.subcarriers(), link.symbols(),
                              pilots, profile.covariance_samples, cov_seed);
    }
  }

  ClassicalConfig classical;
  classical.equalizer = parse_equalizer(cfg.equalizer);
  classical.fusion.mode = parse_fusion(cfg.fusion);
  const std::string hash = cfg.hash();

  std::vector<BerCurve> curves;
  for (const auto n_ap : cfg.n_ap) {
    // acc[receiver][ebno]
    std::vector<std::vector<Accumulator>> acc(cfg.receivers.size(), std::vector<Accumulator>(cfg.ebno_db.size()));
    for (auto& per_rx : acc) {
      for (auto& a : per_rx) {
        a.errors.assign(cfg.seeds.size(), 0);
        a.bits.assign(cfg.seeds.size(), 0);
      }
    }
    for (std::size_t k = 0; k < cfg.ebno_db.size(); ++k) {
      if (progress) {
        std::ostringstream os;
        os << "n_ap=" << n_ap << " ebno=" << cfg.ebno_db[k] << " dB";
        progress(os.str());
      }
      for (std::size_t s = 0; s < cfg.seeds.size(); ++s) {
        for (std::size_t it = 0; it < cfg.iterations; ++it) {
          std::vector<std::uint64_t> it_err(cfg.receivers.size(), 0), it_bits(cfg.receivers.size(), 0);
          for (std::size_t fr = 0; fr < cfg.frames_per_iteration; ++fr) {
            Rng rng(cfg.seeds[s], Stream::scenario, {n_ap, k, it, fr});
            ScenarioConfig sc = profile.scenario;
            sc.n_ap = n_ap;
            sc.target_ebno_db = cfg.ebno_db[k];
            if (cfg.noiseless) sc.link_ebno_override_db = std::vector<double>(n_ap, 200.0);
            const auto budget = sample_scenario(sc, rng);
            const auto info = random_bits(link.layout().info_bits(), rng);
            const auto obs = make_observation(link, channel, sc, budget, info, rng);
            for (std::size_t rx = 0; rx < cfg.receivers.size(); ++rx) {
              const auto& name = cfg.receivers[rx];
              LlrGrid llrs;
              if (name == "neural") {
                llrs = infer_llrs(*neural, obs, link.mask(), neural_opts);
              } else {
                ClassicalConfig cc = classical;
                cc.estimator = parse_estimator(name);
                llrs = classical_receive(obs, link, cc, cov ? &*cov : nullptr);
              }
              for (double v : llrs.values) {
                if (!std::isfinite(v)) {
                  throw std::runtime_error("non-finite LLR from receiver '" + name + "' (seed " +
                                           std::to_string(cfg.seeds[s]) + ", n_ap " + std::to_string(n_ap) +
                                           ", ebno index " + std::to_string(k) + ", iteration " + std::to_string(it) +
                                           ", frame " + std::to_string(fr) + ")");
                }
              }
              const auto decoded = link.decode_frame(llrs.values);
              const auto e = count_errors(decoded.info_bits, obs.info_bits);
              it_err[rx] += e;
              it_bits[rx] += obs.info_bits.size();
              auto& a = acc[rx][k];
              a.realized_sum += obs.average_ebno_db;
              ++a.realized_count;
            }
          }
          for (std::size_t rx = 0; rx < cfg.receivers.size(); ++rx) {
            auto& a = acc[rx][k];
            a.errors[s] += it_err[rx];
            a.bits[s] += it_bits[rx];
            a.iteration_ber.push_back(static_cast<double>(it_err[rx]) / static_cast<double>(it_bits[rx]));
          }
        }
      }
    }
    for (std::size_t rx = 0; rx < cfg.receivers.size(); ++rx) {
      BerCurve c;
      c.receiver = cfg.receivers[rx];
      c.profile = cfg.profile;
      c.n_ap = n_ap;
      c.pilot_columns = cfg.pilot_columns;
      c.coded = cfg.coded;
      c.equalizer = cfg.equalizer;
      c.fusion = cfg.fusion;
      c.config_hash = hash;
      c.seeds = cfg.seeds;
      c.bandwidth_db = cfg.bandwidth_db;
      for (std::size_t k = 0; k < cfg.ebno_db.size(); ++k) {
        const auto& a = acc[rx][k];
        BerSample smp;
        smp.ebno_db = cfg.ebno_db[k];
        smp.realized_ebno_db = a.realized_sum / static_cast<double>(a.realized_count);
        double mean = 0.0;
        for (std::size_t s = 0; s < cfg.seeds.size(); ++s) {
          const double b = static_cast<double>(a.errors[s]) / static_cast<double>(a.bits[s]);
          smp.per_seed_ber.push_back(b);
          mean += b;
          smp.bit_errors += a.errors[s];
          smp.bits += a.bits[s];
        }
        smp.ber = mean / static_cast<double>(cfg.seeds.size());
        const double n = static_cast<double>(a.iteration_ber.size());
        if (n > 1) {
          double mu = 0.0, var = 0.0;
          for (double v : a.iteration_ber) mu += v;
          mu /= n;
          for (double v : a.iteration_ber) var += (v - mu) * (v - mu);
          smp.std_error = std::sqrt(var / (n - 1) / n);
        }
        c.samples.push_back(std::move(smp));
      }
      if (c.samples.size() >= 2) {
        std::vector<double> x, y;
        std::vector<std::uint64_t> b;
        for (const auto& smp : c.samples) {
          x.push_back(smp.ebno_db);
          y.push_back(smp.ber);
          b.push_back(smp.bits);
        }
        c.smoothed = kernel_smooth(x, y, b, cfg.bandwidth_db);
      } else {
        for (const auto& smp : c.samples) c.smoothed.push_back(smp.ber);
      }
      curves.push_back(std::move(c));
    }
  }
  return curves;
}

// ---------------------------------------------------------------------------
// Smoothing

std::vector<double> kernel_smooth(std::span<const double> x, std::span<const double> ber,
                                  std::span<const std::uint64_t> bits, double bandwidth_db,
                                  std::span<const double> at) {
  if (x.empty()) throw std::invalid_argument("kernel_smooth: empty input");
  if (ber.size() != x.size() || bits.size() != x.size()) {
    throw DimensionError("kernel_smooth: abscissae, BER and bit counts differ in length");
  }
  if (!(bandwidth_db > 0)) throw std::invalid_argument("kernel_smooth: bandwidth must be positive");
  std::vector<double> logy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (bits[i] == 0) throw std::invalid_argument("kernel_smooth: sample with zero bits");
    const double floor = 1.0 / (2.0 * static_cast<double>(bits[i]));
    logy[i] = std::log10(ber[i] > 0.0 ? ber[i] : floor);
  }
  std::vector<double> out;
  out.reserve(at.size());
  for (double x0 : at) {
    // Log-sum-exp style shift keeps tiny bandwidths finite.
    double best = -std::numeric_limits<double>::infinity();
    for (double xi : x) best = std::max(best, -0.5 * ((xi - x0) / bandwidth_db) * ((xi - x0) / bandwidth_db));
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double u = (x[i] - x0) / bandwidth_db;
      const double w = std::exp(-0.5 * u * u - best);
      num += w * logy[i];
      den += w;
    }
    out.push_back(std::pow(10.0, num / den));
  }
  return out;
}

std::vector<double> kernel_smooth(std::span<const double> x, std::span<const double> ber,
                                  std::span<const std::uint64_t> bits, double bandwidth_db) {
  return kernel_smooth(x, ber, bits, bandwidth_db, x);
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T, typename F>
std::string join(const std::vector<T>& xs, F f) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) s += ';';
    s += f(xs[i]);
  }
  return s;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

constexpr const char* kCurveColumns[] = {
    "receiver",  "profile",   "n_ap",          "pilot_columns",    "coded",      "equalizer", "fusion",
    "config_hash", "seeds",   "bandwidth_db",  "ebno_convention",  "floor_convention",
    "ebno_db",   "realized_ebno_db", "bits",   "bit_errors",       "ber",        "ber_std_error",
    "ber_smoothed", "ber_per_seed"};

}  // namespace

void write_curve_csv(std::ostream& os, const BerCurve& c) {
  for (std::size_t i = 0; i < std::size(kCurveColumns); ++i) os << (i ? "," : "") << kCurveColumns[i];
  os << '\n';
  const std::string seeds = join(c.seeds, [](std::uint64_t s) { return std::to_string(s); });
  for (std::size_t k = 0; k < c.samples.size(); ++k) {
    const auto& s = c.samples[k];
    os << c.receiver << ',' << c.profile << ',' << c.n_ap << ',' << c.pilot_columns << ',' << (c.coded ? 1 : 0) << ','
       << c.equalizer << ',' << c.fusion << ',' << c.config_hash << ',' << seeds << ',' << fmt(c.bandwidth_db) << ",\""
       << kEbnoConvention << "\",\"" << kFloorConvention << "\"," << fmt(s.ebno_db) << ',' << fmt(s.realized_ebno_db)
       << ',' << s.bits << ',' << s.bit_errors << ',' << fmt(s.ber) << ',' << fmt(s.std_error) << ','
       << fmt(k < c.smoothed.size() ? c.smoothed[k] : s.ber) << ',' << join(s.per_seed_ber, fmt) << '\n';
  }
}

namespace {

// Splits one CSV record; double-quoted fields may contain commas.
std::vector<std::string> csv_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

BerCurve parse_curve_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("curve CSV: missing header");
  const auto header = csv_fields(line);
  if (header.size() != std::size(kCurveColumns)) throw std::runtime_error("curve CSV: unexpected header");
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] != kCurveColumns[i]) throw std::runtime_error("curve CSV: unexpected column '" + header[i] + "'");
  }
  BerCurve c;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = csv_fields(line);
    if (f.size() != header.size()) throw std::runtime_error("curve CSV: malformed row");
    if (first) {
      c.receiver = f[0];
      c.profile = f[1];
      c.n_ap = std::stoull(f[2]);
      c.pilot_columns = std::stoull(f[3]);
      c.coded = f[4] == "1";
      c.equalizer = f[5];
      c.fusion = f[6];
      c.config_hash = f[7];
      if (!f[8].empty()) {
        for (const auto& s : split(f[8], ';')) c.seeds.push_back(std::stoull(s));
      }
      c.bandwidth_db = std::stod(f[9]);
      first = false;
    }
    BerSample s;
    s.ebno_db = std::stod(f[12]);
    s.realized_ebno_db = std::stod(f[13]);
    s.bits = std::stoull(f[14]);
    s.bit_errors = std::stoull(f[15]);
    s.ber = std::stod(f[16]);
    s.std_error = std::stod(f[17]);
    c.smoothed.push_back(std::stod(f[18]));
    if (!f[19].empty()) {
      for (const auto& v : split(f[19], ';')) s.per_seed_ber.push_back(std::stod(v));
    }
    c.samples.push_back(std::move(s));
  }
  return c;
}

std::string curve_file_name(const BerCurve& c) {
  return "ber_" + c.receiver + "_nap" + std::to_string(c.n_ap) + "_pilots" + std::to_string(c.pilot_columns) +
         (c.coded ? "" : "_uncoded") + ".csv";
}

std::vector<std::filesystem::path> emit_csv(const std::vector<BerCurve>& curves, const std::filesystem::path& dir,
                                            const std::string& manifest_json) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  for (const auto& c : curves) {
    const auto path = dir / curve_file_name(c);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    write_curve_csv(os, c);
    if (!os) throw std::runtime_error("write failed for " + path.string());
    written.push_back(path);
  }
  const auto mpath = dir / "manifest.json";
  std::ofstream ms(mpath, std::ios::binary);
  if (!ms) throw std::runtime_error("cannot write " + mpath.string());
  ms << json::parse(manifest_json).dump(2) << '\n';
  if (!ms) throw std::runtime_error("write failed for " + mpath.string());
  written.push_back(mpath);
  return written;
}

// ---------------------------------------------------------------------------
// Training jobs

void TrainJobConfig::validate() const {
  profile_by_name(profile);
  if (pilot_columns != 1 && pilot_columns != 2) throw std::invalid_argument("train: pilot_columns must be 1 or 2");
  if (batch == 0) throw std::invalid_argument("train: batch must be >= 1");
  if (!(ebno_max_db >= ebno_min_db)) throw std::invalid_argument("train: empty Eb/N0 range");
  if (n_ap_min == 0 || n_ap_max < n_ap_min) throw std::invalid_argument("train: invalid AP count range");
  if (!(ap_dropout >= 0 && ap_dropout < 1)) throw std::invalid_argument("train: ap_dropout must lie in [0, 1)");
  if (anchor != "first" && anchor != "snr") throw std::invalid_argument("train: anchor must be first or snr");
  if (!(learning_rate > 0)) throw std::invalid_argument("train: learning_rate must be positive");
  if (lr_schedule != "constant" && lr_schedule != "cosine") {
    throw std::invalid_argument("train: lr_schedule must be constant or cosine");
  }
}

std::string TrainJobConfig::to_json() const {
  json j{{"profile", profile},
         {"pilot_columns", pilot_columns},
         {"steps", steps},
         {"seed", seed},
         {"batch", batch},
         {"ebno_min_db", ebno_min_db},
         {"ebno_max_db", ebno_max_db},
         {"n_ap_min", n_ap_min},
         {"n_ap_max", n_ap_max},
         {"validate_every", validate_every},
         {"checkpoint_every", checkpoint_every},
         {"ap_dropout", ap_dropout},
         {"anchor", anchor},
         {"learning_rate", learning_rate},
         {"lr_schedule", lr_schedule},
         {"resume", resume}};
  return j.dump();
}

TrainJobConfig TrainJobConfig::from_json(const std::string& text, const TrainJobConfig& base) {
  const json j = json::parse(text);
  TrainJobConfig c = base;
  c.profile = j.value("profile", c.profile);
  c.pilot_columns = j.value("pilot_columns", c.pilot_columns);
  c.steps = j.value("steps", c.steps);
  c.seed = j.value("seed", c.seed);
  c.batch = j.value("batch", c.batch);
  c.ebno_min_db = j.value("ebno_min_db", c.ebno_min_db);
  c.ebno_max_db = j.value("ebno_max_db", c.ebno_max_db);
  c.n_ap_min = j.value("n_ap_min", c.n_ap_min);
  c.n_ap_max = j.value("n_ap_max", c.n_ap_max);
  c.validate_every = j.value("validate_every", c.validate_every);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.ap_dropout = j.value("ap_dropout", c.ap_dropout);
  c.anchor = j.value("anchor", c.anchor);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.lr_schedule = j.value("lr_schedule", c.lr_schedule);
  c.resume = j.value("resume", c.resume);
  return c;
}

std::string TrainJobConfig::hash() const {
  TrainJobConfig c = *this;
  c.resume.clear();
  return hex64(fnv1a64(c.to_json()));
}

TrainJobConfig train_defaults(const Profile& p) {
  TrainJobConfig c;
  c.profile = p.name;
  c.steps = p.train_steps;
  c.batch = p.train_batch;
  c.ebno_min_db = p.train_ebno_min_db;
  c.ebno_max_db = p.train_ebno_max_db;
  c.n_ap_min = p.train_n_ap_min;
  c.n_ap_max = p.train_n_ap_max;
  c.learning_rate = p.train_learning_rate;
  c.lr_schedule = p.train_lr_schedule;
  return c;
}

TrainingSetup training_setup(const TrainJobConfig& cfg, const Profile& p) {
  TrainingSetup s;
  s.model = p.model;
  const auto [mu, sd] = sigma2_statistics(cfg.ebno_min_db, cfg.ebno_max_db, p.bits_per_symbol, 0.75);
  s.model.sigma2_shift = mu;
  s.model.sigma2_scale = sd;
  s.channel = p.channel;
  s.scenario = p.scenario;
  s.ebno_min_db = cfg.ebno_min_db;
  s.ebno_max_db = cfg.ebno_max_db;
  s.n_ap_min = cfg.n_ap_min;
  s.n_ap_max = cfg.n_ap_max;
  s.batch = cfg.batch;
  s.seed = cfg.seed;
  s.options.ap_dropout_p = cfg.ap_dropout;
  s.options.anchor = cfg.anchor == "snr" ? AnchorPolicy::highest_snr : AnchorPolicy::first;
  s.adam.learning_rate = cfg.learning_rate;
  if (cfg.lr_schedule == "cosine") {
    s.schedule_steps = cfg.steps;
    s.final_lr_ratio = 0.1;
  }
  return s;
}

namespace {

std::string train_manifest(const TrainJobConfig& cfg, const TrainingSetup& setup, std::uint64_t steps,
                           double validation_rate) {
  json m;
  m["command"] = "train";
  m["config"] = json::parse(cfg.to_json());
  m["config_hash"] = cfg.hash();
  m["model"] = json::parse(setup.model.to_json());
  m["parameter_count"] = count_params(setup.model);
  m["seed"] = cfg.seed;
  m["steps_completed"] = steps;
  m["final_validation_r_bmd"] = validation_rate;
  m["optimizer"] = {{"name", "adam"},
                    {"learning_rate", setup.adam.learning_rate},
                    {"lr_schedule", cfg.lr_schedule},
                    {"beta1", setup.adam.beta1},
                    {"beta2", setup.adam.beta2},
                    {"epsilon", setup.adam.epsilon},
                    {"clip_norm", setup.options.clip_norm}};
  m["channel"] = {{"taps", setup.channel.taps},
                  {"max_delay", setup.channel.max_delay},
                  {"last_tap_db", setup.channel.last_tap_db}};
  m["conventions"] = {{"ebno", kEbnoConvention},
                      {"llr_sign", "log p(1)/p(0)"},
                      {"init", "uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases"},
                      {"sigma2_feature", "linear sigma2 standardized by fixed shift/scale from the training range"}};
  return m.dump();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

}  // namespace

TrainJobResult run_training_job(const TrainJobConfig& cfg, const std::filesystem::path& out_dir,
                                const ProgressFn& progress) {
  cfg.validate();
  const Profile profile = profile_by_name(cfg.profile);
  const TrainingSetup setup = training_setup(cfg, profile);
  Trainer trainer(setup, make_link(profile, cfg.pilot_columns, true));
  std::filesystem::create_directories(out_dir);
  TrainJobResult res;
  res.checkpoint = out_dir / "model.ckpt";
  res.metrics = out_dir / "metrics.csv";
  res.manifest = out_dir / "manifest.json";

  const bool resuming = !cfg.resume.empty();
  if (resuming) trainer.restore(load_checkpoint(cfg.resume));
  std::ofstream metrics(res.metrics, resuming ? std::ios::app : std::ios::trunc);
  if (!metrics) throw std::runtime_error("cannot write " + res.metrics.string());
  if (!resuming) write_metrics_header(metrics);

  const auto t0 = std::chrono::steady_clock::now();
  double val = std::numeric_limits<double>::quiet_NaN();
  try {
    while (trainer.steps_done() < cfg.steps) {
      const auto m = trainer.step();
      const bool do_val = cfg.validate_every > 0 && (m.step % cfg.validate_every == 0 || m.step == cfg.steps);
      if (do_val) val = trainer.validate();
      const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      write_metrics_row(metrics, m, do_val ? val : std::numeric_limits<double>::quiet_NaN(), wall);
      if (progress && do_val) {
        std::ostringstream os;
        os << "step " << m.step << " loss " << m.loss << " validation R_BMD " << val;
        progress(os.str());
      }
      if (cfg.checkpoint_every > 0 && m.step % cfg.checkpoint_every == 0) {
        save_checkpoint(res.checkpoint, trainer.checkpoint());
      }
    }
  } catch (const TrainingDiverged&) {
    save_checkpoint(res.checkpoint, trainer.checkpoint());
    write_text(res.manifest, json::parse(train_manifest(cfg, setup, trainer.steps_done(), val)).dump(2) + "\n");
    throw;
  }
  if (std::isnan(val)) val = trainer.validate();
  save_checkpoint(res.checkpoint, trainer.checkpoint());
  write_text(res.manifest, json::parse(train_manifest(cfg, setup, trainer.steps_done(), val)).dump(2) + "\n");
  res.steps = trainer.steps_done();
  res.validation_rate = val;
  return res;
}

// ---------------------------------------------------------------------------
// Complexity

FlopReport estimate_flops(const ModelConfig& cfg, std::size_t nc, std::size_t ns, std::size_t n_ap) {
  cfg.validate();
  if (n_ap == 0) throw std::invalid_argument("estimate_flops: n_ap must be >= 1");
  const double n = static_cast<double>(nc * ns);
  const double d = static_cast<double>(cfg.d_model);
  const double r = static_cast<double>(n_ap);
  FlopReport rep;
  rep.n_ap = n_ap;
  rep.tokens = nc * ns;
  auto per_ap = [&](const std::string& name, double macs) { rep.entries.push_back({name, macs, macs * r}); };
  auto once = [&](const std::string& name, double macs) { rep.entries.push_back({name, 0.0, macs}); };
  per_ap("embedding", n * 3 * d);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string pre = "encoder[" + std::to_string(l) + "] ";
    per_ap(pre + "qkv projections", 3 * n * d * d);
    per_ap(pre + "attention scores", n * n * d);
    per_ap(pre + "attention values", n * n * d);
    per_ap(pre + "output projection", n * d * d);
    per_ap(pre + "feed-forward", 2 * n * d * static_cast<double>(cfg.ffn_dim));
  }
  if (cfg.cross_attention) {
    once("fusion query projection", n * d * d);
    per_ap("fusion key/value projections", 2 * n * d * d);
    per_ap("fusion scores + values", 2 * n * d);
    once("fusion output projection", n * d * d);
  }
  once("head", n * (d * static_cast<double>(cfg.head_hidden) +
                    static_cast<double>(cfg.head_hidden) * static_cast<double>(cfg.bits_per_symbol)));
  for (const auto& e : rep.entries) rep.total_macs += e.total_macs;
  return rep;
}

std::string format_flop_report(const FlopReport& rep) {
  std::ostringstream os;
  char buf[160];
  os << "convention: multiply-accumulates of dense matmuls only (1 MAC = 2 FLOPs); element-wise ops, softmax, "
        "layer norms and positional encodings not counted\n";
  os << "tokens per AP: " << rep.tokens << ", APs: " << rep.n_ap << "\n";
  std::snprintf(buf, sizeof buf, "%-36s %18s %18s\n", "block", "MACs per AP", "MACs total");
  os << buf;
  for (const auto& e : rep.entries) {
    std::snprintf(buf, sizeof buf, "%-36s %18.0f %18.0f\n", e.block.c_str(), e.per_ap_macs, e.total_macs);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "total: %.0f MACs = %.4f GFLOPs (paper quotes %.3f GFLOPs; counting convention unknown)\n",
                rep.total_macs, rep.gflops(), kPaperTransformerGflops);
  os << buf;
  return os.str();
}

}  // namespace coopnr
