// coopnr command-line front end: train, evaluate, sweep, flops, report.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "coopnr/harness.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace coopnr;

namespace {

struct Common {
  std::string config_path;
  std::string profile;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out = "out";
  std::size_t pilot_cols = 0;
};

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file " + path);
  return json::parse(is);
}

std::string section(const json& cfg, const char* key) {
  return cfg.contains(key) ? cfg[key].dump() : std::string("{}");
}

std::string profile_name(const Common& c, const json& cfg, const std::string& fallback) {
  if (!c.profile.empty()) return c.profile;
  return cfg.value("profile", fallback);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void log_line(const std::string& s) { std::cerr << s << std::endl; }

std::string sweep_manifest(const std::string& command, const SweepConfig& cfg, const std::vector<BerCurve>& curves) {
  json m;
  m["command"] = command;
  m["config"] = json::parse(cfg.to_json());
  m["config_hash"] = cfg.hash();
  m["seeds"] = cfg.seeds;
  m["conventions"] = {{"ebno", kEbnoConvention},
                      {"ber_floor", kFloorConvention},
                      {"ber_aggregate", "mean of per-seed BER; std_error over (seed, iteration) BER samples"},
                      {"smoothing", "Nadaraya-Watson, Gaussian kernel on log10(BER)"},
                      {"llr_sign", "log p(1)/p(0)"}};
  std::vector<std::string> files;
  for (const auto& c : curves) files.push_back(curve_file_name(c));
  m["curves"] = files;
  return m.dump();
}

SweepConfig build_sweep(const Common& c, const json& cfg, const std::string& receivers, const std::string& n_ap,
                        const std::string& checkpoint, std::size_t iterations) {
  const Profile p = profile_by_name(profile_name(c, cfg, "desk"));
  SweepConfig s = SweepConfig::from_json(section(cfg, "sweep"), sweep_defaults(p));
  s.profile = p.name;
  if (!receivers.empty()) s.receivers = split_list(receivers);
  if (!n_ap.empty()) {
    s.n_ap.clear();
    for (const auto& v : split_list(n_ap)) s.n_ap.push_back(std::stoull(v));
  }
  if (c.pilot_cols) s.pilot_columns = c.pilot_cols;
  if (c.seed_set) s.seeds = {c.seed};
  if (!checkpoint.empty()) s.checkpoint = checkpoint;
  if (iterations) s.iterations = iterations;
  if (s.covariance_cache.empty()) s.covariance_cache = (fs::path(c.out) / "cache").string();
  return s;
}

int run_sweep(const std::string& command, const SweepConfig& s, const std::string& out) {
  const auto curves = run_monte_carlo_ber(s, log_line);
  const auto files = emit_csv(curves, out, sweep_manifest(command, s, curves));
  for (const auto& c : curves) {
    std::printf("%s n_ap=%zu pilots=%zu\n", c.receiver.c_str(), c.n_ap, c.pilot_columns);
    for (std::size_t k = 0; k < c.samples.size(); ++k) {
      std::printf("  %6.2f dB  BER %.6e  smoothed %.6e  (%llu bits)\n", c.samples[k].ebno_db, c.samples[k].ber,
                  c.smoothed[k], static_cast<unsigned long long>(c.samples[k].bits));
    }
  }
  for (const auto& f : files) std::printf("wrote %s\n", f.string().c_str());
  return 0;
}

int run_report(const std::string& dir) {
  std::vector<fs::path> csvs;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".csv" && e.path().filename().string().rfind("ber_", 0) == 0) csvs.push_back(e.path());
  }
  std::sort(csvs.begin(), csvs.end());
  if (csvs.empty()) {
    std::printf("no BER curves in %s\n", dir.c_str());
    return 0;
  }
  std::vector<BerCurve> curves;
  for (const auto& p : csvs) {
    std::ifstream is(p);
    curves.push_back(parse_curve_csv(is));
  }
  std::printf("%-10s %5s %7s", "receiver", "n_ap", "pilots");
  for (const auto& s : curves.front().samples) std::printf(" %10.1f", s.ebno_db);
  std::printf("   (smoothed BER per Eb/N0 dB)\n");
  for (const auto& c : curves) {
    std::printf("%-10s %5zu %7zu", c.receiver.c_str(), c.n_ap, c.pilot_columns);
    for (double v : c.smoothed) std::printf(" %10.3e", v);
    std::printf("\n");
  }
  const Profile p = profile_by_name(curves.front().profile);
  std::printf("\nmodel parameters (%s profile): %zu\n", p.name.c_str(), count_params(p.model));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cooperative multi-AP OFDM receiver laboratory"};
  app.require_subcommand(1);
  Common c;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", c.config_path, "JSON configuration file");
    sub->add_option("--profile", c.profile, "desk, paper or micro")->check(CLI::IsMember({"desk", "paper", "micro"}));
    sub->add_option("--seed", c.seed, "Master seed")->each([&](const std::string&) { c.seed_set = true; });
    sub->add_option("--out", c.out, "Output directory");
    sub->add_option("--pilot-cols", c.pilot_cols, "Pilot columns (1 or 2)")->check(CLI::IsMember({1, 2}));
  };

  auto* train = app.add_subcommand("train", "Train the transformer receiver");
  add_common(train);
  std::size_t steps = 0;
  std::string resume;
  std::size_t train_max_ap = 0;
  train->add_option("--steps", steps, "Total optimizer steps");
  train->add_option("--resume", resume, "Checkpoint to resume from");
  train->add_option("--n-ap", train_max_ap, "Largest AP count seen in training");

  std::string receivers, n_ap, checkpoint;
  std::size_t iterations = 0;
  auto* evaluate = app.add_subcommand("evaluate", "BER curve of one receiver");
  add_common(evaluate);
  evaluate->add_option("--receiver", receivers, "ls, lmmse, perfect or neural")->required();
  evaluate->add_option("--n-ap", n_ap, "Number of access points");
  evaluate->add_option("--checkpoint", checkpoint, "Trained model (neural receiver)");
  evaluate->add_option("--iterations", iterations, "Monte Carlo iterations per point");

  auto* sweep = app.add_subcommand("sweep", "BER curves over receivers and AP counts");
  add_common(sweep);
  sweep->add_option("--receiver", receivers, "Comma-separated receiver list");
  sweep->add_option("--n-ap", n_ap, "Comma-separated AP counts");
  sweep->add_option("--checkpoint", checkpoint, "Trained model (neural receiver)");
  sweep->add_option("--iterations", iterations, "Monte Carlo iterations per point");

  auto* flops = app.add_subcommand("flops", "Parameter and multiply-accumulate counts");
  add_common(flops);
  std::size_t flops_ap = 0;
  flops->add_option("--n-ap", flops_ap, "Number of access points");

  auto* report = app.add_subcommand("report", "Summarize the BER curves in --out");
  add_common(report);

  CLI11_PARSE(app, argc, argv);

  try {
    const json cfg = load_config(c.config_path);
    if (*train) {
      const Profile p = profile_by_name(profile_name(c, cfg, "micro"));
      TrainJobConfig t = TrainJobConfig::from_json(section(cfg, "train"), train_defaults(p));
      t.profile = p.name;
      if (steps) t.steps = steps;
      if (c.seed_set) t.seed = c.seed;
      if (c.pilot_cols) t.pilot_columns = c.pilot_cols;
      if (train_max_ap) t.n_ap_max = train_max_ap;
      if (!resume.empty()) t.resume = resume;
      const auto res = run_training_job(t, c.out, log_line);
      std::printf("steps %llu, validation R_BMD %.6f\nwrote %s\nwrote %s\nwrote %s\n",
                  static_cast<unsigned long long>(res.steps), res.validation_rate, res.checkpoint.string().c_str(),
                  res.metrics.string().c_str(), res.manifest.string().c_str());
      return 0;
    }
    if (*evaluate) {
      if (split_list(receivers).size() != 1) throw std::invalid_argument("evaluate takes exactly one receiver");
      if (n_ap.empty()) n_ap = "1";
      return run_sweep("evaluate", build_sweep(c, cfg, receivers, n_ap, checkpoint, iterations), c.out);
    }
    if (*sweep) return run_sweep("sweep", build_sweep(c, cfg, receivers, n_ap, checkpoint, iterations), c.out);
    if (*flops) {
      const Profile p = profile_by_name(profile_name(c, cfg, "paper"));
      const std::size_t r = flops_ap ? flops_ap : p.model.max_aps;
      std::printf("profile %s: d_model=%zu heads=%zu layers=%zu ffn=%zu m=%zu\n", p.name.c_str(), p.model.d_model,
                  p.model.heads, p.model.layers, p.model.ffn_dim, p.model.bits_per_symbol);
      std::printf("parameters: %zu\n", count_params(p.model));
      std::printf("%s", format_flop_report(estimate_flops(p.model, p.subcarriers, p.symbols, r)).c_str());
      return 0;
    }
    if (*report) return run_report(c.out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
