#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "coopnr/harness.hpp"
#include "fixtures.hpp"

using namespace coopnr;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("coopnr_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

BerCurve sample_curve() {
  BerCurve c;
  c.receiver = "lmmse";
  c.profile = "desk";
  c.n_ap = 2;
  c.pilot_columns = 1;
  c.equalizer = "zf";
  c.fusion = "sum";
  c.config_hash = "0123456789abcdef";
  c.seeds = {1, 7};
  c.bandwidth_db = 1.0;
  for (int k = 0; k < 3; ++k) {
    BerSample s;
    s.ebno_db = 2.0 * k;
    s.realized_ebno_db = 2.0 * k + 0.1;
    s.ber = 0.1 / (1 + k * 3.3);
    s.std_error = 1.0 / 3.0 * 1e-3;
    s.bit_errors = 100 - 7 * k;
    s.bits = 7290;
    s.per_seed_ber = {s.ber * 0.9, s.ber * 1.1};
    c.samples.push_back(s);
    c.smoothed.push_back(s.ber * 1.01);
  }
  return c;
}

SweepConfig micro_sweep() {
  SweepConfig s = sweep_defaults(profile_by_name("micro"));
  s.receivers = {"ls", "perfect"};
  s.n_ap = {1};
  s.ebno_db = {4.0, 8.0};
  s.iterations = 3;
  s.frames_per_iteration = 2;
  s.seeds = {1};
  return s;
}

}  // namespace

TEST_CASE("kernel smoothing: constants, delta limit, hand-evaluated midpoint, floor") {
  const std::vector<double> x{0, 2, 4, 6};
  const std::vector<std::uint64_t> bits(4, 1000);
  const std::vector<double> flat(4, 3e-3);
  for (double v : kernel_smooth(x, flat, bits, 1.0)) CHECK(v == doctest::Approx(3e-3).epsilon(1e-12));
  const std::vector<double> y{1e-1, 2e-2, 1e-3, 5e-5};
  const auto sharp = kernel_smooth(x, y, bits, 1e-3);
  for (std::size_t i = 0; i < 4; ++i) CHECK(sharp[i] == doctest::Approx(y[i]).epsilon(1e-9));
  const std::vector<double> x2{0, 2}, y2{1e-2, 1e-4}, at{1.0};
  const std::vector<std::uint64_t> b2(2, 1000);
  CHECK(kernel_smooth(x2, y2, b2, 1.0, at)[0] == doctest::Approx(1e-3).epsilon(1e-12));
  // Zero BER is floored at 1/(2 bits) before averaging.
  const std::vector<double> yz{1e-3, 0.0};
  const auto z = kernel_smooth(x2, yz, b2, 1e-3);
  CHECK(z[1] == doctest::Approx(1.0 / 2000.0).epsilon(1e-9));
  // Monotone inputs stay monotone.
  const auto m = kernel_smooth(x, y, bits, 2.0);
  for (std::size_t i = 1; i < 4; ++i) CHECK(m[i] < m[i - 1]);
  CHECK_THROWS(kernel_smooth(std::vector<double>{}, std::vector<double>{}, std::vector<std::uint64_t>{}, 1.0));
}

TEST_CASE("curve CSV: round trip and metadata on every row") {
  const auto c = sample_curve();
  std::stringstream ss;
  write_curve_csv(ss, c);
  const std::string text = ss.str();
  CHECK(text.find("config_hash") != std::string::npos);
  std::stringstream in(text);
  CHECK(parse_curve_csv(in) == c);
  CHECK(curve_file_name(c) == "ber_lmmse_nap2_pilots1.csv");
  auto u = c;
  u.coded = false;
  CHECK(curve_file_name(u) == "ber_lmmse_nap2_pilots1_uncoded.csv");
}

TEST_CASE("emit_csv: empty set writes only the manifest; files are deterministic") {
  const auto dir = scratch("emit");
  const auto none = emit_csv({}, dir, R"({"a":1})");
  CHECK(none.size() == 1);
  CHECK(fs::exists(dir / "manifest.json"));
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir)) ++files;
  CHECK(files == 1);

  const auto a = scratch("emit_a"), b = scratch("emit_b");
  emit_csv({sample_curve()}, a, "{}");
  emit_csv({sample_curve()}, b, "{}");
  CHECK(slurp(a / "ber_lmmse_nap2_pilots1.csv") == slurp(b / "ber_lmmse_nap2_pilots1.csv"));
  fs::remove_all(dir);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("sweep config: JSON overrides, validation and hashing") {
  const auto base = sweep_defaults(profile_by_name("desk"));
  CHECK(base.ebno_db.front() == 0.0);
  CHECK(base.ebno_db.back() == 24.0);
  CHECK(base.ebno_db.size() == 13);
  CHECK(base.iterations == 200);
  CHECK(base.frames_per_iteration == 4);
  CHECK(base.seeds.size() == 3);
  const auto paper = sweep_defaults(profile_by_name("paper"));
  CHECK(paper.iterations == 5000);
  CHECK(paper.frames_per_iteration == 16);
  CHECK(paper.seeds.size() == 5);

  const auto c = SweepConfig::from_json(R"({"receivers":["ls"],"n_ap":[2],"iterations":7})", base);
  CHECK(c.receivers == std::vector<std::string>{"ls"});
  CHECK(c.n_ap == std::vector<std::size_t>{2});
  CHECK(c.iterations == 7);
  CHECK(c.ebno_db == base.ebno_db);
  CHECK(SweepConfig::from_json(c.to_json(), base).to_json() == c.to_json());
  CHECK(c.hash() != base.hash());
  CHECK(c.hash() == SweepConfig::from_json(c.to_json(), base).hash());

  auto bad = base;
  bad.iterations = 0;
  CHECK_THROWS(bad.validate());
  bad = base;
  bad.ebno_db = {0.0, 0.0};
  CHECK_THROWS(bad.validate());
  bad = base;
  bad.bandwidth_db = 0.0;
  CHECK_THROWS(bad.validate());
  bad = base;
  bad.receivers = {"cnn"};
  CHECK_THROWS(bad.validate());
  CHECK_THROWS(profile_by_name("huge"));
}

TEST_CASE("monte carlo: zero-noise override gives zero BER for every receiver") {
  auto s = micro_sweep();
  s.receivers = {"ls", "lmmse", "perfect"};
  s.n_ap = {1, 2};
  s.noiseless = true;
  const auto curves = run_monte_carlo_ber(s);
  CHECK(curves.size() == 6);
  for (const auto& c : curves) {
    for (const auto& smp : c.samples) {
      CHECK(smp.ber == 0.0);
      CHECK(smp.bits > 0);
    }
  }
}

TEST_CASE("monte carlo: deterministic, paired, and missing checkpoint is an error") {
  const auto s = micro_sweep();
  const auto a = run_monte_carlo_ber(s);
  const auto b = run_monte_carlo_ber(s);
  CHECK(a == b);
  REQUIRE(a.size() == 2);
  CHECK(a[0].receiver == "ls");
  CHECK(a[1].receiver == "perfect");
  CHECK(a[0].samples[0].bits == a[1].samples[0].bits);
  CHECK(a[0].config_hash == s.hash());
  auto n = s;
  n.receivers = {"neural"};
  n.checkpoint = "/nonexistent/model.ckpt";
  CHECK_THROWS(run_monte_carlo_ber(n));
}

TEST_CASE("monte carlo: standard error shrinks by about sqrt(2) when iterations double") {
  auto s = micro_sweep();
  s.receivers = {"perfect"};
  s.coded = false;
  s.ebno_db = {4.0};
  s.frames_per_iteration = 1;
  s.seeds = {1, 2, 3, 4};
  s.iterations = 150;
  const double se1 = run_monte_carlo_ber(s)[0].samples[0].std_error;
  s.iterations = 300;
  const double se2 = run_monte_carlo_ber(s)[0].samples[0].std_error;
  const double ratio = se1 / se2;
  MESSAGE("standard error ratio " << ratio);
  CHECK(ratio >= 1.35);
  CHECK(ratio <= 1.65);
}

TEST_CASE("flops: head-only enumeration and linear scaling in the AP count") {
  ModelConfig c;
  c.layers = 0;
  c.cross_attention = false;
  const auto r = estimate_flops(c, 48, 36, 1);
  CHECK(r.total_macs == 1728.0 * (64 * 128 + 128 * 6) + 1728.0 * 3 * 64);
  ModelConfig full;
  const auto one = estimate_flops(full, 48, 36, 1), three = estimate_flops(full, 48, 36, 3);
  for (std::size_t i = 0; i < one.entries.size(); ++i) {
    if (one.entries[i].per_ap_macs > 0) {
      CHECK(three.entries[i].total_macs == doctest::Approx(3 * one.entries[i].total_macs));
    } else {
      CHECK(three.entries[i].total_macs == one.entries[i].total_macs);
    }
  }
  const auto text = format_flop_report(three);
  CHECK(text.find("0.243") != std::string::npos);
  CHECK(text.find("convention") != std::string::npos);
  CHECK_THROWS(estimate_flops(full, 48, 36, 0));
}

TEST_CASE("training job: zero steps saves the initialization; resume is bitwise") {
  TrainJobConfig t = train_defaults(profile_by_name("micro"));
  t.batch = 2;
  t.validate_every = 1;
  t.steps = 0;
  const auto dir0 = scratch("train0");
  const auto r0 = run_training_job(t, dir0);
  CHECK(r0.steps == 0);
  const auto init = params_from_checkpoint(load_checkpoint(r0.checkpoint));
  const auto expect = ModelParams<float>::initialize(init.config, t.seed);
  CHECK(init.embed_w == expect.embed_w);
  CHECK(init.head_w2 == expect.head_w2);
  const auto manifest = nlohmann::json::parse(slurp(r0.manifest));
  CHECK(manifest.contains("config"));

  const auto straight = scratch("train_straight"), split = scratch("train_split");
  t.steps = 3;
  run_training_job(t, straight);
  t.steps = 2;
  run_training_job(t, split);
  t.steps = 3;
  t.resume = (split / "model.ckpt").string();
  const auto tmp = scratch("train_resumed");
  fs::copy_file(split / "metrics.csv", tmp / "metrics.csv");
  run_training_job(t, tmp);
  CHECK(slurp(straight / "model.ckpt") == slurp(tmp / "model.ckpt"));

  // Metrics rows agree except for the wall-clock column.
  auto strip = [](const std::string& text) {
    std::istringstream is(text);
    std::string line, out;
    while (std::getline(is, line)) out += line.substr(0, line.rfind(',')) + "\n";
    return out;
  };
  CHECK(strip(slurp(straight / "metrics.csv")) == strip(slurp(tmp / "metrics.csv")));
  for (const auto& d : {dir0, straight, split, tmp}) fs::remove_all(d);
}

TEST_CASE("trainer: AP range and modulation are checked") {
  TrainingSetup s;
  s.model = coopnr::testing::tiny_config();
  s.n_ap_max = 4;
  CHECK_THROWS(Trainer(s, coopnr::testing::tiny_link()));
  s.n_ap_max = 2;
  s.model.bits_per_symbol = 4;
  s.model.d_model = 8;
  CHECK_THROWS(Trainer(s, coopnr::testing::tiny_link()));
}
