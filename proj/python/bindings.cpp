#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "coopnr/harness.hpp"

namespace py = pybind11;
using namespace coopnr;

namespace {

using BitArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using RealArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using ComplexArray = py::array_t<cd, py::array::c_style | py::array::forcecast>;

template <typename T>
std::span<const T> view(const py::array_t<T, py::array::c_style | py::array::forcecast>& a) {
  return {a.data(), static_cast<std::size_t>(a.size())};
}

template <typename T>
py::array_t<T> to_array(const std::vector<T>& v) {
  py::array_t<T> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::array_t<double> demap_many(const Constellation& qam, const ComplexArray& y, const ComplexArray& h, double sigma2,
                               bool exhaustive) {
  if (y.size() != h.size()) throw std::invalid_argument("y and h must have the same length");
  const std::size_t n = static_cast<std::size_t>(y.size()), m = qam.bits_per_symbol();
  py::array_t<double> out({static_cast<py::ssize_t>(n), static_cast<py::ssize_t>(m)});
  auto* o = out.mutable_data();
  for (std::size_t i = 0; i < n; ++i) {
    std::span<double> row(o + i * m, m);
    if (exhaustive) {
      qam.demap_exhaustive(y.data()[i], h.data()[i], sigma2, row);
    } else {
      qam.demap(y.data()[i], h.data()[i], sigma2, row);
    }
  }
  return out;
}

SweepConfig sweep_from(const std::string& profile, const std::string& overrides) {
  SweepConfig s = SweepConfig::from_json(overrides, sweep_defaults(profile_by_name(profile)));
  s.validate();
  return s;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Cooperative neural receiver simulator";

  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);

  py::class_<Constellation>(m, "Constellation")
      .def_static("square_qam", &Constellation::square_qam, py::arg("bits_per_symbol"))
      .def_property_readonly("bits_per_symbol", &Constellation::bits_per_symbol)
      .def_property_readonly("points",
                             [](const Constellation& c) { return to_array(std::vector<cd>(c.points().begin(), c.points().end())); })
      .def("map", [](const Constellation& c, const BitArray& bits) { return to_array(c.map(view(bits))); },
           py::arg("bits"))
      .def(
          "demap",
          [](const Constellation& c, const ComplexArray& y, const ComplexArray& h, double sigma2) {
            return demap_many(c, y, h, sigma2, false);
          },
          py::arg("y"), py::arg("h"), py::arg("sigma2"), "Max-log LLRs log p(1)/p(0), shape [n, m].")
      .def(
          "demap_exhaustive",
          [](const Constellation& c, const ComplexArray& y, const ComplexArray& h, double sigma2) {
            return demap_many(c, y, h, sigma2, true);
          },
          py::arg("y"), py::arg("h"), py::arg("sigma2"));

  py::class_<LdpcCode>(m, "LdpcCode")
      .def_static("ieee80211n_r34", &LdpcCode::ieee80211n_r34, py::arg("lifting") = 27)
      .def_property_readonly("n", &LdpcCode::n)
      .def_property_readonly("k", &LdpcCode::k)
      .def_property_readonly("rate", &LdpcCode::rate)
      .def("encode", [](const LdpcCode& c, const BitArray& info) { return to_array(c.encode(view(info))); },
           py::arg("info"))
      .def("is_codeword", [](const LdpcCode& c, const BitArray& w) { return c.is_codeword(view(w)); }, py::arg("word"));

  m.def(
      "decode_min_sum",
      [](const LdpcCode& code, const RealArray& llrs, unsigned max_iterations) {
        DecoderConfig cfg;
        cfg.max_iterations = max_iterations;
        const auto r = decode_min_sum(code, view(llrs), cfg);
        return py::make_tuple(to_array(r.info_bits), r.converged, r.iterations);
      },
      py::arg("code"), py::arg("llrs"), py::arg("max_iterations") = 25,
      "Returns (info_bits, converged, iterations).");

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("d_model", &ModelConfig::d_model)
      .def_readwrite("heads", &ModelConfig::heads)
      .def_readwrite("layers", &ModelConfig::layers)
      .def_readwrite("ffn_dim", &ModelConfig::ffn_dim)
      .def_readwrite("head_hidden", &ModelConfig::head_hidden)
      .def_readwrite("bits_per_symbol", &ModelConfig::bits_per_symbol)
      .def_readwrite("max_aps", &ModelConfig::max_aps)
      .def_readwrite("cross_attention", &ModelConfig::cross_attention)
      .def("to_json", &ModelConfig::to_json)
      .def_static("from_json", &ModelConfig::from_json);

  m.def("count_params", &count_params, py::arg("config"));
  m.def(
      "bmd_loss",
      [](const RealArray& llrs, const BitArray& bits) {
        const auto r = bmd_loss(view(llrs), view(bits));
        return py::make_tuple(r.loss, r.rate);
      },
      py::arg("llrs"), py::arg("bits"), "Returns (loss, rate).");
  m.def("noise_variance_from_ebno", &noise_variance_from_ebno, py::arg("ebno_db"), py::arg("bits_per_symbol"),
        py::arg("code_rate"));
  m.def("ebno_from_noise_variance", &ebno_from_noise_variance, py::arg("sigma2"), py::arg("bits_per_symbol"),
        py::arg("code_rate"));
  m.def(
      "kernel_smooth",
      [](const RealArray& ebno, const RealArray& ber, const py::array_t<std::uint64_t>& bits, double bandwidth_db) {
        if (ebno.size() != ber.size() || ebno.size() != bits.size()) {
          throw std::invalid_argument("ebno, ber and bits must have the same length");
        }
        std::span<const std::uint64_t> b(bits.data(), static_cast<std::size_t>(bits.size()));
        return to_array(kernel_smooth(view(ebno), view(ber), b, bandwidth_db));
      },
      py::arg("ebno_db"), py::arg("ber"), py::arg("bits"), py::arg("bandwidth_db") = 1.0);
  m.def(
      "estimate_flops",
      [](const ModelConfig& cfg, std::size_t subcarriers, std::size_t symbols, std::size_t n_ap) {
        const auto r = estimate_flops(cfg, subcarriers, symbols, n_ap);
        py::dict blocks;
        for (const auto& e : r.entries) blocks[py::str(e.block)] = e.total_macs;
        return py::make_tuple(r.gflops(), blocks);
      },
      py::arg("config"), py::arg("subcarriers") = 48, py::arg("symbols") = 36, py::arg("n_ap") = 1,
      "Returns (GFLOPs, {block: MACs}).");

  m.def("profile_names", [] { return std::vector<std::string>{"desk", "paper", "micro"}; });

  py::class_<BerCurve>(m, "BerCurve")
      .def_readonly("receiver", &BerCurve::receiver)
      .def_readonly("profile", &BerCurve::profile)
      .def_readonly("n_ap", &BerCurve::n_ap)
      .def_readonly("pilot_columns", &BerCurve::pilot_columns)
      .def_readonly("coded", &BerCurve::coded)
      .def_readonly("config_hash", &BerCurve::config_hash)
      .def_readonly("smoothed", &BerCurve::smoothed)
      .def_property_readonly("ebno_db",
                             [](const BerCurve& c) {
                               std::vector<double> v;
                               for (const auto& s : c.samples) v.push_back(s.ebno_db);
                               return v;
                             })
      .def_property_readonly("ber",
                             [](const BerCurve& c) {
                               std::vector<double> v;
                               for (const auto& s : c.samples) v.push_back(s.ber);
                               return v;
                             })
      .def_property_readonly("std_error",
                             [](const BerCurve& c) {
                               std::vector<double> v;
                               for (const auto& s : c.samples) v.push_back(s.std_error);
                               return v;
                             })
      .def_property_readonly("bits", [](const BerCurve& c) {
        std::vector<std::uint64_t> v;
        for (const auto& s : c.samples) v.push_back(s.bits);
        return v;
      });

  m.def(
      "sweep_defaults", [](const std::string& profile) { return sweep_defaults(profile_by_name(profile)).to_json(); },
      py::arg("profile") = "desk", "Default sweep configuration of a profile as JSON.");
  m.def(
      "run_sweep",
      [](const std::string& profile, const std::string& overrides) {
        const SweepConfig s = sweep_from(profile, overrides);
        py::gil_scoped_release release;
        return run_monte_carlo_ber(s);
      },
      py::arg("profile") = "desk", py::arg("overrides") = "{}",
      "Monte Carlo BER sweep; overrides is a JSON object of sweep keys.");
  m.def(
      "write_curves",
      [](const std::vector<BerCurve>& curves, const std::filesystem::path& dir, const std::string& profile,
         const std::string& overrides) { return emit_csv(curves, dir, sweep_from(profile, overrides).to_json()); },
      py::arg("curves"), py::arg("out_dir"), py::arg("profile") = "desk", py::arg("overrides") = "{}");

  m.def(
      "train_defaults", [](const std::string& profile) { return train_defaults(profile_by_name(profile)).to_json(); },
      py::arg("profile") = "micro");
  m.def(
      "train",
      [](const std::string& profile, const std::filesystem::path& out_dir, const std::string& overrides) {
        TrainJobConfig t = TrainJobConfig::from_json(overrides, train_defaults(profile_by_name(profile)));
        t.validate();
        TrainJobResult r;
        {
          py::gil_scoped_release release;
          r = run_training_job(t, out_dir);
        }
        py::dict d;
        d["checkpoint"] = r.checkpoint;
        d["metrics"] = r.metrics;
        d["manifest"] = r.manifest;
        d["steps"] = r.steps;
        d["validation_rate"] = r.validation_rate;
        return d;
      },
      py::arg("profile") = "micro", py::arg("out_dir"), py::arg("overrides") = "{}",
      "Runs a training job and writes model.ckpt, metrics.csv and manifest.json.");
}
