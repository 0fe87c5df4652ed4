#include "coopnr/classical.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "coopnr/tensor.hpp"

namespace coopnr {

EstimatorKind parse_estimator(const std::string& s) {
  if (s == "ls") return EstimatorKind::ls;
  if (s == "lmmse") return EstimatorKind::lmmse;
  if (s == "perfect") return EstimatorKind::perfect;
  throw std::invalid_argument("unknown estimator '" + s + "' (expected ls, lmmse or perfect)");
}

EqualizerKind parse_equalizer(const std::string& s) {
  if (s == "zf") return EqualizerKind::zf;
  if (s == "mmse") return EqualizerKind::mmse;
  throw std::invalid_argument("unknown equalizer '" + s + "' (expected zf or mmse)");
}

FusionMode parse_fusion(const std::string& s) {
  if (s == "sum") return FusionMode::sum;
  if (s == "snr") return FusionMode::snr;
  throw std::invalid_argument("unknown fusion mode '" + s + "' (expected sum or snr)");
}

std::string to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::ls: return "ls";
    case EstimatorKind::lmmse: return "lmmse";
    case EstimatorKind::perfect: return "perfect";
  }
  return "?";
}

std::string to_string(EqualizerKind k) { return k == EqualizerKind::zf ? "zf" : "mmse"; }
std::string to_string(FusionMode k) { return k == FusionMode::sum ? "sum" : "snr"; }

namespace {

struct InterpTerm {
  std::size_t a, b;
  double wa, wb;
};

// Interpolation weights for every RE from the pilots of its subcarrier row.
std::vector<InterpTerm> interpolation_terms(const PilotMask& mask) {
  const std::size_t nc = mask.subcarriers(), ns = mask.symbols();
  if (mask.pilot_count() == 0) throw std::invalid_argument("interpolate_grid: pilot mask is empty");
  std::vector<InterpTerm> terms(nc * ns);
  std::vector<std::size_t> times;
  for (std::size_t f = 0; f < nc; ++f) {
    times.clear();
    for (std::size_t t = 0; t < ns; ++t) {
      if (mask.is_pilot(f, t)) times.push_back(t);
    }
    if (times.empty()) {
      throw std::invalid_argument("interpolate_grid: subcarrier " + std::to_string(f) + " has no pilot");
    }
    std::size_t seg = 0;
    for (std::size_t t = 0; t < ns; ++t) {
      InterpTerm term{};
      if (t <= times.front()) {
        term = {f * ns + times.front(), f * ns + times.front(), 1.0, 0.0};
      } else if (t >= times.back()) {
        term = {f * ns + times.back(), f * ns + times.back(), 1.0, 0.0};
      } else {
        while (times[seg + 1] < t) ++seg;
        const double ta = static_cast<double>(times[seg]), tb = static_cast<double>(times[seg + 1]);
        const double w = (static_cast<double>(t) - ta) / (tb - ta);
        term = {f * ns + times[seg], f * ns + times[seg + 1], 1.0 - w, w};
      }
      terms[f * ns + t] = term;
    }
  }
  return terms;
}

}  // namespace

ResourceGrid interpolate_grid(const ResourceGrid& values, const PilotMask& mask) {
  if (values.subcarriers() != mask.subcarriers() || values.symbols() != mask.symbols()) {
    throw DimensionError("interpolate_grid: grid and mask dimensions differ");
  }
  const auto terms = interpolation_terms(mask);
  ResourceGrid out(values.subcarriers(), values.symbols(), GridRole::estimate);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto& tm = terms[i];
    out[i] = tm.wa * values[tm.a] + tm.wb * values[tm.b];
  }
  return out;
}

ChannelEstimate ls_estimate(const ResourceGrid& y, const PilotMask& mask, double sigma2) {
  if (y.subcarriers() != mask.subcarriers() || y.symbols() != mask.symbols()) {
    throw DimensionError("ls_estimate: grid and mask dimensions differ");
  }
  ResourceGrid hp(y.subcarriers(), y.symbols(), GridRole::estimate);
  std::vector<double> pvar(y.size(), 0.0);
  const std::size_t ns = mask.symbols();
  for (auto i : mask.pilot_indices()) {
    const cd xp = mask.pilot(i / ns, i % ns);
    if (std::norm(xp) == 0.0) throw std::invalid_argument("ls_estimate: zero-valued pilot symbol");
    hp[i] = y[i] / xp;
    pvar[i] = sigma2 / std::norm(xp);
  }
  const auto terms = interpolation_terms(mask);
  ChannelEstimate est{ResourceGrid(y.subcarriers(), y.symbols(), GridRole::estimate), std::vector<double>(y.size()),
                      EstimatorKind::ls};
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto& tm = terms[i];
    est.h[i] = tm.wa * hp[tm.a] + tm.wb * hp[tm.b];
    est.error_variance[i] = tm.a == tm.b ? pvar[tm.a] : tm.wa * tm.wa * pvar[tm.a] + tm.wb * tm.wb * pvar[tm.b];
  }
  return est;
}

ChannelEstimate lmmse_estimate(const ResourceGrid& y, const PilotMask& mask, const ChannelCovariance& cov,
                               double sigma2) {
  const auto np = static_cast<Eigen::Index>(cov.pilot_indices.size());
  const auto na = static_cast<Eigen::Index>(y.size());
  if (cov.pilot_pilot.rows() != np || cov.all_pilot.rows() != na || cov.all_pilot.cols() != np ||
      cov.all_diag.size() != na) {
    throw DimensionError("lmmse_estimate: covariance dimensions do not match the grid and pilot count");
  }
  const std::size_t ns = mask.symbols();
  Eigen::VectorXcd hls(np);
  for (Eigen::Index i = 0; i < np; ++i) {
    const std::size_t idx = cov.pilot_indices[static_cast<std::size_t>(i)];
    if (!mask.is_pilot_index(idx)) throw std::invalid_argument("lmmse_estimate: covariance pilot is not a pilot RE");
    hls[i] = y[idx] / mask.pilot(idx / ns, idx % ns);
  }
  // Diagonal loading keeps rank-deficient sample covariances invertible at very high SNR.
  const double loading = np > 0 ? 1e-9 * cov.pilot_pilot.diagonal().real().mean() : 0.0;
  Eigen::MatrixXcd reg = cov.pilot_pilot;
  reg.diagonal().array() += std::max(sigma2, loading);
  Eigen::LLT<Eigen::MatrixXcd> llt(reg);
  if (llt.info() != Eigen::Success) {
    throw NumericError("lmmse_estimate: regularized pilot covariance is singular");
  }
  const Eigen::VectorXcd hall = cov.all_pilot * llt.solve(hls);
  const Eigen::MatrixXcd gain_t = llt.solve(cov.all_pilot.adjoint());  // np x na
  ChannelEstimate est{ResourceGrid(y.subcarriers(), y.symbols(), GridRole::estimate), std::vector<double>(y.size()),
                      EstimatorKind::lmmse};
  for (Eigen::Index i = 0; i < na; ++i) {
    est.h[static_cast<std::size_t>(i)] = hall[i];
    const double explained = (cov.all_pilot.row(i) * gain_t.col(i)).value().real();
    est.error_variance[static_cast<std::size_t>(i)] = std::max(0.0, cov.all_diag[i] - explained);
  }
  return est;
}

ChannelEstimate perfect_estimate(const ResourceGrid& h) {
  ChannelEstimate est{h, std::vector<double>(h.size(), 0.0), EstimatorKind::perfect};
  est.h.set_role(GridRole::estimate);
  return est;
}

Equalized equalize(const ResourceGrid& y, const ChannelEstimate& est, double sigma2, EqualizerKind kind) {
  if (!y.same_shape(est.h)) throw DimensionError("equalize: received grid and estimate differ in shape");
  Equalized eq;
  eq.symbols.resize(y.size());
  eq.gain.resize(y.size());
  eq.noise_variance.resize(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    cd h = est.h[i];
    if (std::abs(h) < kChannelFloor) h = std::abs(h) > 0 ? h / std::abs(h) * kChannelFloor : cd{kChannelFloor, 0.0};
    const double h2 = std::norm(h);
    const double noise = sigma2 + est.error_variance[i];
    if (kind == EqualizerKind::zf) {
      eq.symbols[i] = y[i] / h;
      eq.gain[i] = 1.0;
      eq.noise_variance[i] = noise / h2;
    } else {
      const double denom = h2 + noise;
      eq.symbols[i] = std::conj(h) * y[i] / denom;
      eq.gain[i] = h2 / denom;
      eq.noise_variance[i] = h2 * noise / (denom * denom);
    }
  }
  return eq;
}

LlrGrid demap_equalized(const Equalized& eq, const PilotMask& mask, const Constellation& qam) {
  const unsigned m = qam.bits_per_symbol();
  LlrGrid out{mask.subcarriers(), mask.symbols(), m, std::vector<double>(mask.data_count() * m)};
  const auto& idx = mask.data_indices();
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const std::size_t i = idx[j];
    const double var = std::max(eq.noise_variance[i], 1e-300);
    qam.demap(eq.symbols[i], cd{eq.gain[i], 0.0}, var, std::span<double>(out.values).subspan(j * m, m));
  }
  return out;
}

LlrGrid perfect_csi_llr(const ResourceGrid& y, const ResourceGrid& h, double sigma2, const PilotMask& mask,
                        const Constellation& qam) {
  if (!y.same_shape(h)) throw DimensionError("perfect_csi_llr: received grid and channel differ in shape");
  const unsigned m = qam.bits_per_symbol();
  LlrGrid out{mask.subcarriers(), mask.symbols(), m, std::vector<double>(mask.data_count() * m)};
  const auto& idx = mask.data_indices();
  for (std::size_t j = 0; j < idx.size(); ++j) {
    qam.demap(y[idx[j]], h[idx[j]], sigma2, std::span<double>(out.values).subspan(j * m, m));
  }
  return out;
}

LlrGrid fuse_llrs(std::span<const LlrGrid> grids, const FusionPolicy& policy, std::span<const double> snrs) {
  if (grids.empty()) throw std::invalid_argument("fuse_llrs: no access point LLRs");
  for (const auto& g : grids) {
    if (!g.congruent(grids[0])) throw DimensionError("fuse_llrs: LLR grids differ in shape");
  }
  std::vector<double> w(grids.size(), 1.0);
  if (policy.mode == FusionMode::snr) {
    if (snrs.size() != grids.size()) throw DimensionError("fuse_llrs: one SNR per access point required");
    double total = 0;
    for (double s : snrs) {
      if (!(s >= 0)) throw std::invalid_argument("fuse_llrs: SNR weights must be non-negative");
      total += s;
    }
    for (std::size_t r = 0; r < grids.size(); ++r) w[r] = total > 0 ? snrs[r] / total : 1.0 / grids.size();
  }
  LlrGrid out = grids[0];
  for (auto& v : out.values) v *= w[0];
  for (std::size_t r = 1; r < grids.size(); ++r) {
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += w[r] * grids[r].values[i];
  }
  return out;
}

LlrGrid classical_receive(const MultiApObservation& obs, const LinkSetup& link, const ClassicalConfig& cfg,
                          const ChannelCovariance* cov) {
  std::vector<LlrGrid> per_ap;
  std::vector<double> snrs;
  per_ap.reserve(obs.n_ap());
  for (std::size_t r = 0; r < obs.n_ap(); ++r) {
    const double sigma2 = obs.noise_variance[r];
    snrs.push_back(1.0 / sigma2);
    if (cfg.estimator == EstimatorKind::perfect) {
      per_ap.push_back(perfect_csi_llr(obs.received[r], obs.channels[r], sigma2, link.mask(), link.qam()));
      continue;
    }
    ChannelEstimate est;
    if (cfg.estimator == EstimatorKind::ls) {
      est = ls_estimate(obs.received[r], link.mask(), sigma2);
    } else {
      if (!cov) throw std::invalid_argument("classical_receive: LMMSE needs a channel covariance");
      est = lmmse_estimate(obs.received[r], link.mask(), *cov, sigma2);
    }
    per_ap.push_back(demap_equalized(equalize(obs.received[r], est, sigma2, cfg.equalizer), link.mask(), link.qam()));
  }
  return fuse_llrs(per_ap, cfg.fusion, snrs);
}

std::vector<std::uint8_t> hard_decisions(const LlrGrid& llrs) {
  std::vector<std::uint8_t> bits(llrs.values.size());
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = llrs.values[i] > 0 ? 1 : 0;
  return bits;
}

}  // namespace coopnr
