#include "coopnr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include <json.hpp>

#include "coopnr/rng.hpp"

namespace coopnr {

namespace {

std::vector<Shape> param_shapes(const ModelParams<float>& p) {
  std::vector<Shape> shapes;
  for (const auto& [name, t] : p.named()) shapes.push_back(t->shape());
  return shapes;
}

MultiApObservation generate_item(const TrainingSetup& setup, const LinkSetup& link, Rng& rng) {
  ScenarioConfig sc = setup.scenario;
  sc.target_ebno_db = rng.uniform(setup.ebno_min_db, setup.ebno_max_db);
  const auto span = setup.n_ap_max - setup.n_ap_min + 1;
  sc.n_ap = setup.n_ap_min + static_cast<std::size_t>(rng.next() % span);
  sc.link_ebno_override_db.reset();
  const auto budget = sample_scenario(sc, rng);
  const auto info = random_bits(link.layout().info_bits(), rng);
  return make_observation(link, setup.channel, sc, budget, info, rng);
}

// Keeps the anchor and drops each other AP with probability p.
MultiApObservation drop_aps(const MultiApObservation& obs, std::size_t anchor, double p, Rng& rng) {
  MultiApObservation out = obs;
  out.received.clear();
  out.noise_variance.clear();
  out.channels.clear();
  out.noise_seeds.clear();
  out.link_ebno_db.clear();
  for (std::size_t r = 0; r < obs.n_ap(); ++r) {
    const bool keep = r == anchor || rng.uniform() >= p;
    if (!keep) continue;
    out.received.push_back(obs.received[r]);
    out.noise_variance.push_back(obs.noise_variance[r]);
    out.channels.push_back(obs.channels[r]);
    out.noise_seeds.push_back(obs.noise_seeds[r]);
    out.link_ebno_db.push_back(obs.link_ebno_db[r]);
  }
  return out;
}

}  // namespace

template <typename T>
double observation_loss(const ModelParams<T>& params, const MultiApObservation& obs, const PilotMask& mask,
                        std::size_t anchor, std::vector<Tensor<T>>* grads) {
  const auto& cfg = params.config;
  const auto raw = tokenize<T>(obs, cfg);
  std::vector<Tensor<T>> tokens;
  for (const auto& u : raw) tokens.push_back(standardize_tokens(u, cfg));
  const auto pe = positional_encoding_2d<T>(mask.subcarriers(), mask.symbols(), cfg.d_model);
  const std::size_t m = cfg.bits_per_symbol;
  const auto& idx = mask.data_indices();
  if (obs.coded_bits.size() != idx.size() * m) {
    throw DimensionError("observation_loss: " + std::to_string(obs.coded_bits.size()) + " coded bits for " +
                         std::to_string(idx.size()) + " data REs");
  }
  std::vector<T> signs(obs.coded_bits.size());
  for (std::size_t i = 0; i < signs.size(); ++i) signs[i] = obs.coded_bits[i] ? T{1} : T{-1};

  Graph<T> g;
  const Var logits = data_logits(g, model_forward<T>(g, params, tokens, pe, anchor), mask);
  const Var loss = g.bit_cross_entropy(logits, signs);
  const double value = static_cast<double>(g.value(loss)[0]);
  if (grads) {
    g.backward(loss);
    grads->clear();
    for (const auto& [name, t] : params.named()) grads->push_back(g.grad_of(*t));
  }
  return value;
}

template <typename T>
StepMetrics train_step(ModelParams<T>& params, Adam<T>& opt, std::span<const MultiApObservation> batch,
                       const PilotMask& mask, const TrainOptions& opts, std::uint64_t step_index, std::uint64_t seed) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  auto named = params.named();
  std::vector<Tensor<T>> total;
  for (const auto& [name, t] : named) total.emplace_back(t->shape());
  double loss_sum = 0.0;
  std::vector<Tensor<T>> grads;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& item = batch[i];
    const std::size_t anchor = select_anchor(item, opts.anchor);
    double loss;
    if (opts.ap_dropout_p > 0 && item.n_ap() > 1) {
      Rng rng(seed, Stream::dropout, {step_index, i});
      const auto kept = drop_aps(item, anchor, opts.ap_dropout_p, rng);
      loss = observation_loss(params, kept, mask, select_anchor(kept, opts.anchor), &grads);
    } else {
      loss = observation_loss(params, item, mask, anchor, &grads);
    }
    if (!std::isfinite(loss)) {
      throw TrainingDiverged("non-finite loss at step " + std::to_string(step_index) + ", batch item " +
                             std::to_string(i) + ", seed " + std::to_string(seed));
    }
    loss_sum += loss;
    for (std::size_t k = 0; k < total.size(); ++k) {
      auto dst = total[k].data();
      auto src = grads[k].data();
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
  }
  const T inv = static_cast<T>(1.0 / static_cast<double>(batch.size()));
  for (auto& t : total) {
    for (auto& v : t.storage()) v *= inv;
  }
  StepMetrics m;
  m.grad_norm = clip_global_norm<T>(total, opts.clip_norm);
  if (!std::isfinite(m.grad_norm)) {
    throw TrainingDiverged("non-finite gradient norm at step " + std::to_string(step_index) + ", seed " +
                           std::to_string(seed));
  }
  std::vector<Tensor<T>*> ptrs;
  for (auto& [name, t] : named) ptrs.push_back(t);
  opt.step(ptrs, total);
  m.step = opt.step_count();
  m.loss = loss_sum / static_cast<double>(batch.size());
  m.rate = 1.0 - m.loss;
  return m;
}

MultiApObservation training_observation(const TrainingSetup& setup, const LinkSetup& link, std::uint64_t step,
                                        std::size_t item) {
  Rng rng(setup.seed, Stream::training, {step, item});
  return generate_item(setup, link, rng);
}

Trainer::Trainer(TrainingSetup setup, LinkSetup link)
    : setup_(std::move(setup)),
      link_(std::move(link)),
      params_(ModelParams<float>::initialize(setup_.model, setup_.seed)),
      opt_(setup_.adam, param_shapes(params_)) {
  if (setup_.n_ap_min == 0 || setup_.n_ap_max < setup_.n_ap_min || setup_.n_ap_max > setup_.model.max_aps) {
    throw std::invalid_argument("training: AP count range must satisfy 1 <= min <= max <= model max_aps");
  }
  if (setup_.batch == 0) throw std::invalid_argument("training: batch size must be positive");
  if (setup_.model.bits_per_symbol != link_.bits_per_symbol()) {
    throw std::invalid_argument("training: model bits_per_symbol does not match the link's modulation");
  }
  for (std::size_t i = 0; i < setup_.validation_items; ++i) {
    Rng rng(setup_.seed, Stream::validation, {i});
    validation_.push_back(generate_item(setup_, link_, rng));
  }
}

double scheduled_learning_rate(const TrainingSetup& setup, std::uint64_t step) {
  const double lr = setup.adam.learning_rate;
  if (setup.schedule_steps == 0) return lr;
  const double progress = std::min(1.0, static_cast<double>(step) / static_cast<double>(setup.schedule_steps));
  const double lo = lr * setup.final_lr_ratio;
  return lo + 0.5 * (lr - lo) * (1.0 + std::cos(std::numbers::pi * progress));
}

StepMetrics Trainer::step() {
  const std::uint64_t s = opt_.step_count();
  opt_.set_learning_rate(scheduled_learning_rate(setup_, s));
  std::vector<MultiApObservation> batch;
  batch.reserve(setup_.batch);
  for (std::size_t i = 0; i < setup_.batch; ++i) batch.push_back(training_observation(setup_, link_, s, i));
  return train_step<float>(params_, opt_, batch, link_.mask(), setup_.options, s, setup_.seed);
}

double Trainer::validate() const {
  if (validation_.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& obs : validation_) {
    acc += 1.0 - observation_loss<float>(params_, obs, link_.mask(), select_anchor(obs, setup_.options.anchor),
                                         nullptr);
  }
  return acc / static_cast<double>(validation_.size());
}

Checkpoint make_checkpoint(const ModelParams<float>& params, const std::string& extra_metadata_json) {
  Checkpoint ck;
  nlohmann::json meta = nlohmann::json::parse(extra_metadata_json);
  meta["model"] = nlohmann::json::parse(params.config.to_json());
  ck.metadata = meta.dump();
  for (const auto& [name, t] : params.named()) ck.tensors.push_back({name, *t});
  return ck;
}

ModelParams<float> params_from_checkpoint(const Checkpoint& ckpt) {
  const auto meta = nlohmann::json::parse(ckpt.metadata);
  if (!meta.contains("model")) throw FormatError("checkpoint metadata has no model configuration");
  auto params = ModelParams<float>::zeros(ModelConfig::from_json(meta["model"].dump()));
  for (auto& [name, t] : params.named()) {
    const Tensor<float>* src = ckpt.find(name);
    if (!src) throw FormatError("checkpoint is missing tensor '" + name + "'");
    if (src->shape() != t->shape()) {
      throw FormatError("checkpoint tensor '" + name + "' has shape " + shape_string(src->shape()) + ", expected " +
                        shape_string(t->shape()));
    }
    *t = *src;
  }
  return params;
}

Checkpoint Trainer::checkpoint() const {
  nlohmann::json extra{{"adam_step", opt_.step_count()}, {"train_seed", setup_.seed}};
  Checkpoint ck = make_checkpoint(params_, extra.dump());
  const auto named = params_.named();
  for (std::size_t i = 0; i < named.size(); ++i) {
    ck.tensors.push_back({"adam/m/" + named[i].first, opt_.first_moments()[i]});
    ck.tensors.push_back({"adam/v/" + named[i].first, opt_.second_moments()[i]});
  }
  return ck;
}

void Trainer::restore(const Checkpoint& ckpt) {
  auto params = params_from_checkpoint(ckpt);
  if (!(params.config == setup_.model)) throw FormatError("checkpoint model configuration differs from the setup");
  const auto meta = nlohmann::json::parse(ckpt.metadata);
  const std::uint64_t steps = meta.value("adam_step", std::uint64_t{0});
  std::vector<Tensor<float>> m, v;
  for (const auto& [name, t] : params.named()) {
    const auto* mt = ckpt.find("adam/m/" + name);
    const auto* vt = ckpt.find("adam/v/" + name);
    if (!mt || !vt) throw FormatError("checkpoint lacks optimizer state for '" + name + "'");
    m.push_back(*mt);
    v.push_back(*vt);
  }
  opt_.restore(steps, std::move(m), std::move(v));
  params_ = std::move(params);
}

void write_metrics_header(std::ostream& os) { os << "step,loss,r_bmd,grad_norm,validation_r_bmd,wall_s\n"; }

void write_metrics_row(std::ostream& os, const StepMetrics& m, double validation_rate, double wall_seconds) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%llu,%.9g,%.9g,%.9g,%.9g,%.3f\n", static_cast<unsigned long long>(m.step), m.loss,
                m.rate, m.grad_norm, validation_rate, wall_seconds);
  os << buf;
}

template double observation_loss<float>(const ModelParams<float>&, const MultiApObservation&, const PilotMask&,
                                        std::size_t, std::vector<Tensor<float>>*);
template double observation_loss<double>(const ModelParams<double>&, const MultiApObservation&, const PilotMask&,
                                         std::size_t, std::vector<Tensor<double>>*);
template StepMetrics train_step<float>(ModelParams<float>&, Adam<float>&, std::span<const MultiApObservation>,
                                       const PilotMask&, const TrainOptions&, std::uint64_t, std::uint64_t);
template StepMetrics train_step<double>(ModelParams<double>&, Adam<double>&, std::span<const MultiApObservation>,
                                        const PilotMask&, const TrainOptions&, std::uint64_t, std::uint64_t);

}  // namespace coopnr
