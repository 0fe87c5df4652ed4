#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "coopnr/channel.hpp"
#include "coopnr/checkpoint.hpp"
#include "coopnr/link.hpp"
#include "coopnr/model.hpp"
#include "coopnr/optim.hpp"

namespace coopnr {

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainOptions {
  double clip_norm = 1.0;
  AnchorPolicy anchor = AnchorPolicy::first;
  // Drops each non-anchor AP with probability ap_dropout_p (0 disables).
  double ap_dropout_p = 0.0;
};

struct StepMetrics {
  std::uint64_t step = 0;
  double loss = 0.0;
  double rate = 0.0;
  double grad_norm = 0.0;
};

// One optimizer update on a batch of observations. Each item runs in its own
// graph; gradients are averaged in item order. `step_index` and `seed` only
// label the divergence diagnostic.
template <typename T>
StepMetrics train_step(ModelParams<T>& params, Adam<T>& opt, std::span<const MultiApObservation> batch,
                       const PilotMask& mask, const TrainOptions& opts, std::uint64_t step_index = 0,
                       std::uint64_t seed = 0);

// Loss and gradients of one observation (averaged BCE over its data bits).
template <typename T>
double observation_loss(const ModelParams<T>& params, const MultiApObservation& obs, const PilotMask& mask,
                        std::size_t anchor, std::vector<Tensor<T>>* grads);

struct TrainingSetup {
  ModelConfig model;
  TdlChannelSpec channel;
  ScenarioConfig scenario;
  double ebno_min_db = 0.0;
  double ebno_max_db = 12.0;
  std::size_t n_ap_min = 1;
  std::size_t n_ap_max = 1;
  std::size_t batch = 16;
  AdamConfig adam{};
  // Cosine decay from adam.learning_rate to final_lr_ratio of it over
  // schedule_steps steps (0 keeps the rate constant).
  std::uint64_t schedule_steps = 0;
  double final_lr_ratio = 1.0;
  TrainOptions options{};
  std::uint64_t seed = 1;
  std::size_t validation_items = 16;
};

// Generates item i of step s: random topology, target Eb/N0 and AP count,
// payload, channels and noise, all from the (seed, step, item) stream.
MultiApObservation training_observation(const TrainingSetup& setup, const LinkSetup& link, std::uint64_t step,
                                        std::size_t item);

double scheduled_learning_rate(const TrainingSetup& setup, std::uint64_t step);

class Trainer {
 public:
  Trainer(TrainingSetup setup, LinkSetup link);

  StepMetrics step();
  // Mean BMD rate over a frozen validation batch.
  double validate() const;

  std::uint64_t steps_done() const noexcept { return opt_.step_count(); }
  const ModelParams<float>& params() const noexcept { return params_; }
  const TrainingSetup& setup() const noexcept { return setup_; }
  const LinkSetup& link() const noexcept { return link_; }

  Checkpoint checkpoint() const;
  // Restores parameters, optimizer moments and step counter.
  void restore(const Checkpoint& ckpt);

 private:
  TrainingSetup setup_;
  LinkSetup link_;
  ModelParams<float> params_;
  Adam<float> opt_;
  std::vector<MultiApObservation> validation_;
};

Checkpoint make_checkpoint(const ModelParams<float>& params, const std::string& extra_metadata_json = "{}");
ModelParams<float> params_from_checkpoint(const Checkpoint& ckpt);

void write_metrics_header(std::ostream& os);
void write_metrics_row(std::ostream& os, const StepMetrics& m, double validation_rate, double wall_seconds);

extern template StepMetrics train_step<float>(ModelParams<float>&, Adam<float>&, std::span<const MultiApObservation>,
                                              const PilotMask&, const TrainOptions&, std::uint64_t, std::uint64_t);
extern template StepMetrics train_step<double>(ModelParams<double>&, Adam<double>&,
                                               std::span<const MultiApObservation>, const PilotMask&,
                                               const TrainOptions&, std::uint64_t, std::uint64_t);

}  // namespace coopnr
