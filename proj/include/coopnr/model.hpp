#pragma once

// Cross-attention transformer receiver.
//
// Per AP, every resource element becomes one token u = [Re Y, Im Y, sigma2].
// A shared pre-norm encoder processes each AP's token grid, an anchor-query
// cross-attention fuses the APs independently per RE, and an MLP head emits
// m LLRs per RE.

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "coopnr/autodiff.hpp"
#include "coopnr/classical.hpp"
#include "coopnr/link.hpp"
#include "coopnr/tensor.hpp"

namespace coopnr {

struct ModelConfig {
  std::size_t d_model = 64;
  std::size_t heads = 8;
  std::size_t layers = 4;
  std::size_t ffn_dim = 128;
  std::size_t head_hidden = 128;
  std::size_t bits_per_symbol = 6;
  std::size_t max_aps = 3;
  bool cross_attention = true;
  // Fixed affine standardization of the sigma2 token feature.
  double sigma2_shift = 0.0;
  double sigma2_scale = 1.0;

  std::size_t head_dim() const noexcept { return d_model / heads; }
  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
  bool operator==(const ModelConfig&) const = default;
};

// Mean and standard deviation of sigma2 for Eb/N0 uniform in [lo, hi] dB.
std::pair<double, double> sigma2_statistics(double ebno_lo_db, double ebno_hi_db, unsigned bits_per_symbol,
                                            double code_rate);

template <typename T>
struct EncoderLayerParams {
  Tensor<T> ln1_gain, ln1_bias;
  Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor<T> ln2_gain, ln2_bias;
  Tensor<T> ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

template <typename T>
struct ModelParams {
  ModelConfig config;
  Tensor<T> embed_w, embed_b;
  std::vector<EncoderLayerParams<T>> layers;
  Tensor<T> xq, xbq, xk, xbk, xv, xbv, xo, xbo, xln_gain, xln_bias;  // empty when fusion is off
  Tensor<T> head_w1, head_b1, head_w2, head_b2;

  // Scaled-uniform fan-in init for matrices, zero biases, unit LN gains.
  static ModelParams initialize(const ModelConfig& cfg, std::uint64_t seed);
  static ModelParams zeros(const ModelConfig& cfg);

  // Stable (name, tensor) enumeration used for checkpoints and optimizers.
  std::vector<std::pair<std::string, Tensor<T>*>> named();
  std::vector<std::pair<std::string, const Tensor<T>*>> named() const;

  template <typename U>
  ModelParams<U> cast() const;
};

std::size_t count_params(const ModelConfig& cfg);

// [N_c * N_s, d_model]; row f * N_s + t holds pi_{f,t}.
template <typename T>
Tensor<T> positional_encoding_2d(std::size_t subcarriers, std::size_t symbols, std::size_t d_model);

// Raw tokens [N_c * N_s, 3] per AP: (Re Y, Im Y, sigma2).
template <typename T>
std::vector<Tensor<T>> tokenize(const MultiApObservation& obs, const ModelConfig& cfg);

// Applies the sigma2 standardization to raw tokens.
template <typename T>
Tensor<T> standardize_tokens(const Tensor<T>& raw, const ModelConfig& cfg);

// z0 = u W_e + b_e + pi, stacked as [R, N, d].
template <typename T>
Var embed_tokens(Graph<T>& g, const ModelParams<T>& p, std::span<const Tensor<T>> tokens, const Tensor<T>& posenc);

template <typename T>
Var encoder_forward(Graph<T>& g, const ModelParams<T>& p, Var z);

// z: [R, N, d] -> fused [N, d] with AP `anchor` as query.
template <typename T>
Var cross_attention_fuse(Graph<T>& g, const ModelParams<T>& p, Var z, std::size_t anchor);

// fused [N, d] -> logits [N, m].
template <typename T>
Var head_forward(Graph<T>& g, const ModelParams<T>& p, Var fused);

// Full forward pass on standardized tokens; returns logits [N, m].
template <typename T>
Var model_forward(Graph<T>& g, const ModelParams<T>& p, std::span<const Tensor<T>> tokens, const Tensor<T>& posenc,
                  std::size_t anchor);

// Logits of the data REs in fill order, flattened to [data_count * m].
template <typename T>
Var data_logits(Graph<T>& g, Var logits, const PilotMask& mask);

struct BmdResult {
  double loss = 0.0;
  double rate = 0.0;
};

// loss = (1/(n ln 2)) sum ln(1 + exp(-s_i L_i)), s_i = 2 c_i - 1; rate = 1 - loss.
BmdResult bmd_loss(std::span<const double> llrs, std::span<const std::uint8_t> bits);

enum class AnchorPolicy { first, highest_snr };

struct InferenceOptions {
  AnchorPolicy anchor = AnchorPolicy::first;
  // Multiplies the sigma2 fed to the network (1 = genie value).
  double sigma2_mismatch = 1.0;
  double llr_clamp = 20.0;
};

std::size_t select_anchor(const MultiApObservation& obs, AnchorPolicy policy);

LlrGrid infer_llrs(const ModelParams<float>& params, const MultiApObservation& obs, const PilotMask& mask,
                   const InferenceOptions& opts = {});

extern template struct ModelParams<float>;
extern template struct ModelParams<double>;

}  // namespace coopnr
