#include "coopnr/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

#include "coopnr/rng.hpp"

namespace coopnr {

void ModelConfig::validate() const {
  if (d_model == 0 || heads == 0 || d_model % heads != 0) {
    throw std::invalid_argument("model: d_model (" + std::to_string(d_model) + ") must be a positive multiple of heads (" +
                                std::to_string(heads) + ")");
  }
  if (d_model % 4 != 0) throw std::invalid_argument("model: d_model must be divisible by 4");
  if (ffn_dim == 0 || head_hidden == 0) throw std::invalid_argument("model: hidden widths must be positive");
  if (bits_per_symbol == 0) throw std::invalid_argument("model: bits_per_symbol must be positive");
  if (max_aps == 0) throw std::invalid_argument("model: max_aps must be at least 1");
  if (!(sigma2_scale > 0)) throw std::invalid_argument("model: sigma2_scale must be positive");
}

std::string ModelConfig::to_json() const {
  nlohmann::json j{{"d_model", d_model},
                   {"heads", heads},
                   {"layers", layers},
                   {"ffn_dim", ffn_dim},
                   {"head_hidden", head_hidden},
                   {"bits_per_symbol", bits_per_symbol},
                   {"max_aps", max_aps},
                   {"cross_attention", cross_attention},
                   {"sigma2_shift", sigma2_shift},
                   {"sigma2_scale", sigma2_scale}};
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  ModelConfig c;
  c.d_model = j.value("d_model", c.d_model);
  c.heads = j.value("heads", c.heads);
  c.layers = j.value("layers", c.layers);
  c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
  c.head_hidden = j.value("head_hidden", c.head_hidden);
  c.bits_per_symbol = j.value("bits_per_symbol", c.bits_per_symbol);
  c.max_aps = j.value("max_aps", c.max_aps);
  c.cross_attention = j.value("cross_attention", c.cross_attention);
  c.sigma2_shift = j.value("sigma2_shift", c.sigma2_shift);
  c.sigma2_scale = j.value("sigma2_scale", c.sigma2_scale);
  c.validate();
  return c;
}

std::pair<double, double> sigma2_statistics(double lo_db, double hi_db, unsigned bits_per_symbol, double code_rate) {
  if (!(hi_db >= lo_db)) throw std::invalid_argument("sigma2_statistics: empty Eb/N0 range");
  const double c = 1.0 / (bits_per_symbol * code_rate);
  if (hi_db == lo_db) return {c * std::pow(10.0, -lo_db / 10.0), 1.0};
  // sigma2 = c * exp(-a x) with x uniform on [lo, hi], a = ln(10)/10.
  const double a = std::log(10.0) / 10.0;
  const double w = hi_db - lo_db;
  const double m1 = c * (std::exp(-a * lo_db) - std::exp(-a * hi_db)) / (a * w);
  const double m2 = c * c * (std::exp(-2 * a * lo_db) - std::exp(-2 * a * hi_db)) / (2 * a * w);
  return {m1, std::sqrt(std::max(m2 - m1 * m1, 1e-30))};
}

namespace {

template <typename T>
Tensor<T> uniform_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  Tensor<T> t(Shape{rows, cols});
  for (auto& v : t.storage()) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

template <typename T>
Tensor<T> vec(std::size_t n, T fill = T{0}) {
  return Tensor<T>(Shape{n}, fill);
}

template <typename T>
ModelParams<T> build(const ModelConfig& cfg, Rng* rng) {
  cfg.validate();
  const std::size_t d = cfg.d_model;
  auto mat = [&](std::size_t r, std::size_t c) { return rng ? uniform_matrix<T>(r, c, *rng) : Tensor<T>(Shape{r, c}); };
  ModelParams<T> p;
  p.config = cfg;
  p.embed_w = mat(3, d);
  p.embed_b = vec<T>(d);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    EncoderLayerParams<T> L;
    L.ln1_gain = vec<T>(d, T{1});
    L.ln1_bias = vec<T>(d);
    L.wq = mat(d, d);
    L.bq = vec<T>(d);
    L.wk = mat(d, d);
    L.bk = vec<T>(d);
    L.wv = mat(d, d);
    L.bv = vec<T>(d);
    L.wo = mat(d, d);
    L.bo = vec<T>(d);
    L.ln2_gain = vec<T>(d, T{1});
    L.ln2_bias = vec<T>(d);
    L.ffn_w1 = mat(d, cfg.ffn_dim);
    L.ffn_b1 = vec<T>(cfg.ffn_dim);
    L.ffn_w2 = mat(cfg.ffn_dim, d);
    L.ffn_b2 = vec<T>(d);
    p.layers.push_back(std::move(L));
  }
  if (cfg.cross_attention) {
    p.xq = mat(d, d);
    p.xbq = vec<T>(d);
    p.xk = mat(d, d);
    p.xbk = vec<T>(d);
    p.xv = mat(d, d);
    p.xbv = vec<T>(d);
    p.xo = mat(d, d);
    p.xbo = vec<T>(d);
    p.xln_gain = vec<T>(d, T{1});
    p.xln_bias = vec<T>(d);
  }
  p.head_w1 = mat(d, cfg.head_hidden);
  p.head_b1 = vec<T>(cfg.head_hidden);
  p.head_w2 = mat(cfg.head_hidden, cfg.bits_per_symbol);
  p.head_b2 = vec<T>(cfg.bits_per_symbol);
  return p;
}

template <typename P, typename Self>
std::vector<std::pair<std::string, P>> enumerate(Self& s) {
  std::vector<std::pair<std::string, P>> out;
  out.emplace_back("embed/w", &s.embed_w);
  out.emplace_back("embed/b", &s.embed_b);
  for (std::size_t l = 0; l < s.layers.size(); ++l) {
    auto& L = s.layers[l];
    const std::string pre = "encoder/" + std::to_string(l) + "/";
    out.emplace_back(pre + "ln1/gain", &L.ln1_gain);
    out.emplace_back(pre + "ln1/bias", &L.ln1_bias);
    out.emplace_back(pre + "attn/wq", &L.wq);
    out.emplace_back(pre + "attn/bq", &L.bq);
    out.emplace_back(pre + "attn/wk", &L.wk);
    out.emplace_back(pre + "attn/bk", &L.bk);
    out.emplace_back(pre + "attn/wv", &L.wv);
    out.emplace_back(pre + "attn/bv", &L.bv);
    out.emplace_back(pre + "attn/wo", &L.wo);
    out.emplace_back(pre + "attn/bo", &L.bo);
    out.emplace_back(pre + "ln2/gain", &L.ln2_gain);
    out.emplace_back(pre + "ln2/bias", &L.ln2_bias);
    out.emplace_back(pre + "ffn/w1", &L.ffn_w1);
    out.emplace_back(pre + "ffn/b1", &L.ffn_b1);
    out.emplace_back(pre + "ffn/w2", &L.ffn_w2);
    out.emplace_back(pre + "ffn/b2", &L.ffn_b2);
  }
  if (s.config.cross_attention) {
    out.emplace_back("fusion/wq", &s.xq);
    out.emplace_back("fusion/bq", &s.xbq);
    out.emplace_back("fusion/wk", &s.xk);
    out.emplace_back("fusion/bk", &s.xbk);
    out.emplace_back("fusion/wv", &s.xv);
    out.emplace_back("fusion/bv", &s.xbv);
    out.emplace_back("fusion/wo", &s.xo);
    out.emplace_back("fusion/bo", &s.xbo);
    out.emplace_back("fusion/ln/gain", &s.xln_gain);
    out.emplace_back("fusion/ln/bias", &s.xln_bias);
  }
  out.emplace_back("head/w1", &s.head_w1);
  out.emplace_back("head/b1", &s.head_b1);
  out.emplace_back("head/w2", &s.head_w2);
  out.emplace_back("head/b2", &s.head_b2);
  return out;
}

}  // namespace

template <typename T>
ModelParams<T> ModelParams<T>::initialize(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(seed, Stream::init);
  return build<T>(cfg, &rng);
}

template <typename T>
ModelParams<T> ModelParams<T>::zeros(const ModelConfig& cfg) {
  return build<T>(cfg, nullptr);
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> ModelParams<T>::named() {
  return enumerate<Tensor<T>*>(*this);
}

template <typename T>
std::vector<std::pair<std::string, const Tensor<T>*>> ModelParams<T>::named() const {
  return enumerate<const Tensor<T>*>(*this);
}

template <typename T>
template <typename U>
ModelParams<U> ModelParams<T>::cast() const {
  ModelParams<U> out = ModelParams<U>::zeros(config);
  auto src = named();
  auto dst = out.named();
  for (std::size_t i = 0; i < src.size(); ++i) *dst[i].second = src[i].second->template cast<U>();
  return out;
}

std::size_t count_params(const ModelConfig& cfg) {
  const auto p = ModelParams<float>::zeros(cfg);
  std::size_t n = 0;
  for (const auto& [name, t] : p.named()) n += t->size();
  return n;
}

template <typename T>
Tensor<T> positional_encoding_2d(std::size_t nc, std::size_t ns, std::size_t d) {
  if (d == 0 || d % 4 != 0) {
    throw std::invalid_argument("positional encoding: d_model " + std::to_string(d) + " is not divisible by 4");
  }
  const std::size_t half = d / 2;
  Tensor<T> pe(Shape{nc * ns, d});
  for (std::size_t f = 0; f < nc; ++f) {
    for (std::size_t t = 0; t < ns; ++t) {
      T* row = pe.data().data() + (f * ns + t) * d;
      for (std::size_t i = 0; i < half / 2; ++i) {
        const double freq = std::pow(1e4, -2.0 * static_cast<double>(i) / static_cast<double>(half));
        row[2 * i] = static_cast<T>(std::sin(static_cast<double>(f) * freq));
        row[2 * i + 1] = static_cast<T>(std::cos(static_cast<double>(f) * freq));
        row[half + 2 * i] = static_cast<T>(std::sin(static_cast<double>(t) * freq));
        row[half + 2 * i + 1] = static_cast<T>(std::cos(static_cast<double>(t) * freq));
      }
    }
  }
  return pe;
}

template <typename T>
std::vector<Tensor<T>> tokenize(const MultiApObservation& obs, const ModelConfig& cfg) {
  if (obs.n_ap() == 0) throw std::invalid_argument("tokenize: observation has no access points");
  if (obs.n_ap() > cfg.max_aps) {
    throw std::invalid_argument("tokenize: " + std::to_string(obs.n_ap()) + " access points exceed the model's " +
                                std::to_string(cfg.max_aps));
  }
  std::vector<Tensor<T>> out;
  for (std::size_t r = 0; r < obs.n_ap(); ++r) {
    const auto& y = obs.received[r];
    Tensor<T> u(Shape{y.size(), 3});
    for (std::size_t i = 0; i < y.size(); ++i) {
      u[3 * i] = static_cast<T>(y[i].real());
      u[3 * i + 1] = static_cast<T>(y[i].imag());
      u[3 * i + 2] = static_cast<T>(obs.noise_variance[r]);
    }
    out.push_back(std::move(u));
  }
  return out;
}

template <typename T>
Tensor<T> standardize_tokens(const Tensor<T>& raw, const ModelConfig& cfg) {
  Tensor<T> u = raw;
  for (std::size_t i = 2; i < u.size(); i += 3) {
    u[i] = static_cast<T>((static_cast<double>(u[i]) - cfg.sigma2_shift) / cfg.sigma2_scale);
  }
  return u;
}

template <typename T>
Var embed_tokens(Graph<T>& g, const ModelParams<T>& p, std::span<const Tensor<T>> tokens, const Tensor<T>& posenc) {
  if (tokens.empty()) throw std::invalid_argument("embed_tokens: no access points");
  const std::size_t n = tokens[0].dim(0);
  const std::size_t d = p.config.d_model;
  if (posenc.shape() != Shape{n, d}) {
    throw DimensionError("embed_tokens: positional encoding " + shape_string(posenc.shape()) + " for " +
                         std::to_string(n) + " tokens");
  }
  std::vector<Var> us, pes;
  const Var pe = g.constant(posenc);
  for (const auto& u : tokens) {
    us.push_back(g.constant(u));
    pes.push_back(pe);
  }
  const Var u = g.stack(us, 0);  // [R, N, 3]
  const Var z = g.add_bias(g.matmul(u, g.parameter(p.embed_w)), g.parameter(p.embed_b));
  return g.add(z, g.stack(pes, 0));
}

namespace {

// x: [B, N, d] -> [B, H, N, dk]
template <typename T>
Var split_heads(Graph<T>& g, Var x, std::size_t b, std::size_t n, std::size_t h, std::size_t dk) {
  return g.permute(g.reshape(x, Shape{b, n, h, dk}), {0, 2, 1, 3});
}

template <typename T>
Var linear(Graph<T>& g, Var x, const Tensor<T>& w, const Tensor<T>& b) {
  return g.add_bias(g.matmul(x, g.parameter(w)), g.parameter(b));
}

}  // namespace

template <typename T>
Var encoder_forward(Graph<T>& g, const ModelParams<T>& p, Var z) {
  const Shape s = g.value(z).shape();
  if (s.size() != 3 || s[2] != p.config.d_model) {
    throw DimensionError("encoder_forward expects [R, N, d_model], got " + shape_string(s));
  }
  const std::size_t r = s[0], n = s[1], d = s[2];
  const std::size_t h = p.config.heads, dk = p.config.head_dim();
  const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dk)));
  for (const auto& L : p.layers) {
    const Var x = g.layer_norm(z, g.parameter(L.ln1_gain), g.parameter(L.ln1_bias));
    const Var q = split_heads(g, linear(g, x, L.wq, L.bq), r, n, h, dk);
    const Var kt = g.permute(g.reshape(linear(g, x, L.wk, L.bk), Shape{r, n, h, dk}), {0, 2, 3, 1});
    const Var v = split_heads(g, linear(g, x, L.wv, L.bv), r, n, h, dk);
    const Var attn = g.softmax_rows(g.scale(g.matmul(q, kt), inv_sqrt));  // [R, H, N, N]
    const Var ctx = g.reshape(g.permute(g.matmul(attn, v), {0, 2, 1, 3}), Shape{r, n, d});
    z = g.add(z, linear(g, ctx, L.wo, L.bo));
    const Var y = g.layer_norm(z, g.parameter(L.ln2_gain), g.parameter(L.ln2_bias));
    z = g.add(z, linear(g, g.relu(linear(g, y, L.ffn_w1, L.ffn_b1)), L.ffn_w2, L.ffn_b2));
  }
  return z;
}

template <typename T>
Var cross_attention_fuse(Graph<T>& g, const ModelParams<T>& p, Var z, std::size_t anchor) {
  const Shape s = g.value(z).shape();
  if (s.size() != 3 || s[0] == 0) throw std::invalid_argument("cross_attention_fuse: empty access point list");
  const std::size_t r = s[0], n = s[1], d = s[2];
  if (anchor >= r) throw std::invalid_argument("cross_attention_fuse: anchor index out of range");
  const std::size_t anchor_row = anchor;
  const Var za = g.reshape(g.gather_rows(g.reshape(z, Shape{r, n * d}), std::span(&anchor_row, 1)), Shape{n, d});
  if (!p.config.cross_attention) return za;
  const std::size_t h = p.config.heads, dk = p.config.head_dim();
  const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dk)));
  const Var q = g.reshape(linear(g, za, p.xq, p.xbq), Shape{n, h, 1, dk});
  const Var kt = g.permute(g.reshape(linear(g, z, p.xk, p.xbk), Shape{r, n, h, dk}), {1, 2, 3, 0});  // [N,H,dk,R]
  const Var v = g.permute(g.reshape(linear(g, z, p.xv, p.xbv), Shape{r, n, h, dk}), {1, 2, 0, 3});   // [N,H,R,dk]
  const Var attn = g.softmax_rows(g.scale(g.matmul(q, kt), inv_sqrt));                                // [N,H,1,R]
  const Var ctx = g.reshape(g.matmul(attn, v), Shape{n, d});
  const Var a = linear(g, ctx, p.xo, p.xbo);
  return g.layer_norm(g.add(za, a), g.parameter(p.xln_gain), g.parameter(p.xln_bias));
}

template <typename T>
Var head_forward(Graph<T>& g, const ModelParams<T>& p, Var fused) {
  return linear(g, g.relu(linear(g, fused, p.head_w1, p.head_b1)), p.head_w2, p.head_b2);
}

template <typename T>
Var model_forward(Graph<T>& g, const ModelParams<T>& p, std::span<const Tensor<T>> tokens, const Tensor<T>& posenc,
                  std::size_t anchor) {
  if (tokens.size() > p.config.max_aps) {
    throw std::invalid_argument("model_forward: " + std::to_string(tokens.size()) + " access points exceed the model's " +
                                std::to_string(p.config.max_aps));
  }
  const Var z = encoder_forward(g, p, embed_tokens(g, p, tokens, posenc));
  return head_forward(g, p, cross_attention_fuse(g, p, z, anchor));
}

template <typename T>
Var data_logits(Graph<T>& g, Var logits, const PilotMask& mask) {
  const Shape s = g.value(logits).shape();
  if (s.size() != 2 || s[0] != mask.subcarriers() * mask.symbols()) {
    throw DimensionError("data_logits: logits " + shape_string(s) + " do not cover the grid");
  }
  const auto& idx = mask.data_indices();
  return g.reshape(g.gather_rows(logits, idx), Shape{idx.size() * s[1]});
}

BmdResult bmd_loss(std::span<const double> llrs, std::span<const std::uint8_t> bits) {
  if (llrs.size() != bits.size()) {
    throw DimensionError("bmd_loss: " + std::to_string(llrs.size()) + " LLRs for " + std::to_string(bits.size()) +
                         " bits");
  }
  if (llrs.empty()) throw DimensionError("bmd_loss: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < llrs.size(); ++i) {
    const double x = -(bits[i] ? 1.0 : -1.0) * llrs[i];
    acc += std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
  }
  BmdResult r;
  r.loss = acc / (static_cast<double>(llrs.size()) * std::numbers::ln2);
  r.rate = 1.0 - r.loss;
  return r;
}

std::size_t select_anchor(const MultiApObservation& obs, AnchorPolicy policy) {
  if (policy == AnchorPolicy::first || obs.n_ap() == 0) return 0;
  return static_cast<std::size_t>(std::min_element(obs.noise_variance.begin(), obs.noise_variance.end()) -
                                  obs.noise_variance.begin());
}

LlrGrid infer_llrs(const ModelParams<float>& params, const MultiApObservation& obs, const PilotMask& mask,
                   const InferenceOptions& opts) {
  if (obs.n_ap() > params.config.max_aps) {
    throw std::invalid_argument("infer_llrs: " + std::to_string(obs.n_ap()) + " access points exceed the trained " +
                                std::to_string(params.config.max_aps));
  }
  const std::size_t m = params.config.bits_per_symbol;
  auto raw = tokenize<float>(obs, params.config);
  std::vector<Tensor<float>> tokens;
  for (auto& u : raw) {
    for (std::size_t i = 2; i < u.size(); i += 3) u[i] = static_cast<float>(u[i] * opts.sigma2_mismatch);
    tokens.push_back(standardize_tokens(u, params.config));
  }
  const auto pe = positional_encoding_2d<float>(mask.subcarriers(), mask.symbols(), params.config.d_model);
  Graph<float> g;
  const Var logits = data_logits(g, model_forward<float>(g, params, tokens, pe, select_anchor(obs, opts.anchor)), mask);
  const auto& v = g.value(logits);
  LlrGrid out{mask.subcarriers(), mask.symbols(), m, std::vector<double>(v.size())};
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.values[i] = std::clamp(static_cast<double>(v[i]), -opts.llr_clamp, opts.llr_clamp);
  }
  return out;
}

#define COOPNR_MODEL_INSTANTIATE(T)                                                                              \
  template struct ModelParams<T>;                                                                              \
  template Tensor<T> positional_encoding_2d<T>(std::size_t, std::size_t, std::size_t);                         \
  template std::vector<Tensor<T>> tokenize<T>(const MultiApObservation&, const ModelConfig&);                  \
  template Tensor<T> standardize_tokens<T>(const Tensor<T>&, const ModelConfig&);                              \
  template Var embed_tokens<T>(Graph<T>&, const ModelParams<T>&, std::span<const Tensor<T>>, const Tensor<T>&); \
  template Var encoder_forward<T>(Graph<T>&, const ModelParams<T>&, Var);                                      \
  template Var cross_attention_fuse<T>(Graph<T>&, const ModelParams<T>&, Var, std::size_t);                    \
  template Var head_forward<T>(Graph<T>&, const ModelParams<T>&, Var);                                         \
  template Var model_forward<T>(Graph<T>&, const ModelParams<T>&, std::span<const Tensor<T>>, const Tensor<T>&, \
                                std::size_t);                                                                  \
  template Var data_logits<T>(Graph<T>&, Var, const PilotMask&);

COOPNR_MODEL_INSTANTIATE(float)
COOPNR_MODEL_INSTANTIATE(double)
#undef COOPNR_MODEL_INSTANTIATE

template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<float> ModelParams<double>::cast<float>() const;
template ModelParams<float> ModelParams<float>::cast<float>() const;
template ModelParams<double> ModelParams<double>::cast<double>() const;

}  // namespace coopnr
