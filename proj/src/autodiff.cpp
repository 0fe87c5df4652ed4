#include "coopnr/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace coopnr {
namespace {

// C[M,N] += A[M,K] * B[K,N]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// dA[M,K] += dC[M,N] * B[K,N]^T
template <typename T>
void gemm_nt(const T* dc, const T* b, T* da, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* drow = dc + i * n;
    T* arow = da + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T* brow = b + p * n;
      T s = 0;
      for (std::size_t j = 0; j < n; ++j) s += drow[j] * brow[j];
      arow[p] += s;
    }
  }
}

// dB[K,N] += A[M,K]^T * dC[M,N]
template <typename T>
void gemm_tn(const T* a, const T* dc, T* db, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    const T* drow = dc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      T* brow = db + p * n;
      for (std::size_t j = 0; j < n; ++j) brow[j] += av * drow[j];
    }
  }
}

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> st(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) st[i - 1] = st[i] * shape[i];
  return st;
}

// Visits (out_index, in_index) pairs of a permutation out[i...] = in[axes...].
template <typename F>
void for_each_permuted(const Shape& in_shape, const std::vector<std::size_t>& axes, F&& f) {
  const std::size_t rank = in_shape.size();
  const auto in_st = strides_of(in_shape);
  Shape out_shape(rank);
  std::vector<std::size_t> step(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = in_shape[axes[i]];
    step[i] = in_st[axes[i]];
  }
  const std::size_t total = shape_size(in_shape);
  std::vector<std::size_t> counter(rank, 0);
  std::size_t in_idx = 0;
  for (std::size_t out_idx = 0; out_idx < total; ++out_idx) {
    f(out_idx, in_idx);
    for (std::size_t d = rank; d-- > 0;) {
      if (++counter[d] < out_shape[d]) {
        in_idx += step[d];
        break;
      }
      in_idx -= step[d] * (out_shape[d] - 1);
      counter[d] = 0;
    }
  }
}

}  // namespace

template <typename T>
Var Graph<T>::push(Tensor<T> value, bool needs_grad, Backprop backprop) {
  if (backward_done_) throw UsageError("graph already differentiated; build a fresh graph per pass");
  Node n;
  n.owned = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename T>
const typename Graph<T>::Node& Graph<T>::node(Var v) const {
  if (v.id >= nodes_.size()) throw UsageError("variable does not belong to this graph");
  return nodes_[v.id];
}

template <typename T>
T* Graph<T>::grad_buffer(Var v) {
  Node& n = nodes_[v.id];
  if (!n.needs_grad) return nullptr;
  if (!n.has_grad) {
    n.grad = Tensor<T>(n.value().shape(), T{0});
    n.has_grad = true;
  }
  return n.grad.data().data();
}

template <typename T>
Var Graph<T>::constant(Tensor<T> value) {
  return push(std::move(value), false, nullptr);
}

template <typename T>
Var Graph<T>::parameter(const Tensor<T>& value) {
  if (auto it = param_ids_.find(&value); it != param_ids_.end()) return Var{it->second};
  if (backward_done_) throw UsageError("graph already differentiated; build a fresh graph per pass");
  Node n;
  n.external = &value;
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  param_ids_.emplace(&value, nodes_.size() - 1);
  return Var{nodes_.size() - 1};
}

template <typename T>
const Tensor<T>& Graph<T>::value(Var v) const {
  return node(v).value();
}

template <typename T>
const Tensor<T>* Graph<T>::grad(Var v) const {
  const Node& n = node(v);
  return n.has_grad ? &n.grad : nullptr;
}

template <typename T>
Tensor<T> Graph<T>::grad_of(const Tensor<T>& param) const {
  auto it = param_ids_.find(&param);
  if (it == param_ids_.end() || !nodes_[it->second].has_grad) return Tensor<T>(param.shape(), T{0});
  return nodes_[it->second].grad;
}

template <typename T>
Var Graph<T>::matmul(Var a, Var b) {
  const Tensor<T>& av = value(a);
  const Tensor<T>& bv = value(b);
  const Shape& as = av.shape();
  const Shape& bs = bv.shape();
  auto fail = [&] {
    throw DimensionError("matmul shape mismatch: " + shape_string(as) + " x " + shape_string(bs));
  };
  if (as.size() < 2 || bs.size() < 2) fail();
  const std::size_t m = as[as.size() - 2], k = as.back();
  const std::size_t n = bs.back();
  if (bs[bs.size() - 2] != k) fail();
  const Shape a_batch(as.begin(), as.end() - 2);
  const Shape b_batch(bs.begin(), bs.end() - 2);
  Shape out_batch;
  if (b_batch.empty()) {
    out_batch = a_batch;
  } else if (a_batch.empty()) {
    out_batch = b_batch;
  } else if (a_batch == b_batch) {
    out_batch = a_batch;
  } else {
    fail();
  }
  const std::size_t batch = shape_size(out_batch);
  const std::size_t a_step = a_batch.empty() ? 0 : m * k;
  const std::size_t b_step = b_batch.empty() ? 0 : k * n;
  Shape out_shape = out_batch;
  out_shape.push_back(m);
  out_shape.push_back(n);
  Tensor<T> out(out_shape, T{0});
  for (std::size_t i = 0; i < batch; ++i) {
    gemm_nn(av.data().data() + i * a_step, bv.data().data() + i * b_step,
            out.data().data() + i * m * n, m, k, n);
  }
  const bool ng = needs(a) || needs(b);
  return push(std::move(out), ng,
              [a, b, m, k, n, batch, a_step, b_step](Graph& g, const Tensor<T>&, const Tensor<T>& gout) {
                const T* A = g.value(a).data().data();
                const T* B = g.value(b).data().data();
                T* dA = g.grad_buffer(a);
                T* dB = g.grad_buffer(b);
                for (std::size_t i = 0; i < batch; ++i) {
                  const T* dC = gout.data().data() + i * m * n;
                  if (dA) gemm_nt(dC, B + i * b_step, dA + i * a_step, m, k, n);
                  if (dB) gemm_tn(A + i * a_step, dC, dB + i * b_step, m, k, n);
                }
              });
}

template <typename T>
Var Graph<T>::add(Var a, Var b) {
  const Tensor<T>& av = value(a);
  const Tensor<T>& bv = value(b);
  if (av.shape() != bv.shape()) {
    throw DimensionError("add shape mismatch: " + shape_string(av.shape()) + " + " +
                         shape_string(bv.shape()));
  }
  Tensor<T> out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return push(std::move(out), needs(a) || needs(b), [a, b](Graph& g, const Tensor<T>&, const Tensor<T>& gout) {
    for (Var v : {a, b}) {
      if (T* d = g.grad_buffer(v)) {
        for (std::size_t i = 0; i < gout.size(); ++i) d[i] += gout[i];
      }
    }
  });
}

template <typename T>
Var Graph<T>::add_bias(Var x, Var bias) {
  const Tensor<T>& xv = value(x);
  const Tensor<T>& bv = value(bias);
  if (xv.rank() == 0 || bv.rank() != 1 || bv.size() != xv.shape().back()) {
    throw DimensionError("add_bias shape mismatch: " + shape_string(xv.shape()) + " + " +
                         shape_string(bv.shape()));
  }
  const std::size_t d = bv.size();
  Tensor<T> out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % d];
  return push(std::move(out), needs(x) || needs(bias),
              [x, bias, d](Graph& g, const Tensor<T>&, const Tensor<T>& gout) {
                if (T* dx = g.grad_buffer(x)) {
                  for (std::size_t i = 0; i < gout.size(); ++i) dx[i] += gout[i];
                }
                if (T* db = g.grad_buffer(bias)) {
                  for (std::size_t i = 0; i < gout.size(); ++i) db[i % d] += gout[i];
                }
              });
}

template <typename T>
Var Graph<T>::scale(Var x, T factor) {
  Tensor<T> out = value(x);
  for (auto& v : out.data()) v *= factor;
  return push(std::move(out), needs(x), [x, factor](Graph& g, const Tensor<T>&, const Tensor<T>& gout) {
    if (T* dx = g.grad_buffer(x)) {
      for (std::size_t i = 0; i < gout.size(); ++i) dx[i] += factor * gout[i];
    }
  });
}

template <typename T>
Var Graph<T>::relu(Var x) {
  Tensor<T> out = value(x);
  for (auto& v : out.data()) v = v > T{0} ? v : T{0};
  return push(std::move(out), needs(x), [x](Graph& g, const Tensor<T>& y, const Tensor<T>& gout) {
    if (T* dx = g.grad_buffer(x)) {
      for (std::size_t i = 0; i < gout.size(); ++i) {
        if (y[i] > T{0}) dx[i] += gout[i];
      }
    }
  });
}

template <typename T>
Var Graph<T>::softmax_rows(Var x) {
  const Tensor<T>& xv = value(x);
  if (xv.rank() == 0) throw DimensionError("softmax_rows needs rank >= 1");
  const std::size_t n = xv.shape().back();
  const std::size_t rows = n ? xv.size() / n : 0;
  Tensor<T> out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xv.data().data() + r * n;
    T* o = out.data().data() + r * n;
    T mx = in[0];
    for (std::size_t j = 0; j < n; ++j) {
      if (std::isnan(in[j])) throw NumericError("softmax_rows: NaN input");
      mx = std::max(mx, in[j]);
    }
    T s = 0;
    for (std::size_t j = 0; j < n; ++j) {
      o[j] = std::exp(in[j] - mx);
      s += o[j];
    }
    const T inv = T{1} / s;
    for (std::size_t j = 0; j < n; ++j) o[j] *= inv;
  }
  if (softmax_observer_) softmax_observer_(out);
  return push(std::move(out), needs(x), [x, n, rows](Graph& g, const Tensor<T>& y, const Tensor<T>& gout) {
    T* dx = g.grad_buffer(x);
    if (!dx) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const T* yr = y.data().data() + r * n;
      const T* gr = gout.data().data() + r * n;
      T dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += yr[j] * gr[j];
      T* dr = dx + r * n;
      for (std::size_t j = 0; j < n; ++j) dr[j] += yr[j] * (gr[j] - dot);
    }
  });
}

template <typename T>
Var Graph<T>::layer_norm(Var x, Var gain, Var bias, T eps) {
  const Tensor<T>& xv = value(x);
  const Tensor<T>& gv = value(gain);
  const Tensor<T>& bv = value(bias);
  if (xv.rank() == 0) throw DimensionError("layer_norm needs rank >= 1");
  const std::size_t d = xv.shape().back();
  if (d < 2 || gv.shape() != Shape{d} || bv.shape() != Shape{d}) {
    throw DimensionError("layer_norm shape mismatch: x " + shape_string(xv.shape()) + ", gain " +
                         shape_string(gv.shape()) + ", bias " + shape_string(bv.shape()));
  }
  const std::size_t rows = xv.size() / d;
  Tensor<T> out(xv.shape());
  std::vector<T> xhat(xv.size());
  std::vector<T> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xv.data().data() + r * d;
    T mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += in[j];
    mu /= T(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= T(d);
    rstd[r] = T{1} / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      const T xh = (in[j] - mu) * rstd[r];
      xhat[r * d + j] = xh;
      out[r * d + j] = xh * gv[j] + bv[j];
    }
  }
  const bool ng = needs(x) || needs(gain) || needs(bias);
  return push(std::move(out), ng,
              [x, gain, bias, d, rows, xhat = std::move(xhat), rstd = std::move(rstd)](
                  Graph& g, const Tensor<T>&, const Tensor<T>& gout) {
                const Tensor<T>& gv = g.value(gain);
                T* dx = g.grad_buffer(x);
                T* dg = g.grad_buffer(gain);
                T* db = g.grad_buffer(bias);
                std::vector<T> dxh(d);
                for (std::size_t r = 0; r < rows; ++r) {
                  const T* gr = gout.data().data() + r * d;
                  const T* xh = xhat.data() + r * d;
                  if (dg || db) {
                    for (std::size_t j = 0; j < d; ++j) {
                      if (dg) dg[j] += gr[j] * xh[j];
                      if (db) db[j] += gr[j];
                    }
                  }
                  if (!dx) continue;
                  T mean_dxh = 0, mean_dxh_xh = 0;
                  for (std::size_t j = 0; j < d; ++j) {
                    dxh[j] = gr[j] * gv[j];
                    mean_dxh += dxh[j];
                    mean_dxh_xh += dxh[j] * xh[j];
                  }
                  mean_dxh /= T(d);
                  mean_dxh_xh /= T(d);
                  T* dr = dx + r * d;
                  for (std::size_t j = 0; j < d; ++j) {
                    dr[j] += rstd[r] * (dxh[j] - mean_dxh - xh[j] * mean_dxh_xh);
                  }
                }
              });
}

template <typename T>
Var Graph<T>::reshape(Var x, Shape shape) {
  Tensor<T> out = value(x).reshaped(std::move(shape));
  return push(std::move(out), needs(x), [x](Graph& g, const Tensor<T>&, const Tensor<T>& gout) {
    if (T* dx = g.grad_buffer(x)) {
      for (std::size_t i = 0; i < gout.size(); ++i) dx[i] += gout[i];
    }
  });
}

template <typename T>
Var Graph<T>::permute(Var x, const std::vector<std::size_t>& axes) {
  const Tensor<T>& xv = value(x);
  const Shape& in_shape = xv.shape();
  if (axes.size() != in_shape.size()) {
    throw DimensionError("permute: axis list length does not match rank of " + shape_string(in_shape));
  }
  std::vector<bool> seen(axes.size(), false);
  for (auto a : axes) {
    if (a >= axes.size() || seen[a]) throw DimensionError("permute: invalid axis permutation");
    seen[a] = true;
  }
  Shape out_shape(axes.size());
  for (std::size_t i = 0; i < axes.size(); ++i) out_shape[i] = in_shape[axes[i]];
  Tensor<T> out(out_shape);
  const T* src = xv.data().data();
  T* dst = out.data().data();
  for_each_permuted(in_shape, axes, [&](std::size_t o, std::size_t i) { dst[o] = src[i]; });
  return push(std::move(out), needs(x), [x, axes, in_shape](Graph& g, const Tensor<T>&, const Tensor<T>& gout) {
    T* dx = g.grad_buffer(x);
    if (!dx) return;
    const T* go = gout.data().data();
    for_each_permuted(in_shape, axes, [&](std::size_t o, std::size_t i) { dx[i] += go[o]; });
  });
}

template <typename T>
Var Graph<T>::stack(std::span<const Var> xs, std::size_t axis) {
  if (xs.empty()) throw DimensionError("stack: empty input list");
  const Shape& s0 = value(xs[0]).shape();
  if (axis > s0.size()) throw DimensionError("stack: axis out of range for " + shape_string(s0));
  bool ng = false;
  for (Var v : xs) {
    if (value(v).shape() != s0) {
      throw DimensionError("stack shape mismatch: " + shape_string(s0) + " vs " +
                           shape_string(value(v).shape()));
    }
    ng = ng || needs(v);
  }
  const std::size_t outer = shape_size(Shape(s0.begin(), s0.begin() + static_cast<std::ptrdiff_t>(axis)));
  const std::size_t inner = shape_size(Shape(s0.begin() + static_cast<std::ptrdiff_t>(axis), s0.end()));
  const std::size_t count = xs.size();
  Shape out_shape = s0;
  out_shape.insert(out_shape.begin() + static_cast<std::ptrdiff_t>(axis), count);
  Tensor<T> out(out_shape);
  for (std::size_t c = 0; c < count; ++c) {
    const T* src = value(xs[c]).data().data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src + o * inner, inner, out.data().data() + (o * count + c) * inner);
    }
  }
  std::vector<Var> inputs(xs.begin(), xs.end());
  return push(std::move(out), ng, [inputs, outer, inner](Graph& g, const Tensor<T>&, const Tensor<T>& gout) {
    const std::size_t count = inputs.size();
    for (std::size_t c = 0; c < count; ++c) {
      T* d = g.grad_buffer(inputs[c]);
      if (!d) continue;
      for (std::size_t o = 0; o < outer; ++o) {
        const T* src = gout.data().data() + (o * count + c) * inner;
        for (std::size_t i = 0; i < inner; ++i) d[o * inner + i] += src[i];
      }
    }
  });
}

template <typename T>
Var Graph<T>::gather_rows(Var x, std::span<const std::size_t> rows) {
  const Tensor<T>& xv = value(x);
  if (xv.rank() != 2) throw DimensionError("gather_rows expects a matrix, got " + shape_string(xv.shape()));
  const std::size_t n = xv.dim(0), d = xv.dim(1);
  Tensor<T> out(Shape{rows.size(), d});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= n) throw DimensionError("gather_rows: row index out of range");
    std::copy_n(xv.data().data() + rows[r] * d, d, out.data().data() + r * d);
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return push(std::move(out), needs(x), [x, idx = std::move(idx), d](Graph& g, const Tensor<T>&, const Tensor<T>& gout) {
    T* dx = g.grad_buffer(x);
    if (!dx) return;
    for (std::size_t r = 0; r < idx.size(); ++r) {
      for (std::size_t j = 0; j < d; ++j) dx[idx[r] * d + j] += gout[r * d + j];
    }
  });
}

template <typename T>
Var Graph<T>::sum(Var x) {
  const Tensor<T>& xv = value(x);
  T s = 0;
  for (auto v : xv.data()) s += v;
  return push(Tensor<T>::scalar(s), needs(x), [x](Graph& g, const Tensor<T>&, const Tensor<T>& gout) {
    T* dx = g.grad_buffer(x);
    if (!dx) return;
    const std::size_t n = g.value(x).size();
    for (std::size_t i = 0; i < n; ++i) dx[i] += gout[0];
  });
}

template <typename T>
Var Graph<T>::mean(Var x) {
  const std::size_t n = value(x).size();
  if (n == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(x), T{1} / T(n));
}

template <typename T>
Var Graph<T>::bit_cross_entropy(Var logits, std::span<const T> signs) {
  const Tensor<T>& lv = value(logits);
  if (lv.size() != signs.size() || signs.empty()) {
    throw DimensionError("bit_cross_entropy: " + std::to_string(signs.size()) + " bits vs logits " +
                         shape_string(lv.shape()));
  }
  const T norm = T{1} / (T(signs.size()) * std::log(T{2}));
  T acc = 0;
  for (std::size_t i = 0; i < lv.size(); ++i) {
    const T z = -signs[i] * lv[i];
    acc += std::max(z, T{0}) + std::log1p(std::exp(-std::abs(z)));
  }
  std::vector<T> s(signs.begin(), signs.end());
  return push(Tensor<T>::scalar(acc * norm), needs(logits),
              [logits, s = std::move(s), norm](Graph& g, const Tensor<T>&, const Tensor<T>& gout) {
                T* dl = g.grad_buffer(logits);
                if (!dl) return;
                const Tensor<T>& lv = g.value(logits);
                for (std::size_t i = 0; i < lv.size(); ++i) {
                  // d/dL softplus(-sL) = -s * sigmoid(-sL)
                  const T z = -s[i] * lv[i];
                  const T sig = z >= 0 ? T{1} / (T{1} + std::exp(-z)) : std::exp(z) / (T{1} + std::exp(z));
                  dl[i] += gout[0] * norm * (-s[i]) * sig;
                }
              });
}

template <typename T>
void Graph<T>::backward(Var loss) {
  const Node& ln = node(loss);
  if (ln.value().size() != 1) {
    throw UsageError("backward requires a scalar loss, got shape " + shape_string(ln.value().shape()));
  }
  if (backward_done_) throw UsageError("backward already called on this graph");
  backward_done_ = true;
  if (!ln.needs_grad) return;
  grad_buffer(loss)[0] = T{1};
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.has_grad || !n.backprop) continue;
    n.backprop(*this, n.value(), n.grad);
  }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace coopnr
