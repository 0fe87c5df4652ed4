#include "coopnr/optim.hpp"

#include <cmath>

namespace coopnr {

template <typename T>
Adam<T>::Adam(AdamConfig config, std::span<const Shape> shapes) : config_(config) {
  m_.reserve(shapes.size());
  v_.reserve(shapes.size());
  for (const auto& s : shapes) {
    m_.emplace_back(s, T{0});
    v_.emplace_back(s, T{0});
  }
}

template <typename T>
void Adam<T>::step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw DimensionError("adam: expected " + std::to_string(m_.size()) + " parameter tensors, got " +
                         std::to_string(params.size()) + " params and " + std::to_string(grads.size()) +
                         " grads");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != m_[i].shape() || grads[i].shape() != m_[i].shape()) {
      throw DimensionError("adam: tensor " + std::to_string(i) + " has shape " +
                           shape_string(params[i]->shape()) + ", state is " + shape_string(m_[i].shape()));
    }
  }
  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const T lr = static_cast<T>(config_.learning_rate);
  const T eps = static_cast<T>(config_.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->data();
    auto g = grads[i].data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = static_cast<T>(b1 * m[j] + (1.0 - b1) * g[j]);
      v[j] = static_cast<T>(b2 * v[j] + (1.0 - b2) * g[j] * g[j]);
      const T mhat = static_cast<T>(m[j] / c1);
      const T vhat = static_cast<T>(v[j] / c2);
      p[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

template <typename T>
void Adam<T>::restore(std::uint64_t steps, std::vector<Tensor<T>> first, std::vector<Tensor<T>> second) {
  if (first.size() != m_.size() || second.size() != v_.size()) {
    throw DimensionError("adam restore: moment count mismatch");
  }
  for (std::size_t i = 0; i < m_.size(); ++i) {
    if (first[i].shape() != m_[i].shape() || second[i].shape() != v_[i].shape()) {
      throw DimensionError("adam restore: moment " + std::to_string(i) + " shape mismatch");
    }
  }
  steps_ = steps;
  m_ = std::move(first);
  v_ = std::move(second);
}

template <typename T>
double clip_global_norm(std::span<Tensor<T>> grads, double max_norm) {
  double sq = 0;
  for (const auto& g : grads) {
    for (auto v : g.data()) sq += static_cast<double>(v) * static_cast<double>(v);
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0) {
    const T f = static_cast<T>(max_norm / norm);
    for (auto& g : grads) {
      for (auto& v : g.data()) v *= f;
    }
  }
  return norm;
}

template class Adam<float>;
template class Adam<double>;
template double clip_global_norm<float>(std::span<Tensor<float>>, double);
template double clip_global_norm<double>(std::span<Tensor<double>>, double);

}  // namespace coopnr
