#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "coopnr/tensor.hpp"

namespace coopnr {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias correction. Moments are shape-congruent with the parameters
// they were created for; step() rejects anything else.
template <typename T>
class Adam {
 public:
  Adam(AdamConfig config, std::span<const Shape> shapes);

  void step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads);

  const AdamConfig& config() const noexcept { return config_; }
  void set_learning_rate(double lr) noexcept { config_.learning_rate = lr; }
  std::uint64_t step_count() const noexcept { return steps_; }

  // Restores accumulated state (checkpoint resume).
  void restore(std::uint64_t steps, std::vector<Tensor<T>> first, std::vector<Tensor<T>> second);
  const std::vector<Tensor<T>>& first_moments() const noexcept { return m_; }
  const std::vector<Tensor<T>>& second_moments() const noexcept { return v_; }

 private:
  AdamConfig config_;
  std::uint64_t steps_ = 0;
  std::vector<Tensor<T>> m_;
  std::vector<Tensor<T>> v_;
};

// Scales grads in place so that their joint L2 norm is at most max_norm.
// Returns the norm before clipping.
template <typename T>
double clip_global_norm(std::span<Tensor<T>> grads, double max_norm);

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace coopnr
