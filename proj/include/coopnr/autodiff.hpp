#pragma once

// Reverse-mode differentiation over dense tensors.
//
// A Graph records every operation of one forward pass. Parameters are bound
// by address, so a tensor used several times (for example an encoder shared
// across access points) maps to a single leaf whose gradient accumulates all
// uses. Graphs are single-use: build, call backward() once, read gradients.

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <unordered_map>
#include <vector>

#include "coopnr/tensor.hpp"

namespace coopnr {

struct Var {
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
  std::size_t id = npos;
  bool valid() const noexcept { return id != npos; }
};

template <typename T>
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) noexcept = default;
  Graph& operator=(Graph&&) noexcept = default;

  // Leaves.
  Var constant(Tensor<T> value);
  // Binds a parameter by address. The referenced tensor must outlive the graph.
  Var parameter(const Tensor<T>& value);

  // Operations.
  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var add_bias(Var x, Var bias);
  Var scale(Var x, T factor);
  Var relu(Var x);
  Var softmax_rows(Var x);
  Var layer_norm(Var x, Var gain, Var bias, T eps = T(1e-5));
  Var reshape(Var x, Shape shape);
  Var permute(Var x, const std::vector<std::size_t>& axes);
  Var stack(std::span<const Var> xs, std::size_t axis);
  Var gather_rows(Var x, std::span<const std::size_t> rows);
  Var sum(Var x);
  Var mean(Var x);
  // (1/(n ln 2)) * sum_i softplus(-signs_i * logits_i), signs in {-1,+1}.
  Var bit_cross_entropy(Var logits, std::span<const T> signs);

  void backward(Var loss);

  const Tensor<T>& value(Var v) const;
  // Gradient of the last backward() w.r.t. v; nullptr when v was unreachable.
  const Tensor<T>* grad(Var v) const;
  // Gradient w.r.t. a bound parameter; zeros when the parameter was never used.
  Tensor<T> grad_of(const Tensor<T>& param) const;

  std::size_t node_count() const noexcept { return nodes_.size(); }

  // Called with every softmax output produced in this graph (testing hook).
  void set_softmax_observer(std::function<void(const Tensor<T>&)> observer) {
    softmax_observer_ = std::move(observer);
  }

 private:
  using Backprop =
      std::function<void(Graph&, const Tensor<T>& out_value, const Tensor<T>& out_grad)>;

  struct Node {
    Tensor<T> owned;
    const Tensor<T>* external = nullptr;
    Tensor<T> grad;
    bool has_grad = false;
    bool needs_grad = false;
    Backprop backprop;
    const Tensor<T>& value() const { return external ? *external : owned; }
  };

  Var push(Tensor<T> value, bool needs_grad, Backprop backprop);
  bool needs(Var v) const { return nodes_[v.id].needs_grad; }
  // Gradient buffer of v, zero-initialized on first access; nullptr if v needs no gradient.
  T* grad_buffer(Var v);
  const Node& node(Var v) const;

  std::vector<Node> nodes_;
  std::unordered_map<const Tensor<T>*, std::size_t> param_ids_;
  std::function<void(const Tensor<T>&)> softmax_observer_;
  bool backward_done_ = false;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace coopnr
