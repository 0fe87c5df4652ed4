#pragma once

// Central finite-difference gradient checking shared by unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "coopnr/autodiff.hpp"

namespace coopnr::testing {

// Builds a graph over the given parameters and returns the scalar loss.
using LossBuilder = std::function<Var(Graph<double>&)>;

inline constexpr double kNormFloor = 1e-6;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

// Relative error per tensor: ||analytic - numeric|| / max(||analytic||, ||numeric||, kNormFloor).
// Tensors whose true gradient vanishes identically (attention key biases) are
// thereby compared in absolute terms against the finite-difference noise level.
// Perturbs every entry of every parameter unless max_entries limits it (then
// entries are strided evenly).
inline GradCheckResult check_gradients(const LossBuilder& build, const std::vector<Tensor<double>*>& params,
                                       double eps = 1e-5, std::size_t max_entries = 0) {
  std::vector<Tensor<double>> analytic;
  {
    Graph<double> g;
    const Var loss = build(g);
    g.backward(loss);
    for (auto* p : params) analytic.push_back(g.grad_of(*p));
  }
  auto eval = [&] {
    Graph<double> g;
    return g.value(build(g))[0];
  };
  GradCheckResult res;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<double>& p = *params[k];
    const std::size_t n = p.size();
    const std::size_t stride = (max_entries == 0 || n <= max_entries) ? 1 : (n + max_entries - 1) / max_entries;
    double diff2 = 0.0, an2 = 0.0, nu2 = 0.0;
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = p[i];
      p[i] = saved + eps;
      const double up = eval();
      p[i] = saved - eps;
      const double down = eval();
      p[i] = saved;
      const double numeric = (up - down) / (2 * eps);
      const double a = analytic[k][i];
      diff2 += (a - numeric) * (a - numeric);
      an2 += a * a;
      nu2 += numeric * numeric;
      ++res.checked;
    }
    const double denom = std::max({std::sqrt(an2), std::sqrt(nu2), kNormFloor});
    res.max_rel_error = std::max(res.max_rel_error, std::sqrt(diff2) / denom);
  }
  return res;
}

}  // namespace coopnr::testing
