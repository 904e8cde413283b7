#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "cephmark/tensor.hpp"

namespace cephmark::ag {

// Adaptive moment estimation. The paper never names its optimizer; defaults
// lr=1e-3, decays 0.9/0.999, eps=1e-8.
template <typename T>
struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int64_t step_count = 0;
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;

  void attach(const std::vector<Tensor<T>>& params) {
    first_moment.clear();
    second_moment.clear();
    for (const auto& p : params) {
      first_moment.emplace_back(p.numel(), T{});
      second_moment.emplace_back(p.numel(), T{});
    }
  }

  bool attached() const { return !first_moment.empty(); }
};

// One update over all parameters; gradients are validated, consumed, and
// zeroed. The moment math runs in double and is stored back at T.
template <typename T>
void optimizer_step(AdamState<T>& state, std::vector<Tensor<T>>& params) {
  if (!state.attached()) state.attach(params);
  if (state.first_moment.size() != params.size())
    throw ShapeError("optimizer_step: state tracks " + std::to_string(state.first_moment.size()) +
                     " parameters, got " + std::to_string(params.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    if (!params[i].requires_grad() || !params[i].has_grad())
      throw std::invalid_argument("optimizer_step: parameter " + std::to_string(i) +
                                  " has no gradient");
    if (state.first_moment[i].size() != static_cast<size_t>(params[i].numel()))
      throw ShapeError("optimizer_step: moment buffer size mismatch at parameter " +
                       std::to_string(i));
    for (T g : params[i].grad())
      if (!std::isfinite(static_cast<double>(g)))
        throw NumericError("optimizer_step: non-finite gradient at parameter " +
                           std::to_string(i));
  }

  state.step_count += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
  for (size_t i = 0; i < params.size(); ++i) {
    T* w = params[i].values().data();
    T* g = params[i].grad().data();
    T* m = state.first_moment[i].data();
    T* v = state.second_moment[i].data();
    const int64_t n = params[i].numel();
    for (int64_t j = 0; j < n; ++j) {
      double gj = static_cast<double>(g[j]);
      double mj = b1 * static_cast<double>(m[j]) + (1.0 - b1) * gj;
      double vj = b2 * static_cast<double>(v[j]) + (1.0 - b2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      double m_hat = mj / bc1;
      double v_hat = vj / bc2;
      w[j] = static_cast<T>(static_cast<double>(w[j]) -
                            state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon));
      g[j] = T{};
    }
  }
}

}  // namespace cephmark::ag
