#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "dicerl/tensor.hpp"

namespace dicerl {

// Bias-corrected Adam. Accumulators are kept in the same order as the
// parameter list handed to make(); that order must stay fixed for the
// lifetime of the state.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  static AdamState make(const std::vector<Tensor*>& params) {
    AdamState s;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const Tensor* p : params) {
      s.m.emplace_back(p->size(), 0.0);
      s.v.emplace_back(p->size(), 0.0);
    }
    return s;
  }
};

// One Adam update in place. Parameters absent from `grads` (losses that do
// not touch them) are treated as zero-gradient.
inline void adam_step(const std::vector<Tensor*>& params, const GradTable& grads,
                      AdamState& state, double lr) {
  if (params.size() != state.m.size())
    throw std::invalid_argument("adam_step: state does not match parameter list");
  if (lr < 0.0) throw std::invalid_argument("adam_step: negative learning rate");

  state.step += 1;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));

  static const std::vector<double> kEmpty;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    auto it = grads.find(params[i]);
    const std::vector<double>& g = it == grads.end() ? kEmpty : it->second;
    if (!g.empty() && g.size() != p.size())
      throw std::invalid_argument("adam_step: gradient shape mismatch");

    std::vector<double>& m = state.m[i];
    std::vector<double>& v = state.v[i];
    double* w = p.data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = g.empty() ? 0.0 : g[j];
      if (!std::isfinite(gj)) throw std::runtime_error("adam_step: non-finite gradient");
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * gj;
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * gj * gj;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      w[j] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace dicerl
