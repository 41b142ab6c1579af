#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "dicerl/rng.hpp"
#include "dicerl/tensor.hpp"

namespace dicerl {

// Fully connected net, ReLU hidden layers, identity output. Weights are
// [in, out] so activations are row batches: x [B, in] -> y [B, out].
struct Mlp {
  std::vector<std::size_t> widths;
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init for weights and biases.
  static Mlp make(const std::vector<std::size_t>& widths, Rng& rng) {
    if (widths.size() < 2) throw std::invalid_argument("Mlp: need at least two widths");
    Mlp net;
    net.widths = widths;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      const std::size_t fan_in = widths[l], fan_out = widths[l + 1];
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      Tensor w({fan_in, fan_out});
      for (double& x : w.vals()) x = rng.uniform(-bound, bound);
      Tensor b({1, fan_out});
      for (double& x : b.vals()) x = rng.uniform(-bound, bound);
      net.weights.push_back(std::move(w));
      net.biases.push_back(std::move(b));
    }
    return net;
  }

  std::size_t in_dim() const { return widths.front(); }
  std::size_t out_dim() const { return widths.back(); }

  // When `trainable`, parameters are attached as differentiable leaves;
  // otherwise they enter the graph as constants (frozen copies, targets).
  Tensor forward(Tape& tape, const Tensor& x, bool trainable) const {
    if (x.cols() != in_dim()) throw std::invalid_argument("Mlp::forward: input width mismatch");
    Tensor h = x;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      Tensor w = trainable ? tape.param(weights[l]) : tape.constant(weights[l]);
      Tensor b = trainable ? tape.param(biases[l]) : tape.constant(biases[l]);
      h = tape.add(tape.matmul(h, w), b);
      if (l + 1 < weights.size()) h = tape.relu(h);
    }
    return h;
  }

  // Plain evaluation, no gradient bookkeeping.
  Tensor eval(const Tensor& x) const {
    Tape scratch;
    return forward(scratch, x, false).detached();
  }

  std::vector<Tensor*> params() {
    std::vector<Tensor*> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.push_back(&weights[l]);
      out.push_back(&biases[l]);
    }
    return out;
  }

  std::vector<const Tensor*> params() const {
    std::vector<const Tensor*> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.push_back(&weights[l]);
      out.push_back(&biases[l]);
    }
    return out;
  }
};

// target <- tau * online + (1 - tau) * target, elementwise over all params.
inline void soft_update(Mlp& target, const Mlp& online, double tau) {
  if (tau < 0.0 || tau > 1.0) throw std::invalid_argument("soft_update: tau outside [0, 1]");
  if (target.widths != online.widths)
    throw std::invalid_argument("soft_update: architecture mismatch");
  auto tgt = target.params();
  auto src = online.params();
  for (std::size_t i = 0; i < tgt.size(); ++i) {
    double* t = tgt[i]->data();
    const double* s = src[i]->data();
    for (std::size_t j = 0; j < tgt[i]->size(); ++j) t[j] = tau * s[j] + (1.0 - tau) * t[j];
  }
}

}  // namespace dicerl
