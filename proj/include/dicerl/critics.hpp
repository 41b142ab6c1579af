#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "dicerl/mlp.hpp"
#include "dicerl/tensor.hpp"

namespace dicerl {

// Confidence bounds built from a twin-critic pair:
//   mu    = (q1 + q2) / 2
//   sigma = |q1 - q2| / 2
//   lb    = mu - beta_lb * sigma,  ub = mu + beta_ub * sigma.
struct QBounds {
  double mu, sigma, lb, ub;
};

inline QBounds q_bounds(double q1, double q2, double beta_ub, double beta_lb) {
  if (beta_ub < 0.0 || beta_lb < 0.0)
    throw std::invalid_argument("q_bounds: negative beta");
  QBounds b;
  b.mu = 0.5 * (q1 + q2);
  b.sigma = 0.5 * std::fabs(q1 - q2);
  b.lb = b.mu - beta_lb * b.sigma;
  b.ub = b.mu + beta_ub * b.sigma;
  return b;
}

// Twin Q networks over (state, action) features with frozen target copies.
// The two online nets share the architecture and differ only in their
// random initialization.
struct CriticPair {
  Mlp q1, q2;
  Mlp q1_target, q2_target;
  double beta_ub = 2.0;
  double beta_lb = 2.5;
  double tau = 0.005;

  static CriticPair make(std::size_t feat_dim, const std::vector<std::size_t>& hidden,
                         double beta_ub, double beta_lb, double tau, Rng& rng) {
    std::vector<std::size_t> widths;
    widths.push_back(feat_dim);
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    widths.push_back(1);
    CriticPair c;
    c.q1 = Mlp::make(widths, rng);
    c.q2 = Mlp::make(widths, rng);
    c.q1_target = c.q1;
    c.q2_target = c.q2;
    c.beta_ub = beta_ub;
    c.beta_lb = beta_lb;
    c.tau = tau;
    return c;
  }

  // Graph-attached bound over a feature batch; critic parameters enter as
  // constants so the gradient flows only through the features (the action
  // path of a policy objective).
  Tensor lower_bound(Tape& t, const Tensor& feats) const {
    return bound(t, feats, /*upper=*/false);
  }
  Tensor upper_bound(Tape& t, const Tensor& feats) const {
    return bound(t, feats, /*upper=*/true);
  }

  // min(Q'1, Q'2) of the frozen targets, plain values.
  std::vector<double> target_min(const Tensor& feats) const {
    Tensor v1 = q1_target.eval(feats);
    Tensor v2 = q2_target.eval(feats);
    std::vector<double> out(v1.size());
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = std::min(v1.vals()[i], v2.vals()[i]);
    return out;
  }

  void soft_update_targets() {
    soft_update(q1_target, q1, tau);
    soft_update(q2_target, q2, tau);
  }

 private:
  Tensor bound(Tape& t, const Tensor& feats, bool upper) const {
    Tensor v1 = q1.forward(t, feats, false);
    Tensor v2 = q2.forward(t, feats, false);
    Tensor mu = t.mul(t.add(v1, v2), t.constant(0.5));
    Tensor sigma = t.mul(t.abs(t.sub(v1, v2)), t.constant(0.5));
    return upper ? t.add(mu, t.mul(sigma, t.constant(beta_ub)))
                 : t.sub(mu, t.mul(sigma, t.constant(beta_lb)));
  }
};

// Per-sample TD targets r + gamma * (min_i Q'_i(s', a') - alpha log pi(a'|s')),
// with the bootstrap zeroed on true environment terminations. All inputs are
// plain values; the result never carries gradient.
inline std::vector<double> bellman_target(std::span<const double> rewards,
                                          std::span<const bool> done,
                                          std::span<const double> target_min_q,
                                          std::span<const double> next_log_pi,
                                          double alpha, double gamma) {
  const std::size_t n = rewards.size();
  if (done.size() != n || target_min_q.size() != n || next_log_pi.size() != n)
    throw std::invalid_argument("bellman_target: batch length mismatch");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double bootstrap = target_min_q[i] - alpha * next_log_pi[i];
    out[i] = rewards[i] + (done[i] ? 0.0 : gamma * bootstrap);
  }
  return out;
}

// Weighted squared TD error sum_b w_b (Q(s_b, a_b) - target_b)^2. Weights
// and targets are constants; the gradient reaches only the critic being
// trained through `q_values`.
inline Tensor critic_loss_corrected(Tape& t, const Tensor& q_values,
                                    const std::vector<double>& targets,
                                    const std::vector<double>& weights) {
  if (q_values.size() != targets.size() || targets.size() != weights.size())
    throw std::invalid_argument("critic_loss_corrected: batch length mismatch");
  const std::size_t n = targets.size();
  Tensor tgt({n, 1}, targets);
  Tensor w({n, 1}, weights);
  Tensor err = t.sub(q_values, t.constant(tgt));
  return t.sum(t.mul(t.constant(w), t.mul(err, err)));
}

}  // namespace dicerl
