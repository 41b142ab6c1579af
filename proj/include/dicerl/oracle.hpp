#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "dicerl/envs.hpp"

namespace dicerl {
namespace oracle {

// Exact tabular quantities used as ground truth in tests. Tables are indexed
// [s * n_actions + a].
struct ExactQuantities {
  std::vector<double> d_pi;
  std::vector<double> zeta_star;
  std::vector<double> d_data;
  double mu_pi = 0.0;
};

struct CoverageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void check_policy(const TabularMDP& mdp, const std::vector<double>& pi) {
  if (pi.size() != mdp.n_states * mdp.n_actions)
    throw std::invalid_argument("policy table has wrong size");
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    double sum = 0.0;
    for (std::size_t a = 0; a < mdp.n_actions; ++a) {
      const double p = pi[s * mdp.n_actions + a];
      if (p < 0.0) throw std::invalid_argument("policy has negative probability");
      sum += p;
    }
    if (std::fabs(sum - 1.0) > 1e-9)
      throw std::invalid_argument("policy row does not sum to 1");
  }
}

// (P^pi v)(s, a) = sum_{s'} T(s'|s, a) sum_{a'} pi(a'|s') v(s', a').
inline std::vector<double> apply_ppi(const TabularMDP& mdp, const std::vector<double>& pi,
                                     const std::vector<double>& v) {
  const std::size_t S = mdp.n_states, A = mdp.n_actions;
  std::vector<double> vs(S, 0.0);  // state values under pi
  for (std::size_t s2 = 0; s2 < S; ++s2)
    for (std::size_t a2 = 0; a2 < A; ++a2) vs[s2] += pi[s2 * A + a2] * v[s2 * A + a2];
  std::vector<double> out(S * A, 0.0);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a) {
      double acc = 0.0;
      for (std::size_t s2 = 0; s2 < S; ++s2) acc += mdp.trans(s, a, s2) * vs[s2];
      out[s * A + a] = acc;
    }
  return out;
}

// Adjoint: (P^pi' w)(s', a') = pi(a'|s') sum_{s,a} T(s'|s, a) w(s, a).
inline std::vector<double> apply_ppi_adjoint(const TabularMDP& mdp,
                                             const std::vector<double>& pi,
                                             const std::vector<double>& w) {
  const std::size_t S = mdp.n_states, A = mdp.n_actions;
  std::vector<double> into(S, 0.0);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a)
      for (std::size_t s2 = 0; s2 < S; ++s2) into[s2] += mdp.trans(s, a, s2) * w[s * A + a];
  std::vector<double> out(S * A, 0.0);
  for (std::size_t s2 = 0; s2 < S; ++s2)
    for (std::size_t a2 = 0; a2 < A; ++a2) out[s2 * A + a2] = pi[s2 * A + a2] * into[s2];
  return out;
}

}  // namespace detail

// Discounted occupancy d^pi, the unique solution of
//   d = (1 - gamma) rho0 pi + gamma P^pi_* d,
// found by a direct linear solve (partial-pivot LU) over the nS * nA
// unknowns.
inline std::vector<double> stationary_distribution(const TabularMDP& mdp,
                                                   const std::vector<double>& pi,
                                                   double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0))
    throw std::invalid_argument("stationary_distribution: gamma outside (0, 1)");
  detail::check_policy(mdp, pi);
  const std::size_t S = mdp.n_states, A = mdp.n_actions, N = S * A;

  Eigen::MatrixXd M = Eigen::MatrixXd::Identity(N, N);
  // Transfer operator: (P_* d)(s', a') = pi(a'|s') sum_{s,a} T(s'|s,a) d(s,a).
  for (std::size_t s2 = 0; s2 < S; ++s2)
    for (std::size_t a2 = 0; a2 < A; ++a2)
      for (std::size_t s = 0; s < S; ++s)
        for (std::size_t a = 0; a < A; ++a)
          M(s2 * A + a2, s * A + a) -= gamma * pi[s2 * A + a2] * mdp.trans(s, a, s2);

  Eigen::VectorXd b(N);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a)
      b(s * A + a) = (1.0 - gamma) * mdp.rho0[s] * pi[s * A + a];

  Eigen::PartialPivLU<Eigen::MatrixXd> lu(M);
  Eigen::VectorXd d = lu.solve(b);
  // gamma < 1 makes I - gamma P_* strictly diagonally dominant in the right
  // norm, so the system cannot be singular.
  const double residual = (M * d - b).lpNorm<Eigen::Infinity>();
  if (!(residual < 1e-10))
    throw std::runtime_error("stationary_distribution: solve residual " +
                             std::to_string(residual));

  std::vector<double> out(N);
  for (std::size_t i = 0; i < N; ++i) out[i] = std::max(0.0, d(i));
  return out;
}

// mu(pi) = E_{d^pi}[R] = (1 - gamma) E[sum gamma^t r_t].
inline double policy_value(const TabularMDP& mdp, const std::vector<double>& pi,
                           double gamma) {
  std::vector<double> d = stationary_distribution(mdp, pi, gamma);
  double mu = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) mu += d[i] * mdp.reward[i];
  return mu;
}

// zeta*(s, a) = d^pi(s, a) / d^D(s, a); 0/0 is defined as 0, and positive
// occupancy outside the data support is a hard error.
inline std::vector<double> exact_ratio(const std::vector<double>& d_pi,
                                       const std::vector<double>& d_data) {
  if (d_pi.size() != d_data.size())
    throw std::invalid_argument("exact_ratio: table sizes differ");
  std::vector<double> out(d_pi.size(), 0.0);
  for (std::size_t i = 0; i < d_pi.size(); ++i) {
    if (d_data[i] > 0.0) {
      out[i] = d_pi[i] / d_data[i];
    } else if (d_pi[i] > 0.0) {
      throw CoverageError("exact_ratio: d^pi > 0 with no data coverage at pair " +
                          std::to_string(i));
    }
  }
  return out;
}

// Exact gradient, w.r.t. softmax logits, of
//   sum_s w(s) sum_a pi(a|s) (Q(s, a) - alpha log pi(a|s))
// with the state weight w(s) = d^pi(s) held constant (matching the
// corrected estimator, which treats its weights as fixed).
inline std::vector<double> exact_policy_gradient(const TabularMDP& mdp,
                                                 const std::vector<double>& logits,
                                                 double gamma, double alpha,
                                                 const std::vector<double>& q_table) {
  const std::size_t S = mdp.n_states, A = mdp.n_actions;
  if (logits.size() != S * A || q_table.size() != S * A)
    throw std::invalid_argument("exact_policy_gradient: table sizes differ");

  std::vector<double> pi(S * A);
  for (std::size_t s = 0; s < S; ++s) {
    double mx = logits[s * A];
    for (std::size_t a = 1; a < A; ++a) mx = std::max(mx, logits[s * A + a]);
    double z = 0.0;
    for (std::size_t a = 0; a < A; ++a) z += std::exp(logits[s * A + a] - mx);
    for (std::size_t a = 0; a < A; ++a) pi[s * A + a] = std::exp(logits[s * A + a] - mx) / z;
  }

  std::vector<double> d = stationary_distribution(mdp, pi, gamma);
  std::vector<double> grad(S * A, 0.0);
  for (std::size_t s = 0; s < S; ++s) {
    double w = 0.0;
    for (std::size_t a = 0; a < A; ++a) w += d[s * A + a];
    // d/d logit_b of sum_a pi_a (Q_a - alpha log pi_a) is
    // pi_b (adv_b - sum_a pi_a adv_a) with adv_a = Q_a - alpha log pi_a;
    // the derivative through the log term itself sums to zero.
    double mean_adv = 0.0;
    std::vector<double> adv(A);
    for (std::size_t a = 0; a < A; ++a) {
      const double p = pi[s * A + a];
      adv[a] = q_table[s * A + a] - alpha * std::log(std::max(p, 1e-300));
      mean_adv += p * adv[a];
    }
    for (std::size_t b = 0; b < A; ++b)
      grad[s * A + b] = w * pi[s * A + b] * (adv[b] - mean_adv);
  }
  return grad;
}

// Full-expectation solver for the tabular saddle problem
//   max_{zeta >= 0} min_nu  (1-gamma) E_{rho0, pi}[nu] + E_{d^D}[zeta * delta(nu)]
// with delta = B nu - nu (signed) or |B nu - nu| (abs_mode). zeta starts at
// zero, is projected to >= 0 and averaged over the last tenth of the outer
// iterations in both modes.
//
// Signed mode runs simultaneous gradient descent-ascent with c/sqrt(t) step
// decay. That scheme diverges in abs mode: the ascent direction d^D |delta|
// is one-sided, so zeta integrates every transient of nu without bound.
// Abs mode therefore solves the inner nu problem to optimality per outer
// step (damped Newton on a Huber-smoothed objective, residuals kept in a
// trust region), which makes residuals vanish exactly once zeta dominates
// the ratio and freezes the ascent at the minimal dominating point.
struct SaddleOptions {
  long iterations = 0;       // 0 = mode default (3e6 signed, 25000 abs)
  double step_nu = 10.0;     // signed mode
  double step_zeta = 0.0;    // 0 = mode default (20 signed, 0.2 abs)
  double residual_threshold = 0.02;
  double trust_radius = 1.0;   // abs mode: residual trust region
  double trust_penalty = 1e3;  // abs mode: quadratic penalty weight
  int inner_iterations = 100;  // abs mode: Newton budget per outer step
};

struct SaddleResult {
  std::vector<double> zeta;
  double residual = 0.0;  // occupancy-equation residual of d^D * zeta, L1
  bool converged = false;
};

namespace detail {

inline SaddleResult finish_saddle(const TabularMDP& mdp, const std::vector<double>& pi,
                                  const std::vector<double>& d_data, double gamma,
                                  std::vector<double> zeta_avg, double threshold) {
  const std::size_t S = mdp.n_states, A = mdp.n_actions, N = S * A;
  std::vector<double> dz(N);
  for (std::size_t i = 0; i < N; ++i) dz[i] = d_data[i] * zeta_avg[i];
  std::vector<double> flow = apply_ppi_adjoint(mdp, pi, dz);
  double residual = 0.0;
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a) {
      const std::size_t i = s * A + a;
      residual += std::fabs((1.0 - gamma) * mdp.rho0[s] * pi[i] + gamma * flow[i] - dz[i]);
    }
  SaddleResult res;
  res.zeta = std::move(zeta_avg);
  res.residual = residual;
  res.converged = residual < threshold;
  return res;
}

inline SaddleResult saddle_solve_signed(const TabularMDP& mdp, const std::vector<double>& pi,
                                        const std::vector<double>& d_data, double gamma,
                                        const SaddleOptions& opt) {
  const std::size_t S = mdp.n_states, A = mdp.n_actions, N = S * A;
  const long iters = opt.iterations > 0 ? opt.iterations : 3000000;
  const double step_zeta = opt.step_zeta > 0.0 ? opt.step_zeta : 20.0;

  double rmax = 0.0;
  for (double r : mdp.reward) rmax = std::max(rmax, std::fabs(r));
  const double nu_box = 4.0 * std::max(1.0, rmax) / (1.0 - gamma);

  std::vector<double> init_term(N);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a)
      init_term[s * A + a] = (1.0 - gamma) * mdp.rho0[s] * pi[s * A + a];

  std::vector<double> nu(N, 0.0), zeta(N, 0.0), zeta_avg(N, 0.0);
  const long avg_from = iters - iters / 10;
  long avg_count = 0;

  std::vector<double> delta(N), w(N);
  for (long t = 1; t <= iters; ++t) {
    const double lr_nu = opt.step_nu / std::sqrt(static_cast<double>(t));
    const double lr_zeta = step_zeta / std::sqrt(static_cast<double>(t));

    std::vector<double> pnu = apply_ppi(mdp, pi, nu);
    for (std::size_t i = 0; i < N; ++i) {
      delta[i] = mdp.reward[i] + gamma * pnu[i] - nu[i];
      w[i] = d_data[i] * zeta[i];
    }
    std::vector<double> padj = apply_ppi_adjoint(mdp, pi, w);
    for (std::size_t i = 0; i < N; ++i) {
      const double gnu = init_term[i] + gamma * padj[i] - w[i];
      nu[i] = std::clamp(nu[i] - lr_nu * gnu, -nu_box, nu_box);
      zeta[i] = std::max(0.0, zeta[i] + lr_zeta * d_data[i] * delta[i]);
    }
    if (t > avg_from) {
      for (std::size_t i = 0; i < N; ++i) zeta_avg[i] += zeta[i];
      ++avg_count;
    }
  }
  for (double& z : zeta_avg) z /= static_cast<double>(avg_count);
  return finish_saddle(mdp, pi, d_data, gamma, std::move(zeta_avg), opt.residual_threshold);
}

inline SaddleResult saddle_solve_abs(const TabularMDP& mdp, const std::vector<double>& pi,
                                     const std::vector<double>& d_data, double gamma,
                                     const SaddleOptions& opt) {
  const std::size_t S = mdp.n_states, A = mdp.n_actions, N = S * A;
  const long outer = opt.iterations > 0 ? opt.iterations : 25000;
  const double step_zeta = opt.step_zeta > 0.0 ? opt.step_zeta : 0.2;
  const double radius = opt.trust_radius, kappa = opt.trust_penalty;
  const double eps = 1e-8;

  Eigen::MatrixXd M = -Eigen::MatrixXd::Identity(N, N);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a)
      for (std::size_t s2 = 0; s2 < S; ++s2)
        for (std::size_t a2 = 0; a2 < A; ++a2)
          M(s * A + a, s2 * A + a2) += gamma * mdp.trans(s, a, s2) * pi[s2 * A + a2];
  Eigen::VectorXd r(N), rho(N);
  for (std::size_t i = 0; i < N; ++i) r(i) = mdp.reward[i];
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a)
      rho(s * A + a) = (1.0 - gamma) * mdp.rho0[s] * pi[s * A + a];

  std::vector<double> zeta(N, 0.0), zeta_avg(N, 0.0);
  const long avg_from = outer - outer / 10;
  long avg_count = 0;

  auto huber = [eps](double x) {
    return std::fabs(x) <= eps ? x * x / (2.0 * eps) + eps / 2.0 : std::fabs(x);
  };
  auto objective = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd d = r + M * v;
    double o = rho.dot(v);
    for (std::size_t i = 0; i < N; ++i) {
      o += d_data[i] * zeta[i] * huber(d(i));
      const double pen = std::max(0.0, std::fabs(d(i)) - radius);
      o += kappa * pen * pen;
    }
    return o;
  };

  Eigen::VectorXd nu = Eigen::VectorXd::Zero(N);
  for (long t = 1; t <= outer; ++t) {
    for (int k = 0; k < opt.inner_iterations; ++k) {
      Eigen::VectorXd d = r + M * nu;
      Eigen::VectorXd curv(N);
      Eigen::VectorXd g = rho;
      for (std::size_t i = 0; i < N; ++i) {
        const double u = std::max(eps, std::fabs(d(i)));
        const double wi = d_data[i] * zeta[i];
        const double pen = std::max(0.0, std::fabs(d(i)) - radius);
        const double sg = d(i) > 0.0 ? 1.0 : (d(i) < 0.0 ? -1.0 : 0.0);
        g += M.row(i).transpose() * (wi * d(i) / u + 2.0 * kappa * pen * sg);
        curv(i) = wi / u + (pen > 0.0 ? 2.0 * kappa : 0.0);
      }
      Eigen::MatrixXd H = M.transpose() * curv.asDiagonal() * M;
      H.diagonal().array() += 1e-12 + 1e-9 * std::fabs(H.trace()) / static_cast<double>(N);
      Eigen::VectorXd p = H.ldlt().solve(-g);

      const double f0 = objective(nu);
      double step = 1.0;
      Eigen::VectorXd cand;
      bool moved = false;
      for (int ls = 0; ls < 50; ++ls) {
        cand = nu + step * p;
        if (objective(cand) < f0 - 1e-14) {
          moved = true;
          break;
        }
        step *= 0.5;
      }
      if (!moved) break;
      // The Newton model under-estimates useful step lengths near the
      // kinks, so extend the step while it keeps improving.
      double fbest = objective(cand);
      for (int ls = 0; ls < 50; ++ls) {
        Eigen::VectorXd wider = nu + 2.0 * step * p;
        const double fw = objective(wider);
        if (fw < fbest - 1e-14) {
          step *= 2.0;
          cand = wider;
          fbest = fw;
        } else {
          break;
        }
      }
      const bool tiny = (cand - nu).lpNorm<Eigen::Infinity>() < 1e-11;
      nu = cand;
      if (tiny) break;
    }

    Eigen::VectorXd d = r + M * nu;
    const double lr_zeta = step_zeta / std::sqrt(static_cast<double>(t));
    for (std::size_t i = 0; i < N; ++i)
      zeta[i] = std::max(0.0, zeta[i] + lr_zeta * d_data[i] * std::fabs(d(i)));
    if (t > avg_from) {
      for (std::size_t i = 0; i < N; ++i) zeta_avg[i] += zeta[i];
      ++avg_count;
    }
  }
  for (double& z : zeta_avg) z /= static_cast<double>(avg_count);
  return finish_saddle(mdp, pi, d_data, gamma, std::move(zeta_avg), opt.residual_threshold);
}

}  // namespace detail

inline SaddleResult saddle_solve(const TabularMDP& mdp, const std::vector<double>& pi,
                                 const std::vector<double>& d_data, double gamma,
                                 bool abs_mode, const SaddleOptions& opt = {}) {
  detail::check_policy(mdp, pi);
  if (d_data.size() != mdp.n_states * mdp.n_actions)
    throw std::invalid_argument("saddle_solve: d_data size");
  for (double p : d_data)
    if (!(p > 0.0)) throw std::invalid_argument("saddle_solve: d_data must have full support");
  return abs_mode ? detail::saddle_solve_abs(mdp, pi, d_data, gamma, opt)
                  : detail::saddle_solve_signed(mdp, pi, d_data, gamma, opt);
}

// Convenience bundle for fixtures: occupancy, ratio and value of pi against
// a given data distribution.
inline ExactQuantities exact_quantities(const TabularMDP& mdp, const std::vector<double>& pi,
                                        const std::vector<double>& d_data, double gamma) {
  ExactQuantities q;
  q.d_pi = stationary_distribution(mdp, pi, gamma);
  q.d_data = d_data;
  q.zeta_star = exact_ratio(q.d_pi, d_data);
  q.mu_pi = 0.0;
  for (std::size_t i = 0; i < q.d_pi.size(); ++i) q.mu_pi += q.d_pi[i] * mdp.reward[i];
  return q;
}

}  // namespace oracle
}  // namespace dicerl
