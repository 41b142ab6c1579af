#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dicerl/rng.hpp"

namespace dicerl {

// -------------------------------------------------------------------------
// Tabular MDPs

struct TabularMDP {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::vector<double> transition;  // [s][a][s'], row-major
  std::vector<double> reward;      // [s][a]
  std::vector<double> rho0;        // initial state distribution
  double gamma = 0.99;

  double trans(std::size_t s, std::size_t a, std::size_t s2) const {
    return transition[(s * n_actions + a) * n_states + s2];
  }
  double& trans(std::size_t s, std::size_t a, std::size_t s2) {
    return transition[(s * n_actions + a) * n_states + s2];
  }
  double rew(std::size_t s, std::size_t a) const { return reward[s * n_actions + a]; }

  void validate() const {
    if (n_states == 0 || n_actions == 0)
      throw std::invalid_argument("TabularMDP: empty state or action space");
    if (!(gamma > 0.0 && gamma < 1.0))
      throw std::invalid_argument("TabularMDP: gamma outside (0, 1)");
    for (std::size_t s = 0; s < n_states; ++s)
      for (std::size_t a = 0; a < n_actions; ++a) {
        double sum = 0.0;
        for (std::size_t s2 = 0; s2 < n_states; ++s2) {
          const double p = trans(s, a, s2);
          if (p < 0.0) throw std::invalid_argument("TabularMDP: negative probability");
          sum += p;
        }
        if (std::fabs(sum - 1.0) > 1e-12)
          throw std::invalid_argument("TabularMDP: transition row does not sum to 1");
      }
    double r0 = 0.0;
    for (double p : rho0) {
      if (p < 0.0) throw std::invalid_argument("TabularMDP: negative rho0 entry");
      r0 += p;
    }
    if (std::fabs(r0 - 1.0) > 1e-12)
      throw std::invalid_argument("TabularMDP: rho0 does not sum to 1");
  }

  std::size_t sample_initial(Rng& rng) const { return sample_from(rho0, rng); }

  // Next state under T(.|s, a); rewards are R(s, a). Infinite horizon, never
  // terminates.
  std::pair<std::size_t, double> step(std::size_t s, std::size_t a, Rng& rng) const {
    if (s >= n_states || a >= n_actions)
      throw std::out_of_range("TabularMDP::step: state or action index out of range");
    const double* row = &transition[(s * n_actions + a) * n_states];
    double u = rng.uniform();
    std::size_t s2 = n_states - 1;
    for (std::size_t i = 0; i < n_states; ++i) {
      u -= row[i];
      if (u < 0.0) {
        s2 = i;
        break;
      }
    }
    return {s2, rew(s, a)};
  }

  static std::size_t sample_from(const std::vector<double>& dist, Rng& rng) {
    double u = rng.uniform();
    for (std::size_t i = 0; i < dist.size(); ++i) {
      u -= dist[i];
      if (u < 0.0) return i;
    }
    return dist.size() - 1;
  }
};

// Transition rows "s a s' prob reward", one per line. '#' starts a comment.
// Optional directives: "gamma <g>" and "rho0 <s> <p>" (rho0 is uniform when
// no directive appears; it is renormalized otherwise). The reward column
// must be consistent across rows sharing (s, a).
inline TabularMDP load_tabular_mdp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open MDP file: " + path);

  struct Row {
    std::size_t s, a, s2;
    double p, r;
  };
  std::vector<Row> rows;
  std::map<std::size_t, double> rho;
  double gamma = 0.99;
  std::size_t max_s = 0, max_a = 0;

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string first;
    if (!(ls >> first)) continue;
    if (first == "gamma") {
      if (!(ls >> gamma)) throw std::runtime_error("bad gamma directive at line " + std::to_string(lineno));
      continue;
    }
    if (first == "rho0") {
      std::size_t s;
      double p;
      if (!(ls >> s >> p)) throw std::runtime_error("bad rho0 directive at line " + std::to_string(lineno));
      rho[s] += p;
      max_s = std::max(max_s, s);
      continue;
    }
    Row row;
    try {
      row.s = std::stoul(first);
    } catch (...) {
      throw std::runtime_error("bad row at line " + std::to_string(lineno));
    }
    if (!(ls >> row.a >> row.s2 >> row.p >> row.r))
      throw std::runtime_error("bad row at line " + std::to_string(lineno));
    max_s = std::max({max_s, row.s, row.s2});
    max_a = std::max(max_a, row.a);
    rows.push_back(row);
  }
  if (rows.empty()) throw std::runtime_error("MDP file has no transition rows: " + path);

  TabularMDP mdp;
  mdp.n_states = max_s + 1;
  mdp.n_actions = max_a + 1;
  mdp.gamma = gamma;
  mdp.transition.assign(mdp.n_states * mdp.n_actions * mdp.n_states, 0.0);
  mdp.reward.assign(mdp.n_states * mdp.n_actions, 0.0);
  std::vector<bool> seen(mdp.n_states * mdp.n_actions, false);
  for (const Row& row : rows) {
    mdp.trans(row.s, row.a, row.s2) += row.p;
    const std::size_t sa = row.s * mdp.n_actions + row.a;
    if (seen[sa] && std::fabs(mdp.reward[sa] - row.r) > 1e-12)
      throw std::runtime_error("inconsistent reward for state " + std::to_string(row.s) +
                               " action " + std::to_string(row.a));
    mdp.reward[sa] = row.r;
    seen[sa] = true;
  }

  if (rho.empty()) {
    mdp.rho0.assign(mdp.n_states, 1.0 / static_cast<double>(mdp.n_states));
  } else {
    mdp.rho0.assign(mdp.n_states, 0.0);
    double total = 0.0;
    for (const auto& [s, p] : rho) total += p;
    for (const auto& [s, p] : rho) mdp.rho0[s] = p / total;
  }
  mdp.validate();
  return mdp;
}

// Random MDP with normalized-uniform transition rows, rewards uniform in
// [0, reward_scale], normalized-uniform rho0.
inline TabularMDP random_mdp(Rng& rng, std::size_t n_states, std::size_t n_actions,
                             double reward_scale, double gamma = 0.99) {
  if (n_states < 1 || n_actions < 1)
    throw std::invalid_argument("random_mdp: need at least one state and action");
  TabularMDP mdp;
  mdp.n_states = n_states;
  mdp.n_actions = n_actions;
  mdp.gamma = gamma;
  mdp.transition.resize(n_states * n_actions * n_states);
  mdp.reward.resize(n_states * n_actions);
  for (std::size_t s = 0; s < n_states; ++s)
    for (std::size_t a = 0; a < n_actions; ++a) {
      double sum = 0.0;
      for (std::size_t s2 = 0; s2 < n_states; ++s2) {
        // Offset keeps every entry strictly positive so rows have full
        // support (the oracle fixtures rely on it).
        const double w = 0.05 + rng.uniform();
        mdp.trans(s, a, s2) = w;
        sum += w;
      }
      for (std::size_t s2 = 0; s2 < n_states; ++s2) mdp.trans(s, a, s2) /= sum;
      // Exact renormalization: make the row sum to 1 within 1e-12 even after
      // division rounding.
      double check = 0.0;
      for (std::size_t s2 = 0; s2 + 1 < n_states; ++s2) check += mdp.trans(s, a, s2);
      mdp.trans(s, a, n_states - 1) = 1.0 - check;
      mdp.reward[s * n_actions + a] = reward_scale * rng.uniform();
    }
  mdp.rho0.resize(n_states);
  double sum = 0.0;
  for (double& p : mdp.rho0) {
    p = 0.05 + rng.uniform();
    sum += p;
  }
  for (double& p : mdp.rho0) p /= sum;
  double check = 0.0;
  for (std::size_t s = 0; s + 1 < n_states; ++s) check += mdp.rho0[s];
  mdp.rho0[n_states - 1] = 1.0 - check;
  mdp.validate();
  return mdp;
}

// -------------------------------------------------------------------------
// Continuous control toys

// Two deterministic tasks behind one interface:
//   pointmass: 2-D double integrator, state [px py vx vy], reward
//     -|p - goal|, goal fixed at (1, 0), horizon 100.
//   pendulum: torque-limited swing-up, state [cos th, sin th, thdot],
//     reward -(angle^2 + 0.1 vel^2 + 0.001 torque^2) with angle measured
//     from upright, horizon 200.
// Actions live in [-1, 1]^dim and are clipped before the dynamics.
class ContinuousEnv {
 public:
  enum class Kind { kPointMass, kPendulum };

  static ContinuousEnv make(const std::string& name) {
    ContinuousEnv env;
    if (name == "pointmass" || name == "point-mass") {
      env.kind_ = Kind::kPointMass;
      env.state_dim_ = 4;
      env.action_dim_ = 2;
      env.horizon_ = 100;
    } else if (name == "pendulum") {
      env.kind_ = Kind::kPendulum;
      env.state_dim_ = 3;
      env.action_dim_ = 1;
      env.horizon_ = 200;
    } else {
      throw std::invalid_argument("unknown continuous env: " + name);
    }
    return env;
  }

  Kind kind() const { return kind_; }
  std::size_t state_dim() const { return state_dim_; }
  std::size_t action_dim() const { return action_dim_; }
  std::size_t horizon() const { return horizon_; }

  // pointmass: position uniform in [-0.1, 0.1]^2, zero velocity.
  // pendulum: angle uniform in [-pi, pi], velocity uniform in [-1, 1].
  std::vector<double> reset(Rng& rng) const {
    if (kind_ == Kind::kPointMass) {
      return {rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), 0.0, 0.0};
    }
    const double th = rng.uniform(-kPi, kPi);
    const double thdot = rng.uniform(-1.0, 1.0);
    return {std::cos(th), std::sin(th), thdot};
  }

  struct Step {
    std::vector<double> state;
    double reward;
  };

  // Deterministic dynamics; episode truncation at the horizon is handled by
  // the caller (it is not an environment termination).
  Step step(const std::vector<double>& state, const std::vector<double>& action) const {
    if (state.size() != state_dim_) throw std::invalid_argument("env step: bad state size");
    if (action.size() != action_dim_) throw std::invalid_argument("env step: bad action size");
    std::vector<double> a(action);
    for (double& x : a) x = std::clamp(x, -1.0, 1.0);

    if (kind_ == Kind::kPointMass) {
      // Semi-implicit Euler: v += dt * a, p += dt * v.
      const double dt = kPointMassDt;
      double vx = std::clamp(state[2] + dt * a[0], -kPointMassVMax, kPointMassVMax);
      double vy = std::clamp(state[3] + dt * a[1], -kPointMassVMax, kPointMassVMax);
      double px = state[0] + dt * vx;
      double py = state[1] + dt * vy;
      const double dxg = px - kGoalX, dyg = py - kGoalY;
      const double reward = -std::sqrt(dxg * dxg + dyg * dyg);
      return {{px, py, vx, vy}, reward};
    }

    const double th = std::atan2(state[1], state[0]);
    const double thdot = state[2];
    const double torque = kTorqueScale * a[0];
    const double cost = th * th + 0.1 * thdot * thdot + 0.001 * torque * torque;
    // Classic pendulum update with gravity 10, mass 1, length 1.
    const double g = 10.0, m = 1.0, l = 1.0, dt = kPendulumDt;
    double new_thdot = thdot + (3.0 * g / (2.0 * l) * std::sin(th) +
                                3.0 / (m * l * l) * torque) *
                                   dt;
    new_thdot = std::clamp(new_thdot, -kPendulumVMax, kPendulumVMax);
    double new_th = th + new_thdot * dt;
    return {{std::cos(new_th), std::sin(new_th), new_thdot}, -cost};
  }

  static constexpr double kPi = 3.141592653589793238462643383279502884;
  static constexpr double kPointMassDt = 0.05;
  static constexpr double kPointMassVMax = 2.0;
  static constexpr double kGoalX = 1.0;
  static constexpr double kGoalY = 0.0;
  static constexpr double kPendulumDt = 0.05;
  static constexpr double kPendulumVMax = 8.0;
  static constexpr double kTorqueScale = 2.0;

 private:
  Kind kind_ = Kind::kPointMass;
  std::size_t state_dim_ = 0;
  std::size_t action_dim_ = 0;
  std::size_t horizon_ = 0;
};

// -------------------------------------------------------------------------
// Replay buffer

// done marks a true environment termination only; horizon truncation is
// stored as done = false so targets keep bootstrapping.
struct Transition {
  std::vector<double> s;
  std::vector<double> a;
  double r = 0.0;
  std::vector<double> s2;
  bool done = false;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("ReplayBuffer: zero capacity");
    storage_.reserve(std::min<std::size_t>(capacity, 1 << 16));
  }

  std::size_t size() const { return storage_.size(); }
  std::size_t capacity() const { return capacity_; }

  void push(Transition t) {
    if (storage_.size() < capacity_) {
      storage_.push_back(std::move(t));
    } else {
      storage_[head_] = std::move(t);
      head_ = (head_ + 1) % capacity_;
    }
  }

  const Transition& at(std::size_t i) const { return storage_[i]; }

  // Uniform draws with replacement.
  std::vector<std::size_t> sample_indices(std::size_t batch, Rng& rng) const {
    if (storage_.empty()) throw std::runtime_error("ReplayBuffer: sample from empty buffer");
    std::vector<std::size_t> idx(batch);
    for (std::size_t& i : idx) i = rng.uniform_index(storage_.size());
    return idx;
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // next slot to overwrite once full
  std::vector<Transition> storage_;
};

}  // namespace dicerl
