#include <catch2/catch_amalgamated.hpp>
#include <cstdio>
#include <fstream>

#include "dicerl/envs.hpp"

using namespace dicerl;

namespace {

// Deterministic two-state cycle s0 -> s1 -> s0 with a single action.
TabularMDP two_state_cycle(double gamma = 0.5) {
  TabularMDP mdp;
  mdp.n_states = 2;
  mdp.n_actions = 1;
  mdp.gamma = gamma;
  mdp.transition = {0, 1, 1, 0};
  mdp.reward = {1.0, 0.0};
  mdp.rho0 = {1.0, 0.0};
  mdp.validate();
  return mdp;
}

}  // namespace

TEST_CASE("tabular reset follows rho0") {
  TabularMDP mdp = two_state_cycle();
  mdp.rho0 = {1.0, 0.0};
  Rng rng(1);
  for (int i = 0; i < 50; ++i) CHECK(mdp.sample_initial(rng) == 0);
}

TEST_CASE("tabular step follows a deterministic table") {
  TabularMDP mdp = two_state_cycle();
  Rng rng(2);
  auto [s2, r] = mdp.step(0, 0, rng);
  CHECK(s2 == 1);
  CHECK(r == 1.0);
  auto [s3, r2] = mdp.step(1, 0, rng);
  CHECK(s3 == 0);
  CHECK(r2 == 0.0);
  CHECK_THROWS_AS(mdp.step(5, 0, rng), std::out_of_range);
}

TEST_CASE("tabular step frequencies match the transition row") {
  Rng mk(33);
  TabularMDP mdp = random_mdp(mk, 4, 2, 1.0);
  Rng rng(7);
  const std::size_t s = 2, a = 1, n = 100000;
  std::vector<double> freq(mdp.n_states, 0.0);
  for (std::size_t i = 0; i < n; ++i) freq[mdp.step(s, a, rng).first] += 1.0;
  double tv = 0.0;
  for (std::size_t s2 = 0; s2 < mdp.n_states; ++s2)
    tv += std::fabs(freq[s2] / n - mdp.trans(s, a, s2));
  CHECK(tv / 2.0 < 0.01);
}

TEST_CASE("random_mdp invariants") {
  SECTION("degenerate 1x1 is fully forced") {
    Rng rng(0);
    TabularMDP mdp = random_mdp(rng, 1, 1, 1.0);
    CHECK(mdp.trans(0, 0, 0) == 1.0);
    CHECK(mdp.rho0[0] == 1.0);
  }
  SECTION("rows sum to one within 1e-12") {
    Rng rng(4);
    TabularMDP mdp = random_mdp(rng, 5, 2, 2.0);
    for (std::size_t s = 0; s < 5; ++s)
      for (std::size_t a = 0; a < 2; ++a) {
        double sum = 0.0;
        for (std::size_t s2 = 0; s2 < 5; ++s2) sum += mdp.trans(s, a, s2);
        CHECK(std::fabs(sum - 1.0) <= 1e-12);
      }
  }
  SECTION("same seed, same MDP") {
    Rng a(9), b(9);
    TabularMDP m1 = random_mdp(a, 5, 2, 1.0);
    TabularMDP m2 = random_mdp(b, 5, 2, 1.0);
    CHECK(m1.transition == m2.transition);
    CHECK(m1.reward == m2.reward);
    CHECK(m1.rho0 == m2.rho0);
  }
}

TEST_CASE("mdp file loader") {
  const std::string path = "test_mdp_fixture.txt";
  {
    std::ofstream out(path);
    out << "# two state cycle\n";
    out << "gamma 0.5\n";
    out << "rho0 0 1.0\n";
    out << "0 0 1 1.0 1.0\n";
    out << "1 0 0 1.0 0.0\n";
  }
  TabularMDP mdp = load_tabular_mdp(path);
  CHECK(mdp.n_states == 2);
  CHECK(mdp.n_actions == 1);
  CHECK(mdp.gamma == 0.5);
  CHECK(mdp.rho0 == std::vector<double>{1.0, 0.0});
  CHECK(mdp.trans(0, 0, 1) == 1.0);
  CHECK(mdp.rew(0, 0) == 1.0);
  std::remove(path.c_str());

  CHECK_THROWS_AS(load_tabular_mdp("does_not_exist.txt"), std::runtime_error);

  {
    std::ofstream out(path);
    out << "0 0 0 1.0 1.0\n";
    out << "0 0 1 0.5 1.0\n";  // row sums to 1.5
  }
  CHECK_THROWS_AS(load_tabular_mdp(path), std::invalid_argument);
  std::remove(path.c_str());
}

TEST_CASE("pointmass reset and one-step integration") {
  ContinuousEnv env = ContinuousEnv::make("pointmass");
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    auto s = env.reset(rng);
    REQUIRE(s.size() == 4);
    CHECK(std::fabs(s[0]) <= 0.1);
    CHECK(std::fabs(s[1]) <= 0.1);
    CHECK(s[2] == 0.0);
    CHECK(s[3] == 0.0);
  }

  // Hand-integrated double integrator from the origin under action (1, 0):
  // v = (dt, 0), p = (dt^2, 0).
  auto out = env.step({0, 0, 0, 0}, {1.0, 0.0});
  const double dt = ContinuousEnv::kPointMassDt;
  CHECK(out.state[2] == Catch::Approx(dt));
  CHECK(out.state[0] == Catch::Approx(dt * dt));
  const double ex = dt * dt - ContinuousEnv::kGoalX;
  CHECK(out.reward ==
        Catch::Approx(-std::sqrt(ex * ex + ContinuousEnv::kGoalY * ContinuousEnv::kGoalY)));

  // Actions outside the box are clipped before the dynamics.
  auto clipped = env.step({0, 0, 0, 0}, {50.0, 0.0});
  CHECK(clipped.state[2] == Catch::Approx(dt));
}

TEST_CASE("pendulum reset range and upright equilibrium") {
  ContinuousEnv env = ContinuousEnv::make("pendulum");
  Rng rng(12);
  for (int i = 0; i < 20; ++i) {
    auto s = env.reset(rng);
    REQUIRE(s.size() == 3);
    CHECK(std::fabs(std::atan2(s[1], s[0])) <= ContinuousEnv::kPi);
    CHECK(std::fabs(s[2]) <= 1.0);
    CHECK(s[0] * s[0] + s[1] * s[1] == Catch::Approx(1.0));
  }

  auto out = env.step({1.0, 0.0, 0.0}, {0.0});
  CHECK(out.reward == Catch::Approx(0.0).margin(1e-12));
  CHECK(std::fabs(std::atan2(out.state[1], out.state[0])) < 1e-6);
}

TEST_CASE("continuous states stay finite over a full horizon") {
  for (const char* name : {"pointmass", "pendulum"}) {
    ContinuousEnv env = ContinuousEnv::make(name);
    Rng rng(77);
    auto s = env.reset(rng);
    for (std::size_t t = 0; t < env.horizon(); ++t) {
      std::vector<double> a(env.action_dim());
      for (double& x : a) x = rng.uniform(-1, 1);
      s = env.step(s, a).state;
      for (double v : s) REQUIRE(std::isfinite(v));
    }
  }
  CHECK_THROWS_AS(ContinuousEnv::make("mujoco"), std::invalid_argument);
}

TEST_CASE("replay buffer push semantics") {
  ReplayBuffer buf(2);
  CHECK(buf.size() == 0);
  buf.push({{0}, {0}, 1.0, {0}, false});
  CHECK(buf.size() == 1);
  buf.push({{0}, {0}, 2.0, {0}, false});
  buf.push({{0}, {0}, 3.0, {0}, false});
  CHECK(buf.size() == 2);
  // FIFO: the first transition was evicted.
  bool saw1 = false;
  for (std::size_t i = 0; i < buf.size(); ++i) saw1 |= buf.at(i).r == 1.0;
  CHECK_FALSE(saw1);

  ReplayBuffer big(10000);
  for (int i = 0; i < 10000; ++i) big.push({{0}, {0}, double(i), {0}, false});
  CHECK(big.size() == 10000);
}

TEST_CASE("replay buffer sampling") {
  SECTION("singleton buffer repeats its only entry") {
    ReplayBuffer buf(8);
    buf.push({{1}, {0}, 5.0, {1}, false});
    Rng rng(1);
    auto idx = buf.sample_indices(4, rng);
    REQUIRE(idx.size() == 4);
    for (std::size_t i : idx) CHECK(i == 0);
  }

  SECTION("empty buffer cannot be sampled") {
    ReplayBuffer buf(8);
    Rng rng(1);
    CHECK_THROWS_AS(buf.sample_indices(1, rng), std::runtime_error);
  }

  SECTION("fixed seed reproduces the batch") {
    ReplayBuffer buf(64);
    for (int i = 0; i < 64; ++i) buf.push({{double(i)}, {0}, 0.0, {0}, false});
    Rng a(5), b(5);
    CHECK(buf.sample_indices(32, a) == buf.sample_indices(32, b));
  }

  SECTION("index distribution is uniform (chi-square at 1e5 draws)") {
    const std::size_t n_items = 100, draws = 100000;
    ReplayBuffer buf(n_items);
    for (std::size_t i = 0; i < n_items; ++i) buf.push({{double(i)}, {0}, 0.0, {0}, false});
    Rng rng(99);
    std::vector<double> counts(n_items, 0.0);
    for (std::size_t i : buf.sample_indices(draws, rng)) counts[i] += 1.0;
    const double expected = double(draws) / n_items;
    double chi2 = 0.0;
    for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
    // 0.999 quantile of chi-square with 99 degrees of freedom.
    CHECK(chi2 < 148.23035916510173);
  }
}
