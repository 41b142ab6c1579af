#include <catch2/catch_amalgamated.hpp>

#include "dicerl/adam.hpp"

using namespace dicerl;

TEST_CASE("adam first step moves by about lr against the gradient sign") {
  Tensor p({3}, {1.0, 2.0, 3.0});
  std::vector<Tensor*> params = {&p};
  AdamState st = AdamState::make(params);
  GradTable g;
  g[&p] = {1.0, 1.0, 1.0};
  adam_step(params, g, st, 0.001);
  for (double v : {p.vals()[0] - 1.0, p.vals()[1] - 2.0, p.vals()[2] - 3.0})
    CHECK(v == Catch::Approx(-0.001).margin(1e-9));
  CHECK(st.step == 1);
}

TEST_CASE("adam with zero gradients is the identity") {
  Tensor p({2}, {0.5, -0.5});
  std::vector<Tensor*> params = {&p};
  AdamState st = AdamState::make(params);
  GradTable empty;
  for (int i = 0; i < 3; ++i) adam_step(params, empty, st, 0.1);
  CHECK(p.vals() == std::vector<double>{0.5, -0.5});
  CHECK(st.step == 3);
}

TEST_CASE("two constant-gradient steps accumulate about 2 lr") {
  // With constant gradient g the bias-corrected mhat is exactly g and vhat
  // exactly g^2, so each update moves by lr * g / (|g| + eps).
  Tensor p({1}, {0.0});
  std::vector<Tensor*> params = {&p};
  AdamState st = AdamState::make(params);
  GradTable g;
  g[&p] = {2.0};
  adam_step(params, g, st, 0.001);
  adam_step(params, g, st, 0.001);
  CHECK(p.vals()[0] == Catch::Approx(-0.002).margin(1e-6));
}

TEST_CASE("adam rejects non-finite gradients and shape mismatches") {
  Tensor p({2}, {0.0, 0.0});
  std::vector<Tensor*> params = {&p};
  AdamState st = AdamState::make(params);
  GradTable bad;
  bad[&p] = {1.0, std::numeric_limits<double>::quiet_NaN()};
  CHECK_THROWS_AS(adam_step(params, bad, st, 0.01), std::runtime_error);

  GradTable wrong;
  wrong[&p] = {1.0};
  CHECK_THROWS_AS(adam_step(params, wrong, st, 0.01), std::invalid_argument);
}
