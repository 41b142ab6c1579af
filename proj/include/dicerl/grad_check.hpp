#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include "dicerl/tensor.hpp"

namespace dicerl {

// Compares reverse-mode gradients against central finite differences.
// `build_loss` must rebuild the scalar loss from the current parameter
// values every time it is called. Returns the max over all coordinates of
// |autodiff - fd| / max(1, |fd|). Parameters are restored on exit.
inline double grad_check(const std::function<Tensor(Tape&)>& build_loss,
                         const std::vector<Tensor*>& params, double fd_step) {
  if (!(fd_step > 1e-7 && fd_step < 1e-3))
    throw std::invalid_argument("grad_check: fd_step outside (1e-7, 1e-3)");

  Tape tape;
  Tensor loss = build_loss(tape);
  GradTable grads = tape.backward(loss);

  auto eval = [&]() {
    Tape t;
    return build_loss(t).value();
  };

  double worst = 0.0;
  for (Tensor* p : params) {
    auto it = grads.find(p);
    for (std::size_t j = 0; j < p->size(); ++j) {
      double& w = p->data()[j];
      const double saved = w;
      w = saved + fd_step;
      const double up = eval();
      w = saved - fd_step;
      const double down = eval();
      w = saved;
      const double fd = (up - down) / (2.0 * fd_step);
      const double ad = it == grads.end() ? 0.0 : it->second[j];
      const double err = std::fabs(ad - fd) / std::max(1.0, std::fabs(fd));
      if (err > worst) worst = err;
    }
  }
  return worst;
}

}  // namespace dicerl
