#pragma once

#include <cstdint>
#include <vector>

#include "pipcfr/tensor.hpp"

namespace pipcfr {

// Bias-corrected Adam over a fixed parameter list. The effective step size is
// learning_rate * decay_rate^epoch; the trainer advances `epoch` once per
// pass over the data.
struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double decay_rate = 1.0;  // in (0, 1]
  long step = 0;
  int epoch = 0;

  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  void init(const std::vector<Tensor>& params);
  double effective_lr() const;
};

// Applies one update using each parameter's accumulated grad buffer.
// Throws ShapeError if the state does not match the parameter list.
void adam_step(std::vector<Tensor>& params, AdamState& state);

}  // namespace pipcfr
