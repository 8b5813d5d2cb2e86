#include "pipcfr/adam.hpp"

#include <cmath>

#include "pipcfr/errors.hpp"

namespace pipcfr {

void AdamState::init(const std::vector<Tensor>& params) {
  first_moment.clear();
  second_moment.clear();
  for (const Tensor& p : params) {
    first_moment.emplace_back(p.size(), 0.0);
    second_moment.emplace_back(p.size(), 0.0);
  }
  step = 0;
}

double AdamState::effective_lr() const {
  return learning_rate * std::pow(decay_rate, epoch);
}

void adam_step(std::vector<Tensor>& params, AdamState& state) {
  if (state.first_moment.size() != params.size())
    throw ShapeError("adam_step: state tracks " + std::to_string(state.first_moment.size()) +
                     " tensors, got " + std::to_string(params.size()));
  ++state.step;
  const double lr = state.effective_lr();
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = params[pi];
    const std::vector<double>& g = p.grad();
    auto& m = state.first_moment[pi];
    auto& v = state.second_moment[pi];
    if (m.size() != g.size())
      throw ShapeError("adam_step: moment size " + std::to_string(m.size()) +
                       " does not match gradient size " + std::to_string(g.size()));
    auto& w = p.mutable_data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

}  // namespace pipcfr
