#include "uapforge/grad/adam.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace uapforge::grad {

void adam_update(std::span<double> params, std::span<const double> grad, AdamState& state,
                 double lr) {
  const std::size_t n = params.size();
  if (grad.size() != n || state.m.size() != n || state.v.size() != n) {
    throw std::invalid_argument("adam_update: length mismatch (params " + std::to_string(n) +
                                ", grad " + std::to_string(grad.size()) + ", state " +
                                std::to_string(state.m.size()) + ")");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (std::isnan(grad[i])) {
      throw std::domain_error("adam_update: NaN gradient at index " + std::to_string(i));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

}  // namespace uapforge::grad
