#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace uapforge::grad {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

// One bias-corrected Adam step. Throws std::invalid_argument on a length
// mismatch and std::domain_error if the gradient holds a NaN.
void adam_update(std::span<double> params, std::span<const double> grad, AdamState& state,
                 double lr);

}  // namespace uapforge::grad
