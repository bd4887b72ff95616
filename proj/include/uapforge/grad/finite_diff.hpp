#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "uapforge/grad/tensor.hpp"

namespace uapforge::grad {

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;
  // Coordinates where the one-sided differences disagree like a kink; they
  // are reported here and excluded from the pass/fail decision.
  std::vector<std::size_t> nonsmooth;
  bool passed = true;
  std::vector<double> analytic;
  std::vector<double> numeric;
};

// Scalar-valued function of one tensor. It must build its result from the
// argument with grad ops so it can run both on a tape and on constants.
using ScalarFn = std::function<Tensor(const Tensor&)>;

// Compares the tape gradient of fn at `point` with central differences using
// step 1e-5 * max(1, |x_i|). Per coordinate the relative error is
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-3 * max_j |analytic_j|, 1e-12),
// so coordinates far below the gradient's scale are judged against that scale.
FiniteDiffReport finite_diff_check(const ScalarFn& fn, const Tensor& point, double rel_tol);

}  // namespace uapforge::grad
