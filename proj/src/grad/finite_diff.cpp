#include "uapforge/grad/finite_diff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace uapforge::grad {

namespace {

double eval_at(const ScalarFn& fn, const Shape& shape, const std::vector<double>& x) {
  const Tensor out = fn(Tensor(shape, x));
  if (out.size() != 1) throw std::invalid_argument("finite_diff_check: fn is not scalar-valued");
  return out.item();
}

}  // namespace

FiniteDiffReport finite_diff_check(const ScalarFn& fn, const Tensor& point, double rel_tol) {
  FiniteDiffReport report;
  const Shape shape = point.shape();
  std::vector<double> x(point.data().begin(), point.data().end());

  {
    Tape tape;
    Tensor var = tape.variable(shape, x);
    Tensor out = fn(var);
    if (out.size() != 1) throw std::invalid_argument("finite_diff_check: fn is not scalar-valued");
    if (!out.requires_grad()) {
      // Constant function: gradient is identically zero.
      report.analytic.assign(x.size(), 0.0);
    } else {
      tape.backward(out);
      report.analytic.assign(var.grad().begin(), var.grad().end());
    }
  }

  const double f0 = eval_at(fn, shape, x);
  report.numeric.resize(x.size());
  std::vector<double> onesided_gap(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    const double h = 1e-5 * std::max(1.0, std::fabs(xi));
    x[i] = xi + h;
    const double fp = eval_at(fn, shape, x);
    x[i] = xi - h;
    const double fm = eval_at(fn, shape, x);
    x[i] = xi;
    report.numeric[i] = (fp - fm) / (2.0 * h);
    onesided_gap[i] = std::fabs((fp - f0) / h - (f0 - fm) / h);
  }

  double scale = 0.0;
  for (double g : report.analytic) scale = std::max(scale, std::fabs(g));
  const double floor = std::max(1e-3 * scale, 1e-12);

  for (std::size_t i = 0; i < x.size(); ++i) {
    const double a = report.analytic[i];
    const double n = report.numeric[i];
    // A smooth function gives a one-sided gap of about h * |f''|; a kink
    // gives a gap of the size of the derivative jump.
    const double h = 1e-5 * std::max(1.0, std::fabs(x[i]));
    if (onesided_gap[i] > std::sqrt(h) * std::max({1.0, std::fabs(a), std::fabs(n)})) {
      report.nonsmooth.push_back(i);
      continue;
    }
    const double abs_err = std::fabs(a - n);
    const double rel_err = abs_err / std::max({std::fabs(a), std::fabs(n), floor});
    report.max_abs_error = std::max(report.max_abs_error, abs_err);
    if (rel_err > report.max_rel_error) {
      report.max_rel_error = rel_err;
      report.worst_index = i;
    }
  }
  report.passed = report.max_rel_error < rel_tol;
  return report;
}

}  // namespace uapforge::grad
