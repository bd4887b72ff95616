#include <cmath>
#include <stdexcept>

#include <gtest/gtest.h>

#include "uapforge/grad/finite_diff.hpp"
#include "uapforge/grad/ops.hpp"
#include "uapforge/rng.hpp"

using namespace uapforge;
using grad::Tape;
using grad::Tensor;

namespace {

Tensor random_tensor(Rng& rng, grad::Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(grad::numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v));
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

// Plain central differences, independent of finite_diff_check.
std::vector<double> numeric_grad(const grad::ScalarFn& fn, const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double h = 1e-6 * std::max(1.0, std::fabs(x[i]));
    auto up = values(x), down = values(x);
    up[i] += h;
    down[i] -= h;
    out[i] = (fn(Tensor(x.shape(), up)).item() - fn(Tensor(x.shape(), down)).item()) / (2 * h);
  }
  return out;
}

}  // namespace

TEST(Elementwise, AddAndScalarIdentity) {
  EXPECT_EQ(values(Tensor::vector({1, 2}) + Tensor::vector({3, 4})), (std::vector<double>{4, 6}));
  EXPECT_EQ(values(Tensor::vector({1.5, -2}) * 1.0), (std::vector<double>{1.5, -2}));
  EXPECT_EQ(values(Tensor::vector({5, 7}) - Tensor::scalar(1)), (std::vector<double>{4, 6}));
}

TEST(Elementwise, ShapeMismatchThrows) {
  EXPECT_THROW(Tensor::vector({1, 2}) + Tensor::vector({1, 2, 3}), std::invalid_argument);
}

TEST(Elementwise, DivisionByZeroPolicy) {
  EXPECT_THROW(Tensor::vector({2}) / Tensor::vector({0}), std::domain_error);
  Tape lenient(grad::TapeOptions{.strict_math = false});
  const Tensor x = lenient.variable({1}, {2.0});
  EXPECT_TRUE(std::isinf((x / Tensor::vector({0})).item()));
}

TEST(Matmul, Examples) {
  const Tensor m({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(values(grad::matmul(Tensor({2, 2}, {1, 0, 0, 1}), m)), values(m));
  EXPECT_EQ(grad::matmul(Tensor({1, 2}, {1, 2}), Tensor({2, 1}, {3, 4})).item(), 11.0);
  EXPECT_THROW(grad::matmul(Tensor({1, 2}, {1, 2}), Tensor({3, 1}, {1, 2, 3})),
               std::invalid_argument);
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  Rng rng(3);
  const Tensor b = random_tensor(rng, {4, 3});
  const auto r = grad::finite_diff_check(
      [&](const Tensor& a) { return grad::sum(grad::matmul(a, b)); }, random_tensor(rng, {2, 4}),
      1e-4);
  EXPECT_TRUE(r.passed) << r.max_rel_error;
}

TEST(Conv1d, BoxSumAndDelta) {
  const Tensor s({1, 4}, {1, 1, 1, 1});
  EXPECT_EQ(values(grad::conv1d(s, Tensor({1, 1, 2}, {1, 1}), 1)), (std::vector<double>{2, 2, 2}));
  const Tensor x({1, 5}, {3, -1, 4, 1, -5});
  EXPECT_EQ(values(grad::conv1d(x, Tensor({1, 1, 1}, {1}), 1)), values(x));
}

TEST(Conv1d, OutputLengthAndShortInput) {
  const Tensor x = Tensor::zeros({2, 17});
  EXPECT_EQ(grad::conv1d(x, Tensor::zeros({3, 2, 4}), 3).shape(), (grad::Shape{3, 5}));
  EXPECT_THROW(grad::conv1d(Tensor::zeros({1, 2}), Tensor::zeros({1, 1, 3}), 1),
               std::invalid_argument);
}

TEST(Conv1d, GradientWrtSignalAndKernel) {
  Rng rng(4);
  const Tensor k = random_tensor(rng, {3, 1, 4});
  const Tensor s = random_tensor(rng, {1, 16});
  auto wrt_signal = grad::finite_diff_check(
      [&](const Tensor& x) { return grad::sum(grad::tanh(grad::conv1d(x, k, 2))); }, s, 1e-4);
  EXPECT_TRUE(wrt_signal.passed) << wrt_signal.max_rel_error;
  auto wrt_kernel = grad::finite_diff_check(
      [&](const Tensor& w) { return grad::sum(grad::tanh(grad::conv1d(s, w, 2))); }, k, 1e-4);
  EXPECT_TRUE(wrt_kernel.passed) << wrt_kernel.max_rel_error;
}

TEST(Unary, Examples) {
  EXPECT_EQ(values(grad::relu(Tensor::vector({-1, 2}))), (std::vector<double>{0, 2}));
  EXPECT_EQ(grad::exp(Tensor::vector({0})).item(), 1.0);
  Tape tape;
  const Tensor x = tape.variable({1}, {0.0});
  tape.backward(grad::sum(grad::abs(x)));
  EXPECT_EQ(x.grad()[0], 0.0);
}

TEST(Reduce, SumMeanAndEmptyAxis) {
  EXPECT_DOUBLE_EQ(grad::mean(Tensor::vector({1, 2, 3})).item(), 2.0);
  const Tensor empty({3, 0}, {});
  EXPECT_EQ(values(grad::sum(empty, 1)), (std::vector<double>{0, 0, 0}));
  EXPECT_THROW(grad::sum(Tensor::vector({1, 2}), 1), std::invalid_argument);
  Tape tape;
  const Tensor x = tape.variable({4}, {1, 2, 3, 4});
  tape.backward(grad::mean(x));
  for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 0.25);
}

TEST(Cosine, Examples) {
  const Tensor v = Tensor::vector({0.3, -1.2, 2.0});
  EXPECT_NEAR(grad::cosine_similarity(v, v).item(), 1.0, 1e-15);
  EXPECT_NEAR(grad::cosine_similarity(v, -v).item(), -1.0, 1e-15);
  EXPECT_EQ(grad::cosine_similarity(Tensor::vector({1, 0}), Tensor::vector({0, 1})).item(), 0.0);
  EXPECT_THROW(grad::cosine_similarity(v, Tensor::zeros({3})), std::domain_error);
}

TEST(Cosine, RangeOnRandomInputs) {
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const Tensor a = random_tensor(rng, {7}), b = random_tensor(rng, {7});
    const double c = grad::cosine_similarity(a, b).item();
    EXPECT_GE(c, -1 - 1e-12);
    EXPECT_LE(c, 1 + 1e-12);
  }
}

TEST(Backward, SumGivesOnes) {
  Tape tape;
  const Tensor x = tape.variable({3}, {1, 2, 3});
  tape.backward(grad::sum(x));
  EXPECT_EQ(values(Tensor({3}, {x.grad().begin(), x.grad().end()})),
            (std::vector<double>{1, 1, 1}));
}

TEST(Backward, Contract) {
  Tape tape;
  const Tensor x = tape.variable({2}, {1, 2});
  EXPECT_THROW(tape.backward(x * 2.0), std::invalid_argument);
  const Tensor y = grad::sum(x * x);
  tape.backward(y);
  EXPECT_THROW(tape.backward(y), std::logic_error);
  tape.reset();
  const Tensor z = grad::sum(x * 3.0);
  tape.backward(z);
  EXPECT_EQ(x.grad()[0], 3.0);
}

TEST(Backward, FanOutAccumulates) {
  Tape tape;
  const Tensor x = tape.variable({1}, {2.0});
  tape.backward(grad::sum(x * x + x));  // d/dx = 2x + 1
  EXPECT_DOUBLE_EQ(x.grad()[0], 5.0);
}

TEST(Backward, LinearityOfGradients) {
  Rng rng(6);
  const Tensor p = random_tensor(rng, {5});
  auto f = [](const Tensor& x) { return grad::sum(grad::tanh(x) * x); };
  auto g = [](const Tensor& x) { return grad::sum(grad::exp(x)); };
  auto grad_of = [&](auto fn) {
    Tape tape;
    const Tensor x = tape.variable(p);
    tape.backward(fn(x));
    return std::vector<double>(x.grad().begin(), x.grad().end());
  };
  const double a = 0.7, b = -1.3;
  const auto gf = grad_of(f), gg = grad_of(g);
  const auto combo = grad_of([&](const Tensor& x) { return a * f(x) + b * g(x); });
  for (std::size_t i = 0; i < p.size(); ++i) {
    EXPECT_NEAR(combo[i], a * gf[i] + b * gg[i], 1e-14 * (1 + std::fabs(combo[i])));
  }
}

TEST(Backward, DeterministicGradients) {
  Rng rng(7);
  const Tensor p = random_tensor(rng, {1, 40});
  const Tensor k = random_tensor(rng, {4, 1, 5});
  auto run = [&] {
    Tape tape;
    const Tensor x = tape.variable(p);
    tape.backward(grad::sum(grad::stats_pool(grad::tanh(grad::conv1d(x, k, 3)))));
    return std::vector<double>(x.grad().begin(), x.grad().end());
  };
  EXPECT_EQ(run(), run());
}

TEST(Backward, CosineOfTwoLayerToyMatchesNumeric) {
  Rng rng(8);
  const Tensor w1 = random_tensor(rng, {6, 8}), w2 = random_tensor(rng, {4, 6});
  const Tensor x = random_tensor(rng, {8, 1});
  auto f = [&](const Tensor& in) {
    return grad::reshape(grad::matmul(w2, grad::tanh(grad::matmul(w1, in))), {4});
  };
  const Tensor clean = f(x);
  auto loss = [&](const Tensor& delta) {
    return grad::cosine_similarity(clean, f(x + grad::reshape(delta, {8, 1})));
  };
  const Tensor delta = random_tensor(rng, {8}, -0.3, 0.3);
  Tape tape;
  const Tensor d = tape.variable(delta);
  tape.backward(loss(d));
  const auto num = numeric_grad(loss, delta);
  double scale = 0.0;
  for (double v : num) scale = std::max(scale, std::fabs(v));
  for (std::size_t i = 0; i < num.size(); ++i) {
    EXPECT_NEAR(d.grad()[i], num[i], 1e-3 * std::max(std::fabs(num[i]), 1e-3 * scale));
  }
}

TEST(FiniteDiff, LinearFunctionIsExact) {
  Rng rng(9);
  const Tensor c = random_tensor(rng, {6});
  const auto r = grad::finite_diff_check(
      [&](const Tensor& x) { return grad::sum(x * c); }, random_tensor(rng, {6}), 1e-8);
  EXPECT_TRUE(r.passed);
  EXPECT_LT(r.max_rel_error, 1e-8);
}

TEST(FiniteDiff, SmoothExpAbs) {
  Rng rng(10);
  const auto r = grad::finite_diff_check(
      [](const Tensor& x) { return grad::sum(grad::exp(grad::abs(x)) * x); },
      random_tensor(rng, {8}, 0.1, 2.0), 1e-4);
  EXPECT_TRUE(r.passed) << r.max_rel_error;
}

TEST(FiniteDiff, KinkIsFlaggedNotFailed) {
  const auto r = grad::finite_diff_check([](const Tensor& x) { return grad::sum(grad::abs(x)); },
                                         Tensor::vector({0.0, 0.5}), 1e-4);
  EXPECT_TRUE(r.passed);
  ASSERT_EQ(r.nonsmooth.size(), 1u);
  EXPECT_EQ(r.nonsmooth[0], 0u);
}
