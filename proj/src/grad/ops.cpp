#include "uapforge/grad/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>
#include <string>

#include "record.hpp"

namespace uapforge::grad {

using detail::make_result;
using detail::Node;
using detail::tape_of;

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMat>;
using ConstRowMap = Eigen::Map<const RowMat>;

[[noreturn]] void shape_error(const std::string& op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(op + ": incompatible shapes " + to_string(a) + " and " +
                              to_string(b));
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) +
                                ", got shape " + to_string(t.shape()));
  }
}

enum class BinaryKind { add, sub, mul, div };

Tensor binary(const Tensor& a, const Tensor& b, BinaryKind kind, const char* name) {
  const auto tape = tape_of({&a, &b});
  const std::size_t na = a.size();
  const std::size_t nb = b.size();
  Shape shape;
  if (a.shape() == b.shape()) {
    shape = a.shape();
  } else if (nb == 1) {
    shape = a.shape();
  } else if (na == 1) {
    shape = b.shape();
  } else {
    shape_error(name, a.shape(), b.shape());
  }
  const std::size_t n = numel(shape);
  const std::size_t sa = na == 1 ? 0 : 1;
  const std::size_t sb = nb == 1 ? 0 : 1;
  const auto x = a.data();
  const auto y = b.data();

  if (kind == BinaryKind::div && detail::strict_math(tape)) {
    for (double v : y) {
      if (v == 0.0) throw std::domain_error("division by zero (strict_math)");
    }
  }

  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = x[i * sa];
    const double v = y[i * sb];
    switch (kind) {
      case BinaryKind::add: out[i] = u + v; break;
      case BinaryKind::sub: out[i] = u - v; break;
      case BinaryKind::mul: out[i] = u * v; break;
      case BinaryKind::div: out[i] = u / v; break;
    }
  }

  auto an = a.node();
  auto bn = b.node();
  return make_result(tape, std::move(shape), std::move(out), {an, bn},
                     [an, bn, kind, sa, sb](const Node& o) {
                       const std::size_t m = o.data.size();
                       for (std::size_t i = 0; i < m; ++i) {
                         const double g = o.grad[i];
                         const double u = an->data[i * sa];
                         const double v = bn->data[i * sb];
                         double ga = 0.0;
                         double gb = 0.0;
                         switch (kind) {
                           case BinaryKind::add: ga = g; gb = g; break;
                           case BinaryKind::sub: ga = g; gb = -g; break;
                           case BinaryKind::mul: ga = g * v; gb = g * u; break;
                           case BinaryKind::div: ga = g / v; gb = -g * u / (v * v); break;
                         }
                         if (an->requires_grad) an->grad[i * sa] += ga;
                         if (bn->requires_grad) bn->grad[i * sb] += gb;
                       }
                     });
}

// Elementwise unary op; derivative receives (input, output).
template <typename F, typename D>
Tensor unary(const Tensor& a, F f, D df) {
  const auto tape = tape_of({&a});
  const auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  auto an = a.node();
  return make_result(tape, a.shape(), std::move(out), {an}, [an, df](const Node& o) {
    for (std::size_t i = 0; i < o.data.size(); ++i) {
      an->grad[i] += o.grad[i] * df(an->data[i], o.data[i]);
    }
  });
}

// Decomposes a shape around `axis` into (outer, extent, inner) strides.
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

Tensor reduce_axis(const Tensor& a, std::size_t axis, bool average) {
  if (axis >= a.rank()) {
    throw std::invalid_argument("reduction axis " + std::to_string(axis) + " out of range for " +
                                to_string(a.shape()));
  }
  const auto tape = tape_of({&a});
  const AxisSplit s = split_axis(a.shape(), axis);
  if (average && s.extent == 0 && detail::strict_math(tape)) {
    throw std::domain_error("mean over an empty axis (strict_math)");
  }
  Shape shape = a.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  const double scale = average ? 1.0 / static_cast<double>(s.extent) : 1.0;
  const auto x = a.data();
  std::vector<double> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t e = 0; e < s.extent; ++e) {
      const double* row = x.data() + (o * s.extent + e) * s.inner;
      double* dst = out.data() + o * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += row[i];
    }
  }
  if (average) {
    for (double& v : out) v *= scale;
  }
  auto an = a.node();
  return make_result(tape, std::move(shape), std::move(out), {an}, [an, s, scale](const Node& o) {
    for (std::size_t ou = 0; ou < s.outer; ++ou) {
      for (std::size_t e = 0; e < s.extent; ++e) {
        double* dst = an->grad.data() + (ou * s.extent + e) * s.inner;
        const double* g = o.grad.data() + ou * s.inner;
        for (std::size_t i = 0; i < s.inner; ++i) dst[i] += g[i] * scale;
      }
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::mul, "mul"); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::div, "div"); }

Tensor neg(const Tensor& a) {
  return unary(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor abs(const Tensor& a) {
  return unary(
      a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor sqrt(const Tensor& a) {
  if (detail::strict_math(tape_of({&a}))) {
    for (double v : a.data()) {
      if (v < 0.0) throw std::domain_error("sqrt of a negative value (strict_math)");
    }
  }
  return unary(
      a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Tensor sum(const Tensor& a) {
  const auto tape = tape_of({&a});
  double total = 0.0;
  for (double v : a.data()) total += v;
  auto an = a.node();
  return make_result(tape, Shape{}, {total}, {an}, [an](const Node& o) {
    const double g = o.grad[0];
    for (double& v : an->grad) v += g;
  });
}

Tensor mean(const Tensor& a) {
  const std::size_t n = a.size();
  if (n == 0) {
    if (detail::strict_math(tape_of({&a}))) {
      throw std::domain_error("mean of an empty tensor (strict_math)");
    }
  }
  return div(sum(a), Tensor::scalar(static_cast<double>(n)));
}

Tensor sum(const Tensor& a, std::size_t axis) { return reduce_axis(a, axis, false); }
Tensor mean(const Tensor& a, std::size_t axis) { return reduce_axis(a, axis, true); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.shape()[0];
  const std::size_t k = a.shape()[1];
  const std::size_t n = b.shape()[1];
  if (b.shape()[0] != k) shape_error("matmul", a.shape(), b.shape());
  const auto tape = tape_of({&a, &b});
  std::vector<double> out(m * n);
  const auto ei = [](std::size_t v) { return static_cast<Eigen::Index>(v); };
  RowMap(out.data(), ei(m), ei(n)).noalias() =
      ConstRowMap(a.data().data(), ei(m), ei(k)) * ConstRowMap(b.data().data(), ei(k), ei(n));
  auto an = a.node();
  auto bn = b.node();
  return make_result(tape, Shape{m, n}, std::move(out), {an, bn},
                     [an, bn, m, k, n, ei](const Node& o) {
                       ConstRowMap g(o.grad.data(), ei(m), ei(n));
                       if (an->requires_grad) {
                         RowMap(an->grad.data(), ei(m), ei(k)).noalias() +=
                             g * ConstRowMap(bn->data.data(), ei(k), ei(n)).transpose();
                       }
                       if (bn->requires_grad) {
                         RowMap(bn->grad.data(), ei(k), ei(n)).noalias() +=
                             ConstRowMap(an->data.data(), ei(m), ei(k)).transpose() * g;
                       }
                     });
}

namespace {

Tensor conv1d_impl(const Tensor& signal, const Tensor& kernels, const Tensor* bias,
                   std::size_t stride) {
  require_rank(signal, 2, "conv1d");
  require_rank(kernels, 3, "conv1d");
  if (stride == 0) throw std::invalid_argument("conv1d: stride must be positive");
  const std::size_t cin = signal.shape()[0];
  const std::size_t len = signal.shape()[1];
  const std::size_t cout = kernels.shape()[0];
  const std::size_t ksize = kernels.shape()[2];
  if (kernels.shape()[1] != cin) shape_error("conv1d", signal.shape(), kernels.shape());
  if (ksize == 0) throw std::invalid_argument("conv1d: empty kernel");
  if (len < ksize) {
    throw std::invalid_argument("conv1d: signal length " + std::to_string(len) +
                                " shorter than kernel " + std::to_string(ksize));
  }
  if (bias) {
    require_rank(*bias, 1, "conv1d bias");
    if (bias->shape()[0] != cout) shape_error("conv1d bias", kernels.shape(), bias->shape());
  }
  const auto tape = bias ? tape_of({&signal, &kernels, bias}) : tape_of({&signal, &kernels});
  const std::size_t frames = (len - ksize) / stride + 1;
  const std::size_t width = cin * ksize;
  const auto ei = [](std::size_t v) { return static_cast<Eigen::Index>(v); };

  // im2col: row t holds the receptive field of output frame t.
  auto cols = std::make_shared<std::vector<double>>(frames * width);
  const double* x = signal.data().data();
  for (std::size_t t = 0; t < frames; ++t) {
    double* row = cols->data() + t * width;
    for (std::size_t c = 0; c < cin; ++c) {
      const double* src = x + c * len + t * stride;
      for (std::size_t k = 0; k < ksize; ++k) row[c * ksize + k] = src[k];
    }
  }

  std::vector<double> out(cout * frames);
  RowMap(out.data(), ei(cout), ei(frames)).noalias() =
      ConstRowMap(kernels.data().data(), ei(cout), ei(width)) *
      ConstRowMap(cols->data(), ei(frames), ei(width)).transpose();
  if (bias) {
    const auto b = bias->data();
    for (std::size_t o = 0; o < cout; ++o) {
      double* row = out.data() + o * frames;
      for (std::size_t t = 0; t < frames; ++t) row[t] += b[o];
    }
  }

  auto sn = signal.node();
  auto kn = kernels.node();
  detail::NodePtr bn = bias ? bias->node() : nullptr;
  std::vector<detail::NodePtr> inputs{sn, kn};
  if (bn) inputs.push_back(bn);
  // Backward only reads the im2col buffer for the kernel gradient.
  if (!tape || !kn->requires_grad) cols.reset();
  return make_result(
      tape, Shape{cout, frames}, std::move(out), std::move(inputs),
      [sn, kn, bn, cols, cin, len, cout, ksize, stride, frames, width, ei](const Node& o) {
        ConstRowMap g(o.grad.data(), ei(cout), ei(frames));
        if (kn->requires_grad) {
          RowMap(kn->grad.data(), ei(cout), ei(width)).noalias() +=
              g * ConstRowMap(cols->data(), ei(frames), ei(width));
        }
        if (bn && bn->requires_grad) {
          // Plain loop: Eigen's vectorized sum peels by address, so its
          // rounding would depend on where the buffer happens to land.
          for (std::size_t c = 0; c < cout; ++c) {
            const double* row = o.grad.data() + c * frames;
            double acc = 0.0;
            for (std::size_t t = 0; t < frames; ++t) acc += row[t];
            bn->grad[c] += acc;
          }
        }
        if (sn->requires_grad) {
          RowMat dcols = g.transpose() * ConstRowMap(kn->data.data(), ei(cout), ei(width));
          double* dx = sn->grad.data();
          for (std::size_t t = 0; t < frames; ++t) {
            const double* row = dcols.data() + t * width;
            for (std::size_t c = 0; c < cin; ++c) {
              double* dst = dx + c * len + t * stride;
              for (std::size_t k = 0; k < ksize; ++k) dst[k] += row[c * ksize + k];
            }
          }
        }
      });
}

}  // namespace

Tensor conv1d(const Tensor& signal, const Tensor& kernels, std::size_t stride) {
  return conv1d_impl(signal, kernels, nullptr, stride);
}

Tensor conv1d(const Tensor& signal, const Tensor& kernels, const Tensor& bias,
              std::size_t stride) {
  return conv1d_impl(signal, kernels, &bias, stride);
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) shape_error("reshape", a.shape(), shape);
  const auto tape = tape_of({&a});
  auto an = a.node();
  return make_result(tape, std::move(shape), an->data, {an}, [an](const Node& o) {
    for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
  });
}

Tensor slice(const Tensor& a, std::size_t begin, std::size_t end) {
  require_rank(a, 1, "slice");
  if (begin > end || end > a.size()) {
    throw std::invalid_argument("slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                                ") out of range for " + to_string(a.shape()));
  }
  const auto tape = tape_of({&a});
  const auto x = a.data();
  std::vector<double> out(x.begin() + static_cast<std::ptrdiff_t>(begin),
                          x.begin() + static_cast<std::ptrdiff_t>(end));
  auto an = a.node();
  return make_result(tape, Shape{end - begin}, std::move(out), {an}, [an, begin](const Node& o) {
    for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[begin + i] += o.grad[i];
  });
}

Tensor concat(const Tensor& a, const Tensor& b) {
  require_rank(a, 1, "concat");
  require_rank(b, 1, "concat");
  const auto tape = tape_of({&a, &b});
  std::vector<double> out(a.data().begin(), a.data().end());
  out.insert(out.end(), b.data().begin(), b.data().end());
  auto an = a.node();
  auto bn = b.node();
  const std::size_t na = a.size();
  const std::size_t total = out.size();
  return make_result(tape, Shape{total}, std::move(out), {an, bn}, [an, bn, na](const Node& o) {
    if (an->requires_grad) {
      for (std::size_t i = 0; i < na; ++i) an->grad[i] += o.grad[i];
    }
    if (bn->requires_grad) {
      for (std::size_t i = na; i < o.grad.size(); ++i) bn->grad[i - na] += o.grad[i];
    }
  });
}

Tensor tile(const Tensor& a, std::size_t n) {
  require_rank(a, 1, "tile");
  const std::size_t l = a.size();
  if (l == 0) throw std::invalid_argument("tile: empty pattern");
  const auto tape = tape_of({&a});
  const auto x = a.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i % l];
  auto an = a.node();
  return make_result(tape, Shape{n}, std::move(out), {an}, [an, l](const Node& o) {
    for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i % l] += o.grad[i];
  });
}

Tensor l2_norm(const Tensor& a) {
  const auto tape = tape_of({&a});
  double ss = 0.0;
  for (double v : a.data()) ss += v * v;
  const double norm = std::sqrt(ss);
  auto an = a.node();
  return make_result(tape, Shape{}, {norm}, {an}, [an, norm](const Node& o) {
    if (norm == 0.0) return;
    const double g = o.grad[0] / norm;
    for (std::size_t i = 0; i < an->data.size(); ++i) an->grad[i] += g * an->data[i];
  });
}

Tensor normalize(const Tensor& a) {
  Tensor norm = l2_norm(a);
  if (norm.item() == 0.0) throw std::domain_error("normalize: zero vector");
  return div(a, norm);
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  require_rank(a, 1, "cosine_similarity");
  require_rank(b, 1, "cosine_similarity");
  if (a.size() != b.size()) shape_error("cosine_similarity", a.shape(), b.shape());
  const auto tape = tape_of({&a, &b});
  const auto x = a.data();
  const auto y = b.data();
  double dot = 0.0;
  double xx = 0.0;
  double yy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * y[i];
    xx += x[i] * x[i];
    yy += y[i] * y[i];
  }
  if (xx == 0.0 || yy == 0.0) {
    throw std::domain_error("cosine_similarity: zero-norm input (degenerate embedding)");
  }
  const double denom = std::sqrt(xx * yy);
  const double rho = dot / denom;
  auto an = a.node();
  auto bn = b.node();
  return make_result(tape, Shape{}, {rho}, {an, bn}, [an, bn, rho, denom, xx, yy](const Node& o) {
    const double g = o.grad[0];
    const std::size_t n = an->data.size();
    if (an->requires_grad) {
      for (std::size_t i = 0; i < n; ++i) {
        an->grad[i] += g * (bn->data[i] / denom - rho * an->data[i] / xx);
      }
    }
    if (bn->requires_grad) {
      for (std::size_t i = 0; i < n; ++i) {
        bn->grad[i] += g * (an->data[i] / denom - rho * bn->data[i] / yy);
      }
    }
  });
}

Tensor stats_pool(const Tensor& a, double eps) {
  require_rank(a, 2, "stats_pool");
  const std::size_t channels = a.shape()[0];
  const std::size_t frames = a.shape()[1];
  if (frames == 0) throw std::invalid_argument("stats_pool: no frames");
  const auto tape = tape_of({&a});
  const auto x = a.data();
  std::vector<double> out(2 * channels);
  for (std::size_t c = 0; c < channels; ++c) {
    const double* row = x.data() + c * frames;
    double mu = 0.0;
    for (std::size_t t = 0; t < frames; ++t) mu += row[t];
    mu /= static_cast<double>(frames);
    double var = 0.0;
    for (std::size_t t = 0; t < frames; ++t) var += (row[t] - mu) * (row[t] - mu);
    var /= static_cast<double>(frames);
    out[c] = mu;
    out[channels + c] = std::sqrt(var + eps);
  }
  auto an = a.node();
  return make_result(tape, Shape{2 * channels}, std::move(out), {an},
                     [an, channels, frames](const Node& o) {
                       const double inv_t = 1.0 / static_cast<double>(frames);
                       for (std::size_t c = 0; c < channels; ++c) {
                         const double* row = an->data.data() + c * frames;
                         double* dst = an->grad.data() + c * frames;
                         const double mu = o.data[c];
                         const double sd = o.data[channels + c];
                         const double g_mean = o.grad[c] * inv_t;
                         const double g_std = o.grad[channels + c] * inv_t / sd;
                         for (std::size_t t = 0; t < frames; ++t) {
                           dst[t] += g_mean + g_std * (row[t] - mu);
                         }
                       }
                     });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::size_t label) {
  require_rank(logits, 1, "softmax_cross_entropy");
  const std::size_t k = logits.size();
  if (label >= k) {
    throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(label) +
                                " out of range for " + std::to_string(k) + " classes");
  }
  const auto tape = tape_of({&logits});
  const auto z = logits.data();
  double zmax = z[0];
  for (double v : z) zmax = std::max(zmax, v);
  auto probs = std::make_shared<std::vector<double>>(k);
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    (*probs)[i] = std::exp(z[i] - zmax);
    total += (*probs)[i];
  }
  for (double& p : *probs) p /= total;
  const double loss = std::log(total) + zmax - z[label];
  auto ln = logits.node();
  return make_result(tape, Shape{}, {loss}, {ln}, [ln, probs, label](const Node& o) {
    const double g = o.grad[0];
    for (std::size_t i = 0; i < probs->size(); ++i) {
      ln->grad[i] += g * ((*probs)[i] - (i == label ? 1.0 : 0.0));
    }
  });
}

}  // namespace uapforge::grad
