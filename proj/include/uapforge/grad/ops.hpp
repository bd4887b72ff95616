#pragma once

#include <cstddef>

#include "uapforge/grad/tensor.hpp"

namespace uapforge::grad {

// Elementwise arithmetic. Shapes must match exactly unless one side has a
// single element, which is broadcast. Anything else is std::invalid_argument.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator+(const Tensor& a, double b) { return add(a, Tensor::scalar(b)); }
inline Tensor operator-(const Tensor& a, double b) { return sub(a, Tensor::scalar(b)); }
inline Tensor operator*(const Tensor& a, double b) { return mul(a, Tensor::scalar(b)); }
inline Tensor operator*(double a, const Tensor& b) { return mul(Tensor::scalar(a), b); }
inline Tensor operator/(const Tensor& a, double b) { return div(a, Tensor::scalar(b)); }

Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
// Subgradient 0 at 0.
Tensor abs(const Tensor& a);
Tensor sqrt(const Tensor& a);

// Full reductions return a rank-0 tensor.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Reduction over one axis; the axis is removed from the shape.
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a, std::size_t axis);

// [m x k] . [k x n] -> [m x n]
Tensor matmul(const Tensor& a, const Tensor& b);

// Valid cross-correlation. signal [C_in x T], kernels [C_out x C_in x K],
// bias [C_out]; output [C_out x ((T - K) / stride + 1)].
Tensor conv1d(const Tensor& signal, const Tensor& kernels, std::size_t stride);
Tensor conv1d(const Tensor& signal, const Tensor& kernels, const Tensor& bias,
              std::size_t stride);

Tensor reshape(const Tensor& a, Shape shape);
// Rank-1 helpers.
Tensor slice(const Tensor& a, std::size_t begin, std::size_t end);
Tensor concat(const Tensor& a, const Tensor& b);
// Cyclic repetition of a rank-1 tensor to length n; out[i] = a[i mod len].
Tensor tile(const Tensor& a, std::size_t n);

// Euclidean norm of all elements; gradient taken as 0 at the origin.
Tensor l2_norm(const Tensor& a);
// a / ||a||; throws std::domain_error on a zero vector.
Tensor normalize(const Tensor& a);

// a.b / (|a| |b|) for equal-length rank-1 tensors. Zero-norm input throws
// std::domain_error.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);

// Temporal statistics pooling: [C x T] -> [2C] holding the per-channel mean
// followed by sqrt(var + eps).
Tensor stats_pool(const Tensor& a, double eps = 1e-8);

// -log softmax(logits)[label] for rank-1 logits.
Tensor softmax_cross_entropy(const Tensor& logits, std::size_t label);

}  // namespace uapforge::grad
