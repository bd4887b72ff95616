#pragma once

// Dense real tensors and the reverse-mode tape they are recorded on.
//
// A Tensor is a cheap handle onto shared storage. Tensors built without a
// tape are constants: ops on them compute values and record nothing. A
// Tape::variable() is a gradient leaf, and every op with at least one input
// that requires a gradient is appended to that input's tape. The tape keeps
// the recorded graph alive until reset() or destruction.
//
// Threading: a Tape and the tensors recorded on it belong to one thread.
// Separate tapes may live on separate threads. Constants can be shared
// read-only.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace uapforge::grad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

struct TapeOptions {
  // Division by zero (and sqrt of a negative) throws std::domain_error when
  // set; otherwise IEEE inf/nan propagate.
  bool strict_math = true;
};

namespace detail {

struct TapeState;

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool has_grad = false;
  bool requires_grad = false;
  std::weak_ptr<TapeState> tape;

  void ensure_grad() {
    if (!has_grad) {
      grad.assign(data.size(), 0.0);
      has_grad = true;
    }
  }
};

using NodePtr = std::shared_ptr<Node>;

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  // Detached constant. Throws std::invalid_argument if the shape does not
  // cover the data exactly.
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  bool is_scalar() const { return size() == 1; }

  std::span<const double> data() const;
  double operator[](std::size_t i) const { return data()[i]; }
  // Value of a one-element tensor.
  double item() const;

  bool requires_grad() const;
  bool has_grad() const;
  // Gradient written by the last backward pass. Throws std::logic_error if
  // none has been populated.
  std::span<const double> grad() const;

  // Copy of the values with no tape attachment.
  Tensor detach() const;

  const detail::NodePtr& node() const { return node_; }
  explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}

 private:
  detail::NodePtr node_;
};

class Tape {
 public:
  explicit Tape(TapeOptions options = {});
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) noexcept = default;
  Tape& operator=(Tape&&) noexcept = default;
  ~Tape();

  // Gradient leaf holding a copy of the given values.
  Tensor variable(Shape shape, std::vector<double> data);
  Tensor variable(const Tensor& value);

  // Seeds d(root)/d(root) = 1 and replays the recorded ops in reverse,
  // accumulating into every tensor on this tape that requires a gradient.
  // Throws std::invalid_argument for a non-scalar root or one that is not on
  // this tape, and std::logic_error if backward already ran since the last
  // reset().
  void backward(const Tensor& root);

  // Drops the recorded ops and all gradients. Leaves stay attached.
  void reset();

  std::size_t num_ops() const;
  const TapeOptions& options() const;

 private:
  std::shared_ptr<detail::TapeState> state_;
};

}  // namespace uapforge::grad
