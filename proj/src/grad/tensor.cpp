#include "uapforge/grad/tensor.hpp"

#include <sstream>
#include <stdexcept>

#include "record.hpp"

namespace uapforge::grad {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

detail::NodePtr make_node(Shape shape, std::vector<double> data) {
  if (numel(shape) != data.size()) {
    throw std::invalid_argument("shape " + to_string(shape) + " does not match " +
                                std::to_string(data.size()) + " values");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  return node;
}

const detail::Node& checked(const detail::NodePtr& node) {
  if (!node) throw std::logic_error("use of an undefined tensor");
  return *node;
}

}  // namespace

Tensor::Tensor(Shape shape, std::vector<double> data)
    : node_(make_node(std::move(shape), std::move(data))) {}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(Shape{n}, std::move(values));
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const std::size_t n = numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

const Shape& Tensor::shape() const { return checked(node_).shape; }
std::size_t Tensor::size() const { return checked(node_).data.size(); }
std::span<const double> Tensor::data() const { return checked(node_).data; }

double Tensor::item() const {
  if (size() != 1) {
    throw std::invalid_argument("item() on tensor of shape " + to_string(shape()));
  }
  return node_->data[0];
}

bool Tensor::requires_grad() const { return checked(node_).requires_grad; }
bool Tensor::has_grad() const { return checked(node_).has_grad; }

std::span<const double> Tensor::grad() const {
  const auto& n = checked(node_);
  if (!n.has_grad) throw std::logic_error("tensor has no gradient; run backward first");
  return n.grad;
}

Tensor Tensor::detach() const {
  const auto& n = checked(node_);
  return Tensor(n.shape, n.data);
}

Tape::Tape(TapeOptions options) : state_(std::make_shared<detail::TapeState>()) {
  state_->options = options;
}

Tape::~Tape() = default;

Tensor Tape::variable(Shape shape, std::vector<double> data) {
  auto node = make_node(std::move(shape), std::move(data));
  node->requires_grad = true;
  node->tape = state_;
  state_->leaves.push_back(node);
  return Tensor(node);
}

Tensor Tape::variable(const Tensor& value) {
  return variable(value.shape(), std::vector<double>(value.data().begin(), value.data().end()));
}

void Tape::backward(const Tensor& root) {
  const auto& r = checked(root.node());
  if (r.data.size() != 1) {
    throw std::invalid_argument("backward needs a scalar root, got shape " + to_string(r.shape));
  }
  if (!r.requires_grad || r.tape.lock() != state_) {
    throw std::invalid_argument("backward root was not recorded on this tape");
  }
  if (state_->backward_done) {
    throw std::logic_error("backward already ran on this tape; call reset() first");
  }
  state_->backward_done = true;

  for (auto& leaf : state_->leaves) {
    leaf->grad.assign(leaf->data.size(), 0.0);
    leaf->has_grad = true;
  }
  for (auto& op : state_->ops) {
    op.output->grad.assign(op.output->data.size(), 0.0);
    op.output->has_grad = true;
    for (auto& in : op.inputs) {
      if (in->requires_grad) in->ensure_grad();
    }
  }
  root.node()->grad.assign(1, 1.0);
  root.node()->has_grad = true;

  for (auto it = state_->ops.rbegin(); it != state_->ops.rend(); ++it) {
    it->backward(*it->output);
  }
}

void Tape::reset() {
  for (auto& op : state_->ops) {
    op.output->grad.clear();
    op.output->has_grad = false;
  }
  state_->ops.clear();
  for (auto& leaf : state_->leaves) {
    leaf->grad.clear();
    leaf->has_grad = false;
  }
  state_->backward_done = false;
}

std::size_t Tape::num_ops() const { return state_->ops.size(); }
const TapeOptions& Tape::options() const { return state_->options; }

namespace detail {

std::shared_ptr<TapeState> tape_of(std::initializer_list<const Tensor*> inputs) {
  std::shared_ptr<TapeState> found;
  for (const Tensor* t : inputs) {
    const auto& n = checked(t->node());
    if (!n.requires_grad) continue;
    auto tape = n.tape.lock();
    if (!tape) throw std::logic_error("tensor's tape no longer exists");
    if (found && found != tape) {
      throw std::invalid_argument("op mixes tensors from different tapes");
    }
    found = std::move(tape);
  }
  return found;
}

bool strict_math(const std::shared_ptr<TapeState>& tape) {
  return tape ? tape->options.strict_math : TapeOptions{}.strict_math;
}

Tensor make_result(const std::shared_ptr<TapeState>& tape, Shape shape,
                   std::vector<double> data, std::vector<NodePtr> inputs,
                   BackwardFn backward) {
  auto node = make_node(std::move(shape), std::move(data));
  if (tape) {
    node->requires_grad = true;
    node->tape = tape;
    tape->ops.push_back(Op{std::move(inputs), node, std::move(backward)});
  }
  return Tensor(node);
}

}  // namespace detail
}  // namespace uapforge::grad
