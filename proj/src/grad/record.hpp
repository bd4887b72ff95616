#pragma once

// Internal glue shared by tensor.cpp and ops.cpp.

#include <functional>
#include <initializer_list>
#include <memory>
#include <vector>

#include "uapforge/grad/tensor.hpp"

namespace uapforge::grad::detail {

// Receives the output node (with its gradient populated) and accumulates into
// the inputs it captured.
using BackwardFn = std::function<void(const Node& out)>;

struct Op {
  std::vector<NodePtr> inputs;
  NodePtr output;
  BackwardFn backward;
};

struct TapeState {
  TapeOptions options;
  std::vector<Op> ops;
  std::vector<NodePtr> leaves;
  bool backward_done = false;
};

// Tape shared by the inputs that require gradients; null when none do.
// Throws std::invalid_argument when inputs come from different tapes.
std::shared_ptr<TapeState> tape_of(std::initializer_list<const Tensor*> inputs);

bool strict_math(const std::shared_ptr<TapeState>& tape);

// Wraps computed values into a tensor and, when a tape is given, records the
// op so backward can reach the inputs.
Tensor make_result(const std::shared_ptr<TapeState>& tape, Shape shape,
                   std::vector<double> data, std::vector<NodePtr> inputs,
                   BackwardFn backward);

}  // namespace uapforge::grad::detail
