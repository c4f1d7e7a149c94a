#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "imbgan/tensor.hpp"

namespace imbgan {

class Var;

// Computes input gradients from the output gradient. `needs[i]` tells the
// function whether input i's gradient is wanted; unwanted slots may be left
// undefined. Implementations are written in terms of differentiable ops so
// that the returned gradients themselves carry a graph when grad mode is on.
using BackwardFn = std::function<std::vector<Var>(
    const Var& self, const Var& grad, const std::vector<bool>& needs)>;

struct Node {
  Tensor value;
  bool requires_grad = false;
  std::vector<Var> inputs;
  BackwardFn backward;
};

// Handle to a node in the computation graph. Copies alias the same node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  // Result of an op. Records `inputs` and `backward` only when grad mode is
  // enabled and some input requires grad.
  static Var make(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }
  double item() const { return node_->value.item(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  // Leaf sharing nothing with this graph.
  Var detach() const { return Var(node_->value, false); }

  Node* node() const { return node_.get(); }

 private:
  std::shared_ptr<Node> node_;
};

bool grad_enabled();

// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Gradients of the scalar `output` with respect to each of `inputs`. Inputs
// that `output` does not depend on get a zero tensor. With `create_graph`
// the returned gradients are themselves differentiable.
std::vector<Var> grad(const Var& output, std::span<const Var> inputs,
                      bool create_graph = false);

}  // namespace imbgan
