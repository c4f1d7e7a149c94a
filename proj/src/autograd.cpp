#include "imbgan/autograd.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

#include "imbgan/error.hpp"
#include "imbgan/ops.hpp"

namespace imbgan {

namespace {
thread_local bool t_grad_enabled = true;

class GradModeScope {
 public:
  explicit GradModeScope(bool enabled) : previous_(t_grad_enabled) {
    t_grad_enabled = enabled;
  }
  ~GradModeScope() { t_grad_enabled = previous_; }

 private:
  bool previous_;
};

// Post-order over nodes that require grad, so inputs precede their users.
std::vector<Var> topo_order(const Var& root) {
  std::vector<Var> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Var, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [var, next] = stack.back();
    Node* node = var.node();
    if (next < node->inputs.size()) {
      const Var& child = node->inputs[next++];
      if (child.requires_grad() && visited.insert(child.node()).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(var);
      stack.pop_back();
    }
  }
  return order;
}
}  // namespace

Var::Var(Tensor value, bool requires_grad)
    : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Var Var::make(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Var out(std::move(value), false);
  if (!t_grad_enabled) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Var& v) { return v.requires_grad(); });
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->inputs = std::move(inputs);
  out.node_->backward = std::move(backward);
  return out;
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) {
  t_grad_enabled = false;
}
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

std::vector<Var> grad(const Var& output, std::span<const Var> inputs,
                      bool create_graph) {
  if (!output.defined() || output.size() != 1) {
    throw ShapeError("grad() needs a scalar output");
  }
  std::vector<Var> result(inputs.size());
  auto zeros_for = [&](std::size_t i) {
    return Var(Tensor(inputs[i].shape(), 0.0));
  };
  if (!output.requires_grad()) {
    for (std::size_t i = 0; i < inputs.size(); ++i) result[i] = zeros_for(i);
    return result;
  }

  GradModeScope scope(create_graph);

  std::unordered_set<Node*> targets;
  for (const auto& v : inputs) targets.insert(v.node());

  const auto order = topo_order(output);
  // A node is needed when some target is reachable from it.
  std::unordered_set<Node*> needed;
  for (const Var& v : order) {
    Node* n = v.node();
    bool need = targets.count(n) > 0;
    for (const auto& in : n->inputs) {
      if (needed.count(in.node())) need = true;
    }
    if (need) needed.insert(n);
  }

  std::unordered_map<Node*, Var> grads;
  grads[output.node()] = Var(Tensor(output.shape(), 1.0));

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Var& self = *it;
    Node* n = self.node();
    if (!needed.count(n) || !n->backward) continue;
    auto found = grads.find(n);
    if (found == grads.end()) continue;
    const Var g = found->second;

    std::vector<bool> needs(n->inputs.size());
    bool any = false;
    for (std::size_t i = 0; i < n->inputs.size(); ++i) {
      needs[i] = n->inputs[i].requires_grad() &&
                 needed.count(n->inputs[i].node()) > 0;
      any = any || needs[i];
    }
    if (!any) continue;

    auto in_grads = n->backward(self, g, needs);
    for (std::size_t i = 0; i < n->inputs.size(); ++i) {
      if (!needs[i] || !in_grads[i].defined()) continue;
      Node* key = n->inputs[i].node();
      auto slot = grads.find(key);
      if (slot == grads.end()) {
        grads.emplace(key, in_grads[i]);
      } else {
        slot->second = ops::add(slot->second, in_grads[i]);
      }
    }
  }

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto found = grads.find(inputs[i].node());
    result[i] = found == grads.end() ? zeros_for(i) : found->second;
  }
  return result;
}

}  // namespace imbgan
