#include "csnorm/autodiff.hpp"

#include <stdexcept>

namespace csnorm {

const Tape::Node& Tape::node(Value v) const {
  if (v.id >= nodes_.size()) throw std::out_of_range("tape: unknown value id");
  return nodes_[v.id];
}

Tape::Node& Tape::node(Value v) {
  if (v.id >= nodes_.size()) throw std::out_of_range("tape: unknown value id");
  return nodes_[v.id];
}

Value Tape::constant(Tensor4 t) {
  Node n;
  n.value = std::move(t);
  nodes_.push_back(std::move(n));
  return Value{nodes_.size() - 1};
}

Value Tape::parameter(Tensor4& p) {
  Node n;
  n.value = Tensor4(p.shape(), p.storage());
  n.param = &p;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Value{nodes_.size() - 1};
}

Value Tape::record(Tensor4 value, std::vector<Value> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  n.inputs.reserve(inputs.size());
  for (Value in : inputs) {
    // Inputs must already exist; anything else would be a forward reference
    // and therefore a cycle in the recorded graph.
    if (in.id >= nodes_.size()) throw std::logic_error("tape: input does not precede node (cycle)");
    n.inputs.push_back(in.id);
    n.requires_grad = n.requires_grad || nodes_[in.id].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Value{nodes_.size() - 1};
}

std::span<double> Tape::grad_sink(Value input) {
  Node& n = node(input);
  if (!n.requires_grad) return {};
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

void Tape::backward(Value loss) {
  Node& root = node(loss);
  if (root.value.shape() != Shape{1, 1, 1, 1}) {
    throw ShapeError("backward: loss must be 1x1x1x1, got " + to_string(root.value.shape()));
  }
  visits_ = 0;
  if (!root.requires_grad) return;
  for (auto& n : nodes_) n.grad.clear();
  root.grad.assign(1, 1.0);

  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty()) continue;
    for (std::size_t in : n.inputs) {
      if (in >= id) throw std::logic_error("backward: graph is not topologically ordered (cycle)");
    }
    ++visits_;
    if (n.param != nullptr) {
      auto& pg = n.param->grad();
      for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += n.grad[i];
    } else if (n.backward) {
      n.backward(*this, id);
    }
  }
}

}  // namespace csnorm
