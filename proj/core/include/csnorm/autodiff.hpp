#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "csnorm/tensor.hpp"

namespace csnorm {

/// Handle to a node on a Tape.
struct Value {
  static constexpr std::size_t kInvalid = std::numeric_limits<std::size_t>::max();
  std::size_t id = kInvalid;
  bool valid() const { return id != kInvalid; }
};

/// Define-by-run reverse-mode tape. Nodes are appended in execution order, so
/// every node's inputs have smaller ids than the node itself. A tape is built
/// for one forward pass, consumed by one backward() call, and then discarded.
class Tape {
 public:
  /// Receives the tape and the id of the node whose upstream gradient is ready.
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Value constant(Tensor4 t);
  /// Leaf bound to `p`; backward() accumulates dLoss/dp into p.grad().
  /// `p` must outlive the tape.
  Value parameter(Tensor4& p);

  /// Appends an op node. The node requires grad iff any input does; `fn` is
  /// dropped otherwise.
  Value record(Tensor4 value, std::vector<Value> inputs, BackwardFn fn);

  const Tensor4& value(Value v) const { return node(v).value; }
  const Shape& shape(Value v) const { return node(v).value.shape(); }
  bool requires_grad(Value v) const { return node(v).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Upstream gradient of node `id` during backward (same length as its value).
  std::span<const double> grad(std::size_t id) const { return nodes_.at(id).grad; }
  /// Accumulation target for an input's gradient; empty span when the input
  /// does not require grad.
  std::span<double> grad_sink(Value input);

  /// Seeds d(loss)/d(loss) = 1 and propagates to every reachable node.
  /// Throws ShapeError for a non-scalar loss.
  void backward(Value loss);

  /// Number of nodes whose backward function ran in the last backward().
  std::size_t last_backward_visits() const { return visits_; }

 private:
  struct Node {
    Tensor4 value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    std::vector<double> grad;
    Tensor4* param = nullptr;
    bool requires_grad = false;
  };

  const Node& node(Value v) const;
  Node& node(Value v);

  std::vector<Node> nodes_;
  std::size_t visits_ = 0;
};

/// A trainable tensor with a stable name, as stored in checkpoints.
struct NamedParam {
  std::string name;
  Tensor4* tensor = nullptr;
};

}  // namespace csnorm
