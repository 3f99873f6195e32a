#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "mrt/tensor.hpp"

namespace mrt::ad {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One tape entry. `backward` reads this node's grad and accumulates into the
/// parents' grads. Nodes are created in forward order; `seq` gives a valid
/// reverse topological order for the backward sweep.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::uint64_t seq = 0;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward;
  const char* op = "leaf";

  Tensor& ensure_grad() {
    if (grad.empty()) grad = Tensor(value.shape());
    return grad;
  }
};

/// Value-semantic handle to a tape node.
class Var {
 public:
  Var() = default;
  explicit Var(NodePtr n) : n_(std::move(n)) {}

  static Var leaf(Tensor v, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(n_); }
  const Tensor& value() const { return n_->value; }
  Tensor& value_mut() { return n_->value; }
  Tensor& grad() { return n_->ensure_grad(); }
  bool requires_grad() const { return n_ && n_->requires_grad; }
  const NodePtr& node() const { return n_; }

 private:
  NodePtr n_;
};

/// Create an op node. `backward` may be empty for non-differentiable ops.
Var make_op(const char* name, Tensor value, std::vector<Var> parents,
            std::function<void(Node&)> backward);

/// Reverse sweep from a scalar root. Seeds d(root)/d(root) = 1.
void backward(const Var& root);

// Generic ops. All shapes are checked; gradients flow to any parent with
// requires_grad set.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double s);
Var square(const Var& a);
Var sum(const Var& a);                       // -> scalar
Var mean(const Var& a);                      // -> scalar
Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var log(const Var& a);
Var sigmoid_clamped(const Var& logits, double clamp);
Var detach(const Var& a);

/// y = x * W^T + b, x: (R,C), W: (O,C), b: (O) -> (R,O).
Var linear(const Var& x, const Var& W, const Var& b);

/// Concatenate along the last axis; leading dims must agree.
Var concat_last(const Var& a, const Var& b);

/// Select index j along axis 1 of a rank-3 tensor: (T,N,C) -> (T,C).
Var select_axis1(const Var& x, int j);

/// Select index t along axis 0: (T,...) -> (...).
Var select_axis0(const Var& x, int t);

/// Mean over axis 1 of a rank-3 tensor: (T,N,C) -> (T,C).
Var mean_axis1(const Var& x);

/// Sum of squared differences: sum((a-b)^2), shapes must match. -> scalar
Var sq_diff_sum(const Var& a, const Var& b);

}  // namespace mrt::ad
