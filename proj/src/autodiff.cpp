#include "mrt/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <unordered_set>

namespace mrt::ad {

namespace {
std::atomic<std::uint64_t> g_seq{1};

bool any_requires_grad(const std::vector<Var>& parents) {
  for (const auto& p : parents)
    if (p.requires_grad()) return true;
  return false;
}
}  // namespace

Var Var::leaf(Tensor v, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->requires_grad = requires_grad;
  n->seq = g_seq.fetch_add(1);
  return Var(std::move(n));
}

Var make_op(const char* name, Tensor value, std::vector<Var> parents,
            std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = name;
  n->requires_grad = any_requires_grad(parents);
  n->seq = g_seq.fetch_add(1);
  n->parents.reserve(parents.size());
  for (auto& p : parents) n->parents.push_back(p.node());
  if (n->requires_grad) n->backward = std::move(backward);
  return Var(std::move(n));
}

void backward(const Var& root) {
  if (!root.defined()) throw Error("backward: undefined root");
  if (root.value().size() != 1) throw ShapeMismatch("backward root must be scalar");
  if (!root.requires_grad()) return;

  // Collect the reachable differentiable subgraph, then run nodes in
  // decreasing creation order (a valid reverse topological order).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root.node().get()};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(order.begin(), order.end(),
            [](const Node* a, const Node* b) { return a->seq > b->seq; });

  root.node()->ensure_grad()[0] += 1.0;
  for (Node* n : order) {
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

namespace {
// Accumulate g into the parent's grad buffer.
void accum(const NodePtr& p, const Tensor& g) {
  if (!p->requires_grad) return;
  Tensor& dst = p->ensure_grad();
  dst.vec() += g.vec();
}
}  // namespace

Var add(const Var& a, const Var& b) {
  check_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  out.vec() += b.value().vec();
  return make_op("add", std::move(out), {a, b}, [](Node& n) {
    accum(n.parents[0], n.grad);
    accum(n.parents[1], n.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  out.vec() -= b.value().vec();
  return make_op("sub", std::move(out), {a, b}, [](Node& n) {
    accum(n.parents[0], n.grad);
    if (n.parents[1]->requires_grad) {
      Tensor g = n.grad;
      g.vec() = -g.vec();
      accum(n.parents[1], g);
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  out.vec() = out.vec().cwiseProduct(b.value().vec());
  return make_op("mul", std::move(out), {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad) {
      Tensor g = n.grad;
      g.vec() = g.vec().cwiseProduct(n.parents[1]->value.vec());
      accum(n.parents[0], g);
    }
    if (n.parents[1]->requires_grad) {
      Tensor g = n.grad;
      g.vec() = g.vec().cwiseProduct(n.parents[0]->value.vec());
      accum(n.parents[1], g);
    }
  });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var scale(const Var& a, double s) {
  Tensor out = a.value();
  out.vec() *= s;
  return make_op("scale", std::move(out), {a}, [s](Node& n) {
    Tensor g = n.grad;
    g.vec() *= s;
    accum(n.parents[0], g);
  });
}

Var square(const Var& a) {
  Tensor out = a.value();
  out.vec() = out.vec().cwiseProduct(out.vec());
  return make_op("square", std::move(out), {a}, [](Node& n) {
    Tensor g = n.grad;
    g.vec() = 2.0 * g.vec().cwiseProduct(n.parents[0]->value.vec());
    accum(n.parents[0], g);
  });
}

Var sum(const Var& a) {
  Tensor out = Tensor::scalar(a.value().vec().sum());
  return make_op("sum", std::move(out), {a}, [](Node& n) {
    Tensor g(n.parents[0]->value.shape());
    g.vec().setConstant(n.grad[0]);
    accum(n.parents[0], g);
  });
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var relu(const Var& a) {
  Tensor out = a.value();
  out.vec() = out.vec().cwiseMax(0.0);
  return make_op("relu", std::move(out), {a}, [](Node& n) {
    Tensor g = n.grad;
    const Tensor& x = n.parents[0]->value;
    for (std::int64_t i = 0; i < g.size(); ++i)
      if (x[i] <= 0.0) g[i] = 0.0;
    accum(n.parents[0], g);
  });
}

Var leaky_relu(const Var& a, double slope) {
  Tensor out = a.value();
  for (std::int64_t i = 0; i < out.size(); ++i)
    if (out[i] < 0.0) out[i] *= slope;
  return make_op("leaky_relu", std::move(out), {a}, [slope](Node& n) {
    Tensor g = n.grad;
    const Tensor& x = n.parents[0]->value;
    for (std::int64_t i = 0; i < g.size(); ++i)
      if (x[i] < 0.0) g[i] *= slope;
    accum(n.parents[0], g);
  });
}

Var log(const Var& a) {
  Tensor out = a.value();
  out.vec() = out.vec().array().log().matrix();
  return make_op("log", std::move(out), {a}, [](Node& n) {
    Tensor g = n.grad;
    g.vec() = g.vec().cwiseQuotient(n.parents[0]->value.vec());
    accum(n.parents[0], g);
  });
}

Var sigmoid_clamped(const Var& logits, double clamp) {
  Tensor out = logits.value();
  for (std::int64_t i = 0; i < out.size(); ++i) {
    double z = std::min(std::max(out[i], -clamp), clamp);
    out[i] = 1.0 / (1.0 + std::exp(-z));
  }
  return make_op("sigmoid_clamped", std::move(out), {logits}, [clamp](Node& n) {
    Tensor g = n.grad;
    const Tensor& x = n.parents[0]->value;
    const Tensor& y = n.value;
    for (std::int64_t i = 0; i < g.size(); ++i) {
      // Zero slope outside the clamp window.
      g[i] = (std::abs(x[i]) < clamp) ? g[i] * y[i] * (1.0 - y[i]) : 0.0;
    }
    accum(n.parents[0], g);
  });
}

Var detach(const Var& a) { return Var::leaf(a.value(), false); }

Var linear(const Var& x, const Var& W, const Var& b) {
  const int R = x.value().dim(0);
  const int C = x.value().dim(1);
  const int O = W.value().dim(0);
  if (W.value().dim(1) != C || b.value().size() != O)
    throw ShapeMismatch("linear: weight/bias shapes");
  Tensor out({R, O});
  out.mat(R, O).noalias() = x.value().mat(R, C) * W.value().mat(O, C).transpose();
  out.mat(R, O).rowwise() += b.value().vec().transpose();
  return make_op("linear", std::move(out), {x, W, b}, [R, C, O](Node& n) {
    const Tensor& gt = n.grad;
    CMapMat g = gt.mat(R, O);
    const NodePtr& xp = n.parents[0];
    const NodePtr& Wp = n.parents[1];
    const NodePtr& bp = n.parents[2];
    if (xp->requires_grad) xp->ensure_grad().mat(R, C).noalias() += g * Wp->value.mat(O, C);
    if (Wp->requires_grad)
      Wp->ensure_grad().mat(O, C).noalias() += g.transpose() * xp->value.mat(R, C);
    if (bp->requires_grad) bp->ensure_grad().vec() += g.colwise().sum().transpose();
  });
}

Var concat_last(const Var& a, const Var& b) {
  const Shape& sa = a.value().shape();
  const Shape& sb = b.value().shape();
  if (sa.size() != sb.size() || sa.empty()) throw ShapeMismatch("concat_last: rank");
  for (size_t i = 0; i + 1 < sa.size(); ++i)
    if (sa[i] != sb[i]) throw ShapeMismatch("concat_last: leading dims");
  const int ca = sa.back();
  const int cb = sb.back();
  Shape so = sa;
  so.back() = ca + cb;
  Tensor out(so);
  const std::int64_t rows = out.size() / (ca + cb);
  for (std::int64_t r = 0; r < rows; ++r) {
    std::copy_n(a.value().data() + r * ca, ca, out.data() + r * (ca + cb));
    std::copy_n(b.value().data() + r * cb, cb, out.data() + r * (ca + cb) + ca);
  }
  return make_op("concat_last", std::move(out), {a, b}, [ca, cb, rows](Node& n) {
    for (int side = 0; side < 2; ++side) {
      const NodePtr& p = n.parents[side];
      if (!p->requires_grad) continue;
      Tensor& g = p->ensure_grad();
      const int c = side == 0 ? ca : cb;
      const int off = side == 0 ? 0 : ca;
      for (std::int64_t r = 0; r < rows; ++r)
        for (int k = 0; k < c; ++k) g[r * c + k] += n.grad[r * (ca + cb) + off + k];
    }
  });
}

Var select_axis1(const Var& x, int j) {
  if (x.value().rank() != 3) throw ShapeMismatch("select_axis1: rank-3 required");
  const int T = x.value().dim(0), N = x.value().dim(1), C = x.value().dim(2);
  if (j < 0 || j >= N) throw ShapeMismatch("select_axis1: index out of range");
  Tensor out({T, C});
  for (int t = 0; t < T; ++t)
    std::copy_n(x.value().data() + (static_cast<std::int64_t>(t) * N + j) * C, C,
                out.data() + static_cast<std::int64_t>(t) * C);
  return make_op("select_axis1", std::move(out), {x}, [T, N, C, j](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    for (int t = 0; t < T; ++t)
      for (int k = 0; k < C; ++k)
        g[(static_cast<std::int64_t>(t) * N + j) * C + k] +=
            n.grad[static_cast<std::int64_t>(t) * C + k];
  });
}

Var select_axis0(const Var& x, int t) {
  if (x.value().rank() < 2) throw ShapeMismatch("select_axis0: rank >= 2 required");
  const int T = x.value().dim(0);
  if (t < 0 || t >= T) throw ShapeMismatch("select_axis0: index out of range");
  Shape s(x.value().shape().begin() + 1, x.value().shape().end());
  Tensor out(s);
  const std::int64_t block = out.size();
  std::copy_n(x.value().data() + static_cast<std::int64_t>(t) * block, block, out.data());
  return make_op("select_axis0", std::move(out), {x}, [t, block](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    for (std::int64_t i = 0; i < block; ++i)
      g[static_cast<std::int64_t>(t) * block + i] += n.grad[i];
  });
}

Var mean_axis1(const Var& x) {
  if (x.value().rank() != 3) throw ShapeMismatch("mean_axis1: rank-3 required");
  const int T = x.value().dim(0), N = x.value().dim(1), C = x.value().dim(2);
  Tensor out({T, C});
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < N; ++j)
      for (int k = 0; k < C; ++k) out.at(t, k) += x.value().at(t, j, k) / N;
  return make_op("mean_axis1", std::move(out), {x}, [T, N, C](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    for (int t = 0; t < T; ++t)
      for (int j = 0; j < N; ++j)
        for (int k = 0; k < C; ++k)
          g[(static_cast<std::int64_t>(t) * N + j) * C + k] += n.grad.at(t, k) / N;
  });
}

Var sq_diff_sum(const Var& a, const Var& b) { return sum(square(sub(a, b))); }

}  // namespace mrt::ad
