#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "hrpinn/errors.hpp"
#include "hrpinn/tensor.hpp"

namespace hrpinn {

// Handle to a node on a Tape.
struct Var {
  int i = -1;
  bool valid() const { return i >= 0; }
};

enum class Op : std::uint8_t {
  Leaf,
  Const,
  Add,
  Sub,
  Mul,
  MatMul,
  Tanh,
  Softplus,
  Log,
  Sqrt,
  Sin,
  Cos,
  Asinh,
  Cross,
  Sum,
  Mean,
  Square,
  Recip,
  Concat,
  Slice,
  Custom,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Const: return "const";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::MatMul: return "matmul";
    case Op::Tanh: return "tanh";
    case Op::Softplus: return "softplus";
    case Op::Log: return "log";
    case Op::Sqrt: return "sqrt";
    case Op::Sin: return "sin";
    case Op::Cos: return "cos";
    case Op::Asinh: return "asinh";
    case Op::Cross: return "cross";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::Square: return "square";
    case Op::Recip: return "reciprocal";
    case Op::Concat: return "concat";
    case Op::Slice: return "slice";
    case Op::Custom: return "custom";
  }
  return "?";
}

// Extension point for operations with hand-written derivatives
// (e.g. manifold projection). The same instance is re-invoked on
// replay, so it may cache solver state between forward and backward.
struct CustomOp {
  virtual ~CustomOp() = default;
  virtual const char* name() const = 0;
  virtual Tensor forward(const std::vector<const Tensor*>& inputs) = 0;
  // Accumulate d(loss)/d(input) into input_grads given the seed
  // d(loss)/d(output).
  virtual void backward(const std::vector<const Tensor*>& inputs, const Tensor& output,
                        const Tensor& seed, const std::vector<Tensor*>& input_grads) = 0;
};

// Reverse-mode tape over dense tensors. Recording is eager: each op
// computes its value immediately, so the recorded program doubles as
// the forward pass. Replaying with new leaf bindings reproduces the
// computation; a completed tape is immutable apart from gradients and
// may be read from several threads. A tape must not be shared while
// recording.
class Tape {
 public:
  Var leaf(Tensor init) {
    check_finite_input(init, "leaf");
    return push(Op::Leaf, {}, std::move(init), /*leaf=*/true);
  }

  Var constant(Tensor value) {
    check_finite_input(value, "const");
    return push(Op::Const, {}, std::move(value));
  }

  Var constant(double v) { return constant(Tensor::scalar(v)); }

  Var add(Var a, Var b) { return push(Op::Add, {a.i, b.i}, eval_broadcast(Op::Add, a, b)); }
  Var sub(Var a, Var b) { return push(Op::Sub, {a.i, b.i}, eval_broadcast(Op::Sub, a, b)); }
  Var mul(Var a, Var b) { return push(Op::Mul, {a.i, b.i}, eval_broadcast(Op::Mul, a, b)); }

  Var matmul(Var a, Var b) {
    return push(Op::MatMul, {a.i, b.i}, eval_matmul(value(a), value(b)));
  }

  Var tanh(Var a) { return unary(Op::Tanh, a); }
  Var softplus(Var a) { return unary(Op::Softplus, a); }
  Var log(Var a) { return unary(Op::Log, a); }
  Var sqrt(Var a) { return unary(Op::Sqrt, a); }
  Var sin(Var a) { return unary(Op::Sin, a); }
  Var cos(Var a) { return unary(Op::Cos, a); }
  Var asinh(Var a) { return unary(Op::Asinh, a); }
  Var square(Var a) { return unary(Op::Square, a); }
  Var reciprocal(Var a) { return unary(Op::Recip, a); }

  Var cross(Var a, Var b) {
    const Tensor& x = value(a);
    const Tensor& y = value(b);
    if (x.size() != 3 || y.size() != 3)
      throw StructuralError("cross requires 3-vectors");
    return push(Op::Cross, {a.i, b.i}, eval_cross(x, y));
  }

  Var sum(Var a) {
    double s = 0.0;
    for (double v : value(a).values()) s += v;
    return push(Op::Sum, {a.i}, Tensor::scalar(s));
  }

  Var mean(Var a) {
    double s = 0.0;
    for (double v : value(a).values()) s += v;
    return push(Op::Mean, {a.i}, Tensor::scalar(s / static_cast<double>(value(a).size())));
  }

  Var concat(const std::vector<Var>& parts) {
    if (parts.empty()) throw StructuralError("concat of nothing");
    std::vector<double> out;
    std::vector<int> in;
    for (Var p : parts) {
      const Tensor& t = value(p);
      if (t.rank() != 1) throw StructuralError("concat requires vectors");
      out.insert(out.end(), t.values().begin(), t.values().end());
      in.push_back(p.i);
    }
    return push(Op::Concat, std::move(in), Tensor::vector(std::move(out)));
  }

  Var slice(Var a, std::size_t start, std::size_t len) {
    const Tensor& t = value(a);
    if (t.rank() != 1) throw StructuralError("slice requires a vector");
    if (start + len > t.size() || len == 0)
      throw StructuralError("slice range [" + std::to_string(start) + "," +
                            std::to_string(start + len) + ") out of bounds for " +
                            t.shape_str());
    slice_attrs_.push_back({start, len});
    Var v = push(Op::Slice, {a.i},
                 Tensor({len}, std::vector<double>(t.data() + start, t.data() + start + len)));
    nodes_[v.i].attr = static_cast<int>(slice_attrs_.size()) - 1;
    return v;
  }

  Var custom(std::shared_ptr<CustomOp> op, const std::vector<Var>& inputs) {
    std::vector<const Tensor*> in_vals;
    std::vector<int> in;
    for (Var v : inputs) {
      in_vals.push_back(&value(v));
      in.push_back(v.i);
    }
    Tensor out = op->forward(in_vals);
    custom_ops_.push_back(std::move(op));
    Var v = push(Op::Custom, std::move(in), std::move(out));
    nodes_[v.i].attr = static_cast<int>(custom_ops_.size()) - 1;
    return v;
  }

  // Convenience wrappers.
  Var scale(Var a, double c) { return mul(a, constant(c)); }
  Var neg(Var a) { return sub(constant(0.0), a); }

  const Tensor& value(Var v) const {
    check_var(v);
    return nodes_[static_cast<std::size_t>(v.i)].value;
  }

  bool is_leaf(Var v) const {
    check_var(v);
    return nodes_[static_cast<std::size_t>(v.i)].op == Op::Leaf;
  }

  std::size_t size() const { return nodes_.size(); }

  // Rebind the given leaves and replay the whole tape. Every recorded
  // node recomputes; non-finite intermediates raise DivergenceError
  // naming the node.
  void forward(const std::vector<std::pair<Var, Tensor>>& bindings) {
    for (const auto& [v, t] : bindings) {
      check_var(v);
      Node& n = nodes_[static_cast<std::size_t>(v.i)];
      if (n.op != Op::Leaf) throw StructuralError("forward binding target is not a leaf");
      if (!n.value.same_shape(t))
        throw StructuralError("forward binding shape " + t.shape_str() +
                              " does not match leaf shape " + n.value.shape_str());
      n.value = t;
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      Node& n = nodes_[i];
      if (n.op == Op::Leaf || n.op == Op::Const) continue;
      n.value = recompute(static_cast<int>(i));
      check_finite(n.value, static_cast<long>(i), n.op);
    }
    evaluated_ = true;
  }

  // Reverse sweep from `root` seeded with d(loss)/d(root). Gradients of
  // every node are (re)computed; read them back via grad(). Accumulates
  // over all paths in 64-bit floats, in fixed reverse tape order.
  void backward(Var root, const Tensor& seed) {
    if (nodes_.empty() || !evaluated_)
      throw StateError("backward before forward: tape holds no evaluated values");
    check_var(root);
    const Tensor& rv = value(root);
    if (!rv.same_shape(seed))
      throw StructuralError("backward seed shape " + seed.shape_str() +
                            " does not match root shape " + rv.shape_str());
    for (Node& n : nodes_) n.grad = Tensor(n.value.shape());
    nodes_[static_cast<std::size_t>(root.i)].grad = seed;
    for (int i = root.i; i >= 0; --i) propagate(i);
  }

  const Tensor& grad(Var v) const {
    check_var(v);
    const Node& n = nodes_[static_cast<std::size_t>(v.i)];
    if (n.grad.size() == 0) throw StateError("gradient not computed; call backward first");
    return n.grad;
  }

  // Gradients of every leaf, keyed by node index.
  std::map<int, Tensor> leaf_gradients() const {
    std::map<int, Tensor> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].op == Op::Leaf && nodes_[i].grad.size() > 0)
        out.emplace(static_cast<int>(i), nodes_[i].grad);
    return out;
  }

 private:
  struct SliceAttr {
    std::size_t start, len;
  };

  struct Node {
    Op op;
    std::vector<int> in;
    Tensor value;
    Tensor grad;
    int attr = -1;
  };

  void check_var(Var v) const {
    if (!v.valid() || static_cast<std::size_t>(v.i) >= nodes_.size())
      throw StateError("variable does not belong to this tape");
  }

  static void check_finite_input(const Tensor& t, const char* what) {
    if (!t.all_finite())
      throw DivergenceError(std::string("non-finite value supplied to ") + what);
  }

  static void check_finite(const Tensor& t, long idx, Op op) {
    if (!t.all_finite())
      throw DivergenceError("non-finite value in node #" + std::to_string(idx) + " (" +
                                op_name(op) + ")",
                            idx);
  }

  Var push(Op op, std::vector<int> in, Tensor value, bool leaf = false) {
    (void)leaf;
    check_finite(value, static_cast<long>(nodes_.size()), op);
    nodes_.push_back(Node{op, std::move(in), std::move(value), Tensor{}, -1});
    evaluated_ = true;
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Var unary(Op op, Var a) { return push(op, {a.i}, eval_unary(op, value(a))); }

  static Tensor eval_unary(Op op, const Tensor& x) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
      double v = x[i];
      switch (op) {
        case Op::Tanh: out[i] = std::tanh(v); break;
        case Op::Softplus:
          // log1p(exp(v)) with overflow guard for large v.
          out[i] = v > 30.0 ? v : std::log1p(std::exp(v));
          break;
        case Op::Log: out[i] = std::log(v); break;
        case Op::Sqrt: out[i] = std::sqrt(v); break;
        case Op::Sin: out[i] = std::sin(v); break;
        case Op::Cos: out[i] = std::cos(v); break;
        case Op::Asinh: out[i] = std::asinh(v); break;
        case Op::Square: out[i] = v * v; break;
        case Op::Recip: out[i] = 1.0 / v; break;
        default: throw StructuralError("not a unary op");
      }
    }
    return out;
  }

  Tensor eval_broadcast(Op op, Var va, Var vb) const {
    const Tensor& a = value(va);
    const Tensor& b = value(vb);
    if (!a.same_shape(b) && !a.is_scalar() && !b.is_scalar())
      throw StructuralError(std::string(op_name(op)) + " shape mismatch " + a.shape_str() +
                            " vs " + b.shape_str());
    const Tensor& big = a.is_scalar() ? b : a;
    Tensor out(big.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
      double x = a.is_scalar() ? a[0] : a[i];
      double y = b.is_scalar() ? b[0] : b[i];
      out[i] = op == Op::Add ? x + y : op == Op::Sub ? x - y : x * y;
    }
    return out;
  }

  static Tensor eval_matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2)
      throw StructuralError("matmul left operand must be a matrix, got " + a.shape_str());
    const std::size_t m = a.rows(), n = a.cols();
    if (b.rank() == 1) {
      if (b.size() != n)
        throw StructuralError("matmul shape mismatch " + a.shape_str() + " vs " + b.shape_str());
      Tensor out({m});
      for (std::size_t r = 0; r < m; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < n; ++c) s += a.at(r, c) * b[c];
        out[r] = s;
      }
      return out;
    }
    if (b.rows() != n)
      throw StructuralError("matmul shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    const std::size_t k = b.cols();
    Tensor out({m, k});
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < k; ++c) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += a.at(r, j) * b.at(j, c);
        out.at(r, c) = s;
      }
    return out;
  }

  static Tensor eval_cross(const Tensor& a, const Tensor& b) {
    return Tensor::vector({a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
                           a[0] * b[1] - a[1] * b[0]});
  }

  Tensor recompute(int idx) {
    Node& n = nodes_[static_cast<std::size_t>(idx)];
    auto in = [&](int k) -> const Tensor& {
      return nodes_[static_cast<std::size_t>(n.in[static_cast<std::size_t>(k)])].value;
    };
    switch (n.op) {
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
        return eval_broadcast(n.op, Var{n.in[0]}, Var{n.in[1]});
      case Op::MatMul: return eval_matmul(in(0), in(1));
      case Op::Cross: return eval_cross(in(0), in(1));
      case Op::Sum: {
        double s = 0.0;
        for (double v : in(0).values()) s += v;
        return Tensor::scalar(s);
      }
      case Op::Mean: {
        double s = 0.0;
        for (double v : in(0).values()) s += v;
        return Tensor::scalar(s / static_cast<double>(in(0).size()));
      }
      case Op::Concat: {
        std::vector<double> out;
        for (int i : n.in) {
          const auto& t = nodes_[static_cast<std::size_t>(i)].value;
          out.insert(out.end(), t.values().begin(), t.values().end());
        }
        return Tensor::vector(std::move(out));
      }
      case Op::Slice: {
        const SliceAttr& s = slice_attrs_[static_cast<std::size_t>(n.attr)];
        const Tensor& t = in(0);
        return Tensor({s.len},
                      std::vector<double>(t.data() + s.start, t.data() + s.start + s.len));
      }
      case Op::Custom: {
        std::vector<const Tensor*> vals;
        for (int i : n.in) vals.push_back(&nodes_[static_cast<std::size_t>(i)].value);
        return custom_ops_[static_cast<std::size_t>(n.attr)]->forward(vals);
      }
      default: return eval_unary(n.op, in(0));
    }
  }

  // Accumulate into grad of input `k` with scalar-broadcast contraction.
  void accum(int node, int k, const Tensor& contrib) {
    Node& n = nodes_[static_cast<std::size_t>(node)];
    Node& src = nodes_[static_cast<std::size_t>(n.in[static_cast<std::size_t>(k)])];
    if (src.grad.same_shape(contrib)) {
      for (std::size_t i = 0; i < contrib.size(); ++i) src.grad[i] += contrib[i];
    } else if (src.grad.is_scalar()) {
      double s = 0.0;
      for (double v : contrib.values()) s += v;
      src.grad[0] += s;
    } else {
      throw StructuralError("gradient shape mismatch in backward");
    }
  }

  void propagate(int idx) {
    Node& n = nodes_[static_cast<std::size_t>(idx)];
    if (n.op == Op::Leaf || n.op == Op::Const) return;
    const Tensor& g = n.grad;
    bool nonzero = false;
    for (double v : g.values())
      if (v != 0.0) {
        nonzero = true;
        break;
      }
    if (!nonzero) return;
    auto in_val = [&](int k) -> const Tensor& {
      return nodes_[static_cast<std::size_t>(n.in[static_cast<std::size_t>(k)])].value;
    };
    switch (n.op) {
      case Op::Add:
        accum(idx, 0, g);
        accum(idx, 1, g);
        break;
      case Op::Sub: {
        accum(idx, 0, g);
        Tensor ng(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i) ng[i] = -g[i];
        accum(idx, 1, ng);
        break;
      }
      case Op::Mul: {
        const Tensor& a = in_val(0);
        const Tensor& b = in_val(1);
        Tensor ga(g.shape()), gb(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] = g[i] * (b.is_scalar() ? b[0] : b[i]);
          gb[i] = g[i] * (a.is_scalar() ? a[0] : a[i]);
        }
        accum(idx, 0, ga);
        accum(idx, 1, gb);
        break;
      }
      case Op::MatMul: {
        const Tensor& a = in_val(0);
        const Tensor& b = in_val(1);
        const std::size_t m = a.rows(), nn = a.cols();
        if (b.rank() == 1) {
          Tensor ga({m, nn}), gb({nn});
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < nn; ++c) {
              ga.at(r, c) = g[r] * b[c];
              gb[c] += g[r] * a.at(r, c);
            }
          accum(idx, 0, ga);
          accum(idx, 1, gb);
        } else {
          const std::size_t k = b.cols();
          Tensor ga({m, nn}), gb({nn, k});
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t j = 0; j < nn; ++j) {
              double s = 0.0;
              for (std::size_t c = 0; c < k; ++c) {
                s += g.at(r, c) * b.at(j, c);
                gb.at(j, c) += a.at(r, j) * g.at(r, c);
              }
              ga.at(r, j) = s;
            }
          accum(idx, 0, ga);
          accum(idx, 1, gb);
        }
        break;
      }
      case Op::Tanh: {
        Tensor d(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * (1.0 - n.value[i] * n.value[i]);
        accum(idx, 0, d);
        break;
      }
      case Op::Softplus: {
        const Tensor& x = in_val(0);
        Tensor d(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] / (1.0 + std::exp(-x[i]));
        accum(idx, 0, d);
        break;
      }
      case Op::Log: {
        const Tensor& x = in_val(0);
        Tensor d(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] / x[i];
        accum(idx, 0, d);
        break;
      }
      case Op::Sqrt: {
        Tensor d(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] / (2.0 * n.value[i]);
        accum(idx, 0, d);
        break;
      }
      case Op::Sin: {
        const Tensor& x = in_val(0);
        Tensor d(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * std::cos(x[i]);
        accum(idx, 0, d);
        break;
      }
      case Op::Cos: {
        const Tensor& x = in_val(0);
        Tensor d(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i) d[i] = -g[i] * std::sin(x[i]);
        accum(idx, 0, d);
        break;
      }
      case Op::Asinh: {
        const Tensor& x = in_val(0);
        Tensor d(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] / std::sqrt(1.0 + x[i] * x[i]);
        accum(idx, 0, d);
        break;
      }
      case Op::Cross: {
        const Tensor& a = in_val(0);
        const Tensor& b = in_val(1);
        accum(idx, 0, eval_cross(b, g));  // d/da <g, a x b> = b x g
        accum(idx, 1, eval_cross(g, a));  // d/db <g, a x b> = g x a
        break;
      }
      case Op::Sum: {
        const Tensor& x = in_val(0);
        Tensor d(x.shape());
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = g[0];
        accum(idx, 0, d);
        break;
      }
      case Op::Mean: {
        const Tensor& x = in_val(0);
        Tensor d(x.shape());
        const double c = g[0] / static_cast<double>(x.size());
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = c;
        accum(idx, 0, d);
        break;
      }
      case Op::Square: {
        const Tensor& x = in_val(0);
        Tensor d(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i) d[i] = 2.0 * x[i] * g[i];
        accum(idx, 0, d);
        break;
      }
      case Op::Recip: {
        Tensor d(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i) d[i] = -n.value[i] * n.value[i] * g[i];
        accum(idx, 0, d);
        break;
      }
      case Op::Concat: {
        std::size_t off = 0;
        for (std::size_t k = 0; k < n.in.size(); ++k) {
          const Tensor& part = nodes_[static_cast<std::size_t>(n.in[k])].value;
          Tensor d(part.shape());
          for (std::size_t i = 0; i < part.size(); ++i) d[i] = g[off + i];
          accum(idx, static_cast<int>(k), d);
          off += part.size();
        }
        break;
      }
      case Op::Slice: {
        const SliceAttr& s = slice_attrs_[static_cast<std::size_t>(n.attr)];
        const Tensor& x = in_val(0);
        Tensor d(x.shape());
        for (std::size_t i = 0; i < s.len; ++i) d[s.start + i] = g[i];
        accum(idx, 0, d);
        break;
      }
      case Op::Custom: {
        std::vector<const Tensor*> vals;
        std::vector<Tensor*> grads;
        for (int i : n.in) {
          vals.push_back(&nodes_[static_cast<std::size_t>(i)].value);
          grads.push_back(&nodes_[static_cast<std::size_t>(i)].grad);
        }
        custom_ops_[static_cast<std::size_t>(n.attr)]->backward(vals, n.value, g, grads);
        break;
      }
      default: break;
    }
  }

  std::vector<Node> nodes_;
  std::vector<SliceAttr> slice_attrs_;
  std::vector<std::shared_ptr<CustomOp>> custom_ops_;
  bool evaluated_ = false;
};

// Max over coordinates of |central difference - reverse-mode gradient|
// / (|gradient| + 1e-12) for a scalar-valued build function
// f(tape, x_leaf) -> root. The central-difference oracle replays the
// tape at x +- h*e_i, independent of the backward path it checks.
template <class BuildFn>
double finite_difference_check(BuildFn&& f, const Tensor& x, double h) {
  Tape tape;
  Var leaf = tape.leaf(x);
  Var root = f(tape, leaf);
  if (tape.value(root).size() != 1)
    throw StructuralError("finite_difference_check requires a scalar-valued function");
  tape.backward(root, Tensor::scalar(1.0));
  const Tensor ad = tape.grad(leaf);

  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    Tensor xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    tape.forward({{leaf, xp}});
    const double fp = tape.value(root)[0];
    tape.forward({{leaf, xm}});
    const double fm = tape.value(root)[0];
    const double cd = (fp - fm) / (2.0 * h);
    worst = std::max(worst, std::abs(cd - ad[i]) / (std::abs(ad[i]) + 1e-12));
  }
  return worst;
}

}  // namespace hrpinn
