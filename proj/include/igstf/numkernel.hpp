#pragma once

// Dense tensor arithmetic with a per-forward reverse-mode tape.
//
// A Tape records one forward pass. Every op returns a Var (tape handle); when
// the tape is recording and at least one input needs a gradient, the op also
// appends a closure that scatters the output adjoint into its inputs.
// Parameters are bound once per tape by name, so their adjoints come back
// keyed by the ParamStore name after backward().

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "igstf/params.hpp"
#include "igstf/tensor.hpp"

namespace igstf {

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t axis) const { return value().dim(axis); }
};

class Tape {
 public:
  // Receives the tape and the adjoint of the node that owns the closure.
  using Backward = std::function<void(Tape&, const Tensor&)>;

  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }

  Var constant(Tensor value) { return push_leaf(std::move(value), false); }

  // Free input that receives an adjoint (used by gradient checks on raw inputs).
  Var input(Tensor value) { return push_leaf(std::move(value), recording_); }

  Var param(const ParamStore& store, const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return Var{this, it->second};
    Var v = push_leaf(store.get(name), recording_);
    bound_.emplace(name, v.id);
    bound_order_.push_back(name);
    return v;
  }

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  // Adjoint slot for node `id`, allocated as zeros on first touch.
  Tensor& grad_slot(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.grad) n.grad.emplace(n.value.shape(), 0.0);
    return *n.grad;
  }

  const Tensor* grad(Var v) const {
    const Node& n = nodes_[v.id];
    return n.grad ? &*n.grad : nullptr;
  }

  Var push(Tensor value, std::initializer_list<Var> inputs, Backward fn) {
    bool req = false;
    if (recording_)
      for (const Var& in : inputs) req = req || nodes_[in.id].requires_grad;
    Node n;
    n.value = std::move(value);
    n.requires_grad = req;
    if (req) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
  }

  Var push(Tensor value, const std::vector<Var>& inputs, Backward fn) {
    bool req = false;
    if (recording_)
      for (const Var& in : inputs) req = req || nodes_[in.id].requires_grad;
    Node n;
    n.value = std::move(value);
    n.requires_grad = req;
    if (req) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
  }

  /// Seeds d(out)/d(out) = 1 and runs the recorded closures in reverse.
  void backward(Var out) {
    if (out.tape != this) throw Error("backward on a Var from another tape");
    if (nodes_[out.id].value.size() != 1) {
      throw DimensionError("backward needs a scalar output, got " +
                           shape_str(nodes_[out.id].value.shape()));
    }
    if (!nodes_[out.id].requires_grad) return;
    grad_slot(out.id).fill(1.0);
    for (std::size_t i = out.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward || !n.grad) continue;
      n.backward(*this, *n.grad);
    }
  }

  /// Adjoints of every bound parameter; untouched ones come back as zeros.
  GradMap param_grads() const {
    GradMap out;
    for (const auto& name : bound_order_) {
      const Node& n = nodes_[bound_.at(name)];
      out.emplace(name, n.grad ? *n.grad : Tensor(n.value.shape(), 0.0));
    }
    return out;
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::optional<Tensor> grad;
    Backward backward;
    bool requires_grad = false;
  };

  Var push_leaf(Tensor value, bool req) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = req;
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
  }

  bool recording_;
  std::deque<Node> nodes_;  // deque: references stay valid while pushing
  std::unordered_map<std::string, std::size_t> bound_;
  std::vector<std::string> bound_order_;
};

inline const Tensor& Var::value() const { return tape->value(id); }

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

inline CMapMat cmap(const Tensor& t, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
  return CMapMat(t.ptr() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
inline MapMat map(Tensor& t, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
  return MapMat(t.ptr() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

inline void require_rank(const char* op, const Tensor& a, std::size_t rank) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(a.shape()));
  }
}

// Splits a shape around `axis` into (outer, extent, inner) strides.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

inline AxisSplit split_axis(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

inline Var add(Var a, Var b) {
  detail::require_same_shape("add", a.value(), b.value());
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    for (Var v : {a, b}) {
      if (!t.needs_grad(v.id)) continue;
      Tensor& gv = t.grad_slot(v.id);
      for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
    }
  });
}

inline Var sub(Var a, Var b) {
  detail::require_same_shape("sub", a.value(), b.value());
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (t.needs_grad(a.id)) {
      Tensor& ga = t.grad_slot(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.needs_grad(b.id)) {
      Tensor& gb = t.grad_slot(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

inline Var mul(Var a, Var b) {
  detail::require_same_shape("mul", a.value(), b.value());
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(a.id);
    const Tensor& bv = t.value(b.id);
    if (t.needs_grad(a.id)) {
      Tensor& ga = t.grad_slot(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.needs_grad(b.id)) {
      Tensor& gb = t.grad_slot(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

inline Var scale(Var a, double c) {
  Tensor out = a.value();
  for (double& v : out.storage()) v *= c;
  return a.tape->push(std::move(out), {a}, [a, c](Tape& t, const Tensor& g) {
    if (!t.needs_grad(a.id)) return;
    Tensor& ga = t.grad_slot(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  });
}

// Elementwise product with a constant tensor of the same shape (masks).
inline Var mul_const(Var a, const Tensor& m) {
  detail::require_same_shape("mul_const", a.value(), m);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= m[i];
  return a.tape->push(std::move(out), {a}, [a, m](Tape& t, const Tensor& g) {
    if (!t.needs_grad(a.id)) return;
    Tensor& ga = t.grad_slot(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * m[i];
  });
}

/// x + b with b broadcast along every axis but the last.
inline Var add_bias(Var x, Var b) {
  const Tensor& xv = x.value();
  const Tensor& bv = b.value();
  if (bv.rank() != 1 || xv.rank() == 0 || xv.shape().back() != bv.dim(0)) {
    throw DimensionError("add_bias: bias " + shape_str(bv.shape()) + " does not match last axis of " +
                         shape_str(xv.shape()));
  }
  const std::size_t d = bv.dim(0);
  Tensor out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % d];
  return x.tape->push(std::move(out), {x, b}, [x, b, d](Tape& t, const Tensor& g) {
    if (t.needs_grad(x.id)) {
      Tensor& gx = t.grad_slot(x.id);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (t.needs_grad(b.id)) {
      Tensor& gb = t.grad_slot(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % d] += g[i];
    }
  });
}

inline Var relu(Var a) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return a.tape->push(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    if (!t.needs_grad(a.id)) return;
    const Tensor& x = t.value(a.id);
    Tensor& ga = t.grad_slot(a.id);
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i] > 0.0) ga[i] += g[i];
  });
}

inline Var tanh(Var a) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x[i]);
  Tensor y = out;
  return a.tape->push(std::move(out), {a}, [a, y = std::move(y)](Tape& t, const Tensor& g) {
    if (!t.needs_grad(a.id)) return;
    Tensor& ga = t.grad_slot(a.id);
    for (std::size_t i = 0; i < y.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

inline Var sigmoid(Var a) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-x[i]));
  Tensor y = out;
  return a.tape->push(std::move(out), {a}, [a, y = std::move(y)](Tape& t, const Tensor& g) {
    if (!t.needs_grad(a.id)) return;
    Tensor& ga = t.grad_slot(a.id);
    for (std::size_t i = 0; i < y.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

inline Var abs(Var a) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::abs(x[i]);
  return a.tape->push(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    if (!t.needs_grad(a.id)) return;
    const Tensor& x = t.value(a.id);
    Tensor& ga = t.grad_slot(a.id);
    for (std::size_t i = 0; i < x.size(); ++i) ga[i] += x[i] > 0.0 ? g[i] : (x[i] < 0.0 ? -g[i] : 0.0);
  });
}

inline Var sum_all(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.tape->push(Tensor::scalar(s), {a}, [a](Tape& t, const Tensor& g) {
    if (!t.needs_grad(a.id)) return;
    Tensor& ga = t.grad_slot(a.id);
    for (double& v : ga.storage()) v += g[0];
  });
}

// ---------------------------------------------------------------- shape ops

inline Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.tape->push(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    if (!t.needs_grad(a.id)) return;
    Tensor& ga = t.grad_slot(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

inline Var transpose(Var a) {
  const Tensor& x = a.value();
  detail::require_rank("transpose", x, 2);
  const std::size_t r = x.dim(0), c = x.dim(1);
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
  return a.tape->push(std::move(out), {a}, [a, r, c](Tape& t, const Tensor& g) {
    if (!t.needs_grad(a.id)) return;
    Tensor& ga = t.grad_slot(a.id);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
  });
}

/// Swaps the first two axes of a rank-3 tensor: [A x B x C] -> [B x A x C].
inline Var swap01(Var a) {
  const Tensor& x = a.value();
  detail::require_rank("swap01", x, 3);
  const std::size_t A = x.dim(0), B = x.dim(1), C = x.dim(2);
  Tensor out({B, A, C});
  for (std::size_t i = 0; i < A; ++i)
    for (std::size_t j = 0; j < B; ++j)
      std::copy_n(x.ptr() + (i * B + j) * C, C, out.ptr() + (j * A + i) * C);
  return a.tape->push(std::move(out), {a}, [a, A, B, C](Tape& t, const Tensor& g) {
    if (!t.needs_grad(a.id)) return;
    Tensor& ga = t.grad_slot(a.id);
    for (std::size_t i = 0; i < A; ++i)
      for (std::size_t j = 0; j < B; ++j)
        for (std::size_t k = 0; k < C; ++k) ga[(i * B + j) * C + k] += g[(j * A + i) * C + k];
  });
}

/// Swaps the last two axes of a rank-3 tensor: [A x B x C] -> [A x C x B].
inline Var swap12(Var a) {
  const Tensor& x = a.value();
  detail::require_rank("swap12", x, 3);
  const std::size_t A = x.dim(0), B = x.dim(1), C = x.dim(2);
  Tensor out({A, C, B});
  for (std::size_t i = 0; i < A; ++i)
    for (std::size_t j = 0; j < B; ++j)
      for (std::size_t k = 0; k < C; ++k) out[(i * C + k) * B + j] = x[(i * B + j) * C + k];
  return a.tape->push(std::move(out), {a}, [a, A, B, C](Tape& t, const Tensor& g) {
    if (!t.needs_grad(a.id)) return;
    Tensor& ga = t.grad_slot(a.id);
    for (std::size_t i = 0; i < A; ++i)
      for (std::size_t j = 0; j < B; ++j)
        for (std::size_t k = 0; k < C; ++k) ga[(i * B + j) * C + k] += g[(i * C + k) * B + j];
  });
}

/// Elements [begin, end) along `axis`.
inline Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end) {
  const Tensor& x = a.value();
  if (axis >= x.rank() || begin > end || end > x.dim(axis)) {
    throw DimensionError("slice [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of range on axis " + std::to_string(axis) + " of " +
                         shape_str(x.shape()));
  }
  const auto s = detail::split_axis(x.shape(), axis);
  Shape shape = x.shape();
  shape[axis] = end - begin;
  Tensor out(shape);
  const std::size_t len = (end - begin) * s.inner;
  for (std::size_t o = 0; o < s.outer; ++o)
    std::copy_n(x.ptr() + (o * s.extent + begin) * s.inner, len, out.ptr() + o * len);
  return a.tape->push(std::move(out), {a}, [a, s, begin, len](Tape& t, const Tensor& g) {
    if (!t.needs_grad(a.id)) return;
    Tensor& ga = t.grad_slot(a.id);
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t i = 0; i < len; ++i) ga[(o * s.extent + begin) * s.inner + i] += g[o * len + i];
  });
}

/// Concatenation along `axis`; all other extents must agree.
inline Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  const Shape& ref = parts[0].shape();
  if (axis >= ref.size()) throw DimensionError("concat axis out of range for " + shape_str(ref));
  Shape shape = ref;
  shape[axis] = 0;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == ref.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == ref[i];
    if (!ok) throw DimensionError("concat: " + shape_str(s) + " incompatible with " + shape_str(ref));
    shape[axis] += s[axis];
  }
  const auto so = detail::split_axis(shape, axis);
  Tensor out(shape);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    offsets.push_back(off);
    const Tensor& x = p.value();
    const std::size_t len = x.dim(axis) * so.inner;
    for (std::size_t o = 0; o < so.outer; ++o)
      std::copy_n(x.ptr() + o * len, len, out.ptr() + o * so.extent * so.inner + off * so.inner);
    off += x.dim(axis);
  }
  return parts[0].tape->push(std::move(out), parts,
                             [parts, offsets, so, axis](Tape& t, const Tensor& g) {
                               for (std::size_t p = 0; p < parts.size(); ++p) {
                                 if (!t.needs_grad(parts[p].id)) continue;
                                 Tensor& gp = t.grad_slot(parts[p].id);
                                 const std::size_t len = gp.dim(axis) * so.inner;
                                 for (std::size_t o = 0; o < so.outer; ++o)
                                   for (std::size_t i = 0; i < len; ++i)
                                     gp[o * len + i] +=
                                         g[o * so.extent * so.inner + offsets[p] * so.inner + i];
                               }
                             });
}

/// Rows `indices` of a 2-D table (embedding lookup, broadcast by tiling).
inline Var gather_rows(Var table, const std::vector<std::size_t>& indices) {
  const Tensor& x = table.value();
  detail::require_rank("gather_rows", x, 2);
  const std::size_t rows = x.dim(0), d = x.dim(1);
  Tensor out({indices.size(), d});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows) {
      throw DimensionError("gather_rows: index " + std::to_string(indices[i]) +
                           " out of range for table " + shape_str(x.shape()));
    }
    std::copy_n(x.ptr() + indices[i] * d, d, out.ptr() + i * d);
  }
  return table.tape->push(std::move(out), {table}, [table, indices, d](Tape& t, const Tensor& g) {
    if (!t.needs_grad(table.id)) return;
    Tensor& gt = t.grad_slot(table.id);
    for (std::size_t i = 0; i < indices.size(); ++i)
      for (std::size_t k = 0; k < d; ++k) gt[indices[i] * d + k] += g[i * d + k];
  });
}

// ---------------------------------------------------------------- products

/// [m x k] * [k x n] -> [m x n].
inline Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(av.shape()) + " and " +
                         shape_str(bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out({m, n});
  if (m && n && k) detail::map(out, m, n).noalias() = detail::cmap(av, m, k) * detail::cmap(bv, k, n);
  return a.tape->push(std::move(out), {a, b}, [a, b, m, k, n](Tape& t, const Tensor& g) {
    if (!m || !n || !k) return;
    const auto G = detail::cmap(g, m, n);
    if (t.needs_grad(a.id)) {
      Tensor& ga = t.grad_slot(a.id);
      detail::map(ga, m, k).noalias() += G * detail::cmap(t.value(b.id), k, n).transpose();
    }
    if (t.needs_grad(b.id)) {
      Tensor& gb = t.grad_slot(b.id);
      detail::map(gb, k, n).noalias() += detail::cmap(t.value(a.id), m, k).transpose() * G;
    }
  });
}

/// Batched product [B x m x k] * [B x k x n] -> [B x m x n].
inline Var bmm(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 3 || bv.rank() != 3 || av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(1)) {
    throw DimensionError("bmm: incompatible shapes " + shape_str(av.shape()) + " and " +
                         shape_str(bv.shape()));
  }
  const std::size_t B = av.dim(0), m = av.dim(1), k = av.dim(2), n = bv.dim(2);
  Tensor out({B, m, n});
  if (m && n && k)
    for (std::size_t i = 0; i < B; ++i)
      detail::map(out, m, n, i * m * n).noalias() =
          detail::cmap(av, m, k, i * m * k) * detail::cmap(bv, k, n, i * k * n);
  return a.tape->push(std::move(out), {a, b}, [a, b, B, m, k, n](Tape& t, const Tensor& g) {
    if (!m || !n || !k) return;
    const bool need_a = t.needs_grad(a.id), need_b = t.needs_grad(b.id);
    for (std::size_t i = 0; i < B; ++i) {
      const auto G = detail::cmap(g, m, n, i * m * n);
      if (need_a) {
        Tensor& ga = t.grad_slot(a.id);
        detail::map(ga, m, k, i * m * k).noalias() +=
            G * detail::cmap(t.value(b.id), k, n, i * k * n).transpose();
      }
      if (need_b) {
        Tensor& gb = t.grad_slot(b.id);
        detail::map(gb, k, n, i * k * n).noalias() +=
            detail::cmap(t.value(a.id), m, k, i * m * k).transpose() * G;
      }
    }
  });
}

/// x * W (+ b) applied over the last axis of a tensor of any rank.
inline Var linear(Var x, Var w, std::optional<Var> b = std::nullopt) {
  const Shape xs = x.shape();
  if (xs.empty()) throw DimensionError("linear: rank-0 input");
  const std::size_t in = xs.back();
  const std::size_t rows = shape_size(Shape(xs.begin(), xs.end() - 1));
  Var y = matmul(xs.size() == 2 ? x : reshape(x, {rows, in}), w);
  if (b) y = add_bias(y, *b);
  Shape ys = xs;
  ys.back() = w.dim(1);
  return xs.size() == 2 ? y : reshape(y, ys);
}

// ---------------------------------------------------------------- normalizers

/// Softmax along `axis`. Entries that are -inf, or whose mask value is 0,
/// are excluded and come out exactly 0. A slice with no admissible entry
/// yields all zeros.
inline Var softmax(Var x, std::size_t axis, const Tensor* mask = nullptr) {
  const Tensor& xv = x.value();
  if (axis >= xv.rank()) throw DimensionError("softmax: axis out of range for " + shape_str(xv.shape()));
  if (mask) detail::require_same_shape("softmax mask", xv, *mask);
  const auto s = detail::split_axis(xv.shape(), axis);
  Tensor out(xv.shape(), 0.0);
  auto admissible = [&](std::size_t idx) {
    return !(mask && (*mask)[idx] == 0.0) && xv[idx] != -std::numeric_limits<double>::infinity();
  };
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.extent * s.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < s.extent; ++k) {
        const std::size_t idx = base + k * s.inner;
        if (admissible(idx)) mx = std::max(mx, xv[idx]);
      }
      if (mx == -std::numeric_limits<double>::infinity()) continue;  // fully masked
      double z = 0.0;
      for (std::size_t k = 0; k < s.extent; ++k) {
        const std::size_t idx = base + k * s.inner;
        if (admissible(idx)) {
          out[idx] = std::exp(xv[idx] - mx);
          z += out[idx];
        }
      }
      for (std::size_t k = 0; k < s.extent; ++k) out[base + k * s.inner] /= z;
    }
  }
  Tensor y = out;
  return x.tape->push(std::move(out), {x}, [x, s, y = std::move(y)](Tape& t, const Tensor& g) {
    if (!t.needs_grad(x.id)) return;
    Tensor& gx = t.grad_slot(x.id);
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.extent * s.inner + in;
        double dot = 0.0;
        for (std::size_t k = 0; k < s.extent; ++k) dot += y[base + k * s.inner] * g[base + k * s.inner];
        for (std::size_t k = 0; k < s.extent; ++k) {
          const std::size_t idx = base + k * s.inner;
          gx[idx] += y[idx] * (g[idx] - dot);
        }
      }
    }
  });
}

/// Replaces entries whose `connected` value is 0 by -inf. Gradients flow
/// only through connected entries.
inline Var apply_mask(Var scores, const Tensor& connected) {
  detail::require_same_shape("apply_mask", scores.value(), connected);
  Tensor out = scores.value();
  for (std::size_t i = 0; i < out.size(); ++i)
    if (connected[i] == 0.0) out[i] = -std::numeric_limits<double>::infinity();
  return scores.tape->push(std::move(out), {scores}, [scores, connected](Tape& t, const Tensor& g) {
    if (!t.needs_grad(scores.id)) return;
    Tensor& gs = t.grad_slot(scores.id);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (connected[i] != 0.0) gs[i] += g[i];
  });
}

inline constexpr double kLayerNormEps = 1e-5;

/// Normalizes each last-axis slice to zero mean / unit variance, then applies
/// gain and bias (both of the last extent).
inline Var layer_norm(Var x, Var gain, Var bias, double eps = kLayerNormEps) {
  const Tensor& xv = x.value();
  if (xv.rank() == 0) throw DimensionError("layer_norm: rank-0 input");
  const std::size_t d = xv.shape().back();
  if (gain.value().rank() != 1 || gain.dim(0) != d || bias.value().rank() != 1 || bias.dim(0) != d) {
    throw DimensionError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" +
                         shape_str(bias.shape()) + " do not match last axis of " + shape_str(xv.shape()));
  }
  if (!(eps > 0.0)) throw ConfigError("layer_norm: eps must be positive");
  const std::size_t rows = d ? xv.size() / d : 0;
  Tensor xhat(xv.shape());
  std::vector<double> inv_std(rows);
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.ptr() + r * d;
    double mean = 0.0;
    for (std::size_t k = 0; k < d; ++k) mean += row[k];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t k = 0; k < d; ++k) var += (row[k] - mean) * (row[k] - mean);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t k = 0; k < d; ++k) {
      const double h = (row[k] - mean) * inv_std[r];
      xhat[r * d + k] = h;
      out[r * d + k] = h * gv[k] + bv[k];
    }
  }
  return x.tape->push(
      std::move(out), {x, gain, bias},
      [x, gain, bias, d, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t,
                                                                                      const Tensor& g) {
        const Tensor& gv = t.value(gain.id);
        if (t.needs_grad(gain.id)) {
          Tensor& gg = t.grad_slot(gain.id);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t k = 0; k < d; ++k) gg[k] += g[r * d + k] * xhat[r * d + k];
        }
        if (t.needs_grad(bias.id)) {
          Tensor& gb = t.grad_slot(bias.id);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t k = 0; k < d; ++k) gb[k] += g[r * d + k];
        }
        if (t.needs_grad(x.id)) {
          Tensor& gx = t.grad_slot(x.id);
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t r = 0; r < rows; ++r) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
              const double dh = g[r * d + k] * gv[k];
              m1 += dh;
              m2 += dh * xhat[r * d + k];
            }
            m1 *= inv_d;
            m2 *= inv_d;
            for (std::size_t k = 0; k < d; ++k) {
              const double dh = g[r * d + k] * gv[k];
              gx[r * d + k] += inv_std[r] * (dh - m1 - xhat[r * d + k] * m2);
            }
          }
        }
      });
}

}  // namespace igstf
