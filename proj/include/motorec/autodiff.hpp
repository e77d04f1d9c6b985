// Reverse-mode differentiation over DenseMatrix values.
//
// A Tape owns a growing arena of Nodes; ops append nodes and capture raw
// parent pointers in a backprop closure. backward() runs the closures in
// reverse topological order from a scalar root. Graph adjacency (spmm's
// sparse operand) and anything wrapped in stop_grad() is constant.
//
// Replay support: stop-gradient values and hard index selections can be
// recorded on one forward pass and substituted on later passes. A finite-
// difference probe evaluated in replay mode measures exactly the function
// the tape differentiates (straight-through offsets and argmin picks held
// fixed), which is what makes end-to-end gradient checks meaningful.
#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "motorec/errors.hpp"
#include "motorec/matrix.hpp"

namespace motorec::ad {

class Tape;

struct Node {
  DenseMatrix value;
  DenseMatrix grad;
  bool requires_grad = false;
  bool grad_alloc = false;
  std::string name;  // nonempty only for named parameter leaves
  std::vector<Node*> parents;
  std::function<void(Node*)> backprop;
  Tape* tape = nullptr;

  DenseMatrix& ensure_grad() {
    if (!grad_alloc) {
      grad = DenseMatrix(value.rows, value.cols);
      grad_alloc = true;
    }
    return grad;
  }

  // Zero matrix if backward never reached this node.
  DenseMatrix gradient() const { return grad_alloc ? grad : DenseMatrix(value.rows, value.cols); }
};

using Var = Node*;

enum class ReplayMode { none, capture, replay };

struct ReplayLog {
  std::vector<DenseMatrix> values;
  std::vector<std::vector<std::uint32_t>> picks;
  std::size_t value_cursor = 0;
  std::size_t pick_cursor = 0;

  void rewind() {
    value_cursor = 0;
    pick_cursor = 0;
  }
};

class Tape {
 public:
  Var leaf(DenseMatrix value, std::string name = {}, bool requires_grad = true) {
    Var n = make(std::move(value));
    n->requires_grad = requires_grad;
    n->name = std::move(name);
    if (!n->name.empty()) params_.push_back(n);
    return n;
  }

  Var constant(DenseMatrix value) { return leaf(std::move(value), {}, false); }

  Var make(DenseMatrix value) {
    nodes_.emplace_back(std::make_unique<Node>());
    Node* n = nodes_.back().get();
    n->value = std::move(value);
    n->tape = this;
    return n;
  }

  void set_replay(ReplayMode mode, ReplayLog* log) {
    if (mode != ReplayMode::none && log == nullptr)
      throw contract_error("set_replay: log required");
    replay_mode_ = mode;
    replay_log_ = log;
  }

  ReplayMode replay_mode() const { return replay_mode_; }

  DenseMatrix intercept_value(DenseMatrix computed) {
    switch (replay_mode_) {
      case ReplayMode::capture:
        replay_log_->values.push_back(computed);
        return computed;
      case ReplayMode::replay:
        if (replay_log_->value_cursor >= replay_log_->values.size())
          throw contract_error("replay log exhausted (values)");
        return replay_log_->values[replay_log_->value_cursor++];
      case ReplayMode::none:
        return computed;
    }
    return computed;
  }

  std::vector<std::uint32_t> intercept_picks(
      const std::function<std::vector<std::uint32_t>()>& compute) {
    switch (replay_mode_) {
      case ReplayMode::capture: {
        auto p = compute();
        replay_log_->picks.push_back(p);
        return p;
      }
      case ReplayMode::replay:
        if (replay_log_->pick_cursor >= replay_log_->picks.size())
          throw contract_error("replay log exhausted (picks)");
        return replay_log_->picks[replay_log_->pick_cursor++];
      case ReplayMode::none:
        return compute();
    }
    return compute();
  }

  // Reverse accumulation from a 1x1 root. One pass per tape; building a fresh
  // tape (or clear()) is the reset.
  void backward(Var root) {
    if (root->tape != this) throw contract_error("backward: root from another tape");
    if (root->value.rows != 1 || root->value.cols != 1)
      throw contract_error("backward: root must be scalar (1x1)");
    if (backward_done_)
      throw contract_error("backward: already run on this tape; reset first");
    backward_done_ = true;

    std::vector<Node*> order = topo_from(root);
    root->ensure_grad().v[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (n->backprop && n->grad_alloc) n->backprop(n);
    }
  }

  bool backward_done() const { return backward_done_; }

  // Gradients of all named parameter leaves, zeros where unreached.
  std::map<std::string, DenseMatrix> gradients() const {
    std::map<std::string, DenseMatrix> g;
    for (const Node* p : params_) g[p->name] = p->gradient();
    return g;
  }

  Var param_node(const std::string& name) const {
    for (Node* p : params_)
      if (p->name == name) return p;
    throw contract_error("unknown parameter node: " + name);
  }

  void clear() {
    nodes_.clear();
    params_.clear();
    backward_done_ = false;
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  std::vector<Node*> topo_from(Var root) {
    std::vector<Node*> order;
    std::unordered_set<const Node*> seen;
    // Iterative post-order DFS; chains can get long at many epochs x layers.
    std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
    seen.insert(root);
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        Node* p = n->parents[next++];
        if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    return order;
  }

  std::deque<std::unique_ptr<Node>> nodes_;
  std::vector<Node*> params_;
  bool backward_done_ = false;
  ReplayMode replay_mode_ = ReplayMode::none;
  ReplayLog* replay_log_ = nullptr;
};

// True if `target` is reachable from `root` through differentiable edges.
inline bool depends_on(Var root, Var target) {
  std::unordered_set<const Node*> seen;
  std::vector<Node*> stack{root};
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    if (n == target) return true;
    if (!seen.insert(n).second) continue;
    for (Node* p : n->parents) stack.push_back(p);
  }
  return false;
}

namespace detail {

inline Tape& tape_of(Var a) { return *a->tape; }

inline void check_same_tape(Var a, Var b, const char* op) {
  if (a->tape != b->tape) throw contract_error(std::string(op) + ": operands on different tapes");
}

inline Var unary(Var a, DenseMatrix value, std::function<void(Node*)> bp) {
  Var out = tape_of(a).make(std::move(value));
  out->parents = {a};
  out->requires_grad = a->requires_grad;
  if (out->requires_grad) out->backprop = std::move(bp);
  return out;
}

inline Var binary(Var a, Var b, DenseMatrix value, std::function<void(Node*)> bp) {
  check_same_tape(a, b, "binary op");
  Var out = tape_of(a).make(std::move(value));
  out->parents = {a, b};
  out->requires_grad = a->requires_grad || b->requires_grad;
  if (out->requires_grad) out->backprop = std::move(bp);
  return out;
}

}  // namespace detail

inline Var add(Var a, Var b) {
  return detail::binary(a, b, motorec::add(a->value, b->value), [a, b](Node* o) {
    if (a->requires_grad) {
      auto& g = a->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g.v[i] += o->grad.v[i];
    }
    if (b->requires_grad) {
      auto& g = b->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g.v[i] += o->grad.v[i];
    }
  });
}

inline Var sub(Var a, Var b) {
  return detail::binary(a, b, motorec::sub(a->value, b->value), [a, b](Node* o) {
    if (a->requires_grad) {
      auto& g = a->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g.v[i] += o->grad.v[i];
    }
    if (b->requires_grad) {
      auto& g = b->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g.v[i] -= o->grad.v[i];
    }
  });
}

inline Var mul(Var a, Var b) {
  return detail::binary(a, b, motorec::hadamard(a->value, b->value), [a, b](Node* o) {
    if (a->requires_grad) {
      auto& g = a->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g.v[i] += o->grad.v[i] * b->value.v[i];
    }
    if (b->requires_grad) {
      auto& g = b->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g.v[i] += o->grad.v[i] * a->value.v[i];
    }
  });
}

inline Var scale(Var a, double s) {
  return detail::unary(a, motorec::scale(a->value, s), [a, s](Node* o) {
    auto& g = a->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g.v[i] += s * o->grad.v[i];
  });
}

inline Var neg(Var a) { return scale(a, -1.0); }

inline Var matmul(Var a, Var b) {
  return detail::binary(a, b, motorec::matmul(a->value, b->value), [a, b](Node* o) {
    const DenseMatrix& dc = o->grad;
    if (a->requires_grad) {
      auto& da = a->ensure_grad();  // dA[i,k] += dot(dC.row(i), B.row(k))
      for (std::size_t i = 0; i < da.rows; ++i)
        for (std::size_t k = 0; k < da.cols; ++k)
          da(i, k) += motorec::dot(dc.row(i), b->value.row(k), dc.cols);
    }
    if (b->requires_grad) {
      auto& db = b->ensure_grad();  // dB[k,:] += A[i,k] * dC[i,:]
      for (std::size_t i = 0; i < a->value.rows; ++i) {
        const double* dcrow = dc.row(i);
        for (std::size_t k = 0; k < a->value.cols; ++k) {
          const double aik = a->value(i, k);
          if (aik == 0.0) continue;
          double* dbrow = db.row(k);
          for (std::size_t j = 0; j < dc.cols; ++j) dbrow[j] += aik * dcrow[j];
        }
      }
    }
  });
}

inline Var transpose(Var a) {
  return detail::unary(a, motorec::transpose(a->value), [a](Node* o) {
    auto& g = a->ensure_grad();
    for (std::size_t r = 0; r < o->grad.rows; ++r)
      for (std::size_t c = 0; c < o->grad.cols; ++c) g(c, r) += o->grad(r, c);
  });
}

// Sparse-dense product; the sparse operand is constant (held by shared_ptr so
// the tape never outlives it).
inline Var spmm(std::shared_ptr<const SparseMatrix> s, Var b) {
  if (!s) throw contract_error("spmm: null sparse operand");
  return detail::unary(b, motorec::spmm(*s, b->value), [s, b](Node* o) {
    DenseMatrix db = motorec::spmm_transposed(*s, o->grad);
    auto& g = b->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g.v[i] += db.v[i];
  });
}

inline Var gather_rows(Var a, std::vector<std::uint32_t> idx) {
  DenseMatrix out(idx.size(), a->value.cols);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= a->value.rows) throw contract_error("gather_rows: index out of range");
    for (std::size_t c = 0; c < a->value.cols; ++c) out(r, c) = a->value(idx[r], c);
  }
  return detail::unary(a, std::move(out), [a, idx = std::move(idx)](Node* o) {
    auto& g = a->ensure_grad();
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t c = 0; c < g.cols; ++c) g(idx[r], c) += o->grad(r, c);
  });
}

inline Var concat_cols(Var a, Var b) {
  if (a->value.rows != b->value.rows) throw dimension_error("concat_cols: row mismatch");
  DenseMatrix out(a->value.rows, a->value.cols + b->value.cols);
  for (std::size_t r = 0; r < out.rows; ++r) {
    for (std::size_t c = 0; c < a->value.cols; ++c) out(r, c) = a->value(r, c);
    for (std::size_t c = 0; c < b->value.cols; ++c) out(r, a->value.cols + c) = b->value(r, c);
  }
  return detail::binary(a, b, std::move(out), [a, b](Node* o) {
    const std::size_t ac = a->value.cols;
    if (a->requires_grad) {
      auto& g = a->ensure_grad();
      for (std::size_t r = 0; r < g.rows; ++r)
        for (std::size_t c = 0; c < ac; ++c) g(r, c) += o->grad(r, c);
    }
    if (b->requires_grad) {
      auto& g = b->ensure_grad();
      for (std::size_t r = 0; r < g.rows; ++r)
        for (std::size_t c = 0; c < g.cols; ++c) g(r, c) += o->grad(r, ac + c);
    }
  });
}

inline Var concat_rows(Var a, Var b) {
  if (a->value.cols != b->value.cols) throw dimension_error("concat_rows: col mismatch");
  DenseMatrix out(a->value.rows + b->value.rows, a->value.cols);
  for (std::size_t r = 0; r < a->value.rows; ++r)
    for (std::size_t c = 0; c < out.cols; ++c) out(r, c) = a->value(r, c);
  for (std::size_t r = 0; r < b->value.rows; ++r)
    for (std::size_t c = 0; c < out.cols; ++c) out(a->value.rows + r, c) = b->value(r, c);
  return detail::binary(a, b, std::move(out), [a, b](Node* o) {
    const std::size_t ar = a->value.rows;
    if (a->requires_grad) {
      auto& g = a->ensure_grad();
      for (std::size_t r = 0; r < ar; ++r)
        for (std::size_t c = 0; c < g.cols; ++c) g(r, c) += o->grad(r, c);
    }
    if (b->requires_grad) {
      auto& g = b->ensure_grad();
      for (std::size_t r = 0; r < g.rows; ++r)
        for (std::size_t c = 0; c < g.cols; ++c) g(r, c) += o->grad(ar + r, c);
    }
  });
}

inline Var slice_rows(Var a, std::size_t r0, std::size_t r1) {
  if (r0 > r1 || r1 > a->value.rows) throw contract_error("slice_rows: bad range");
  DenseMatrix out(r1 - r0, a->value.cols);
  for (std::size_t r = r0; r < r1; ++r)
    for (std::size_t c = 0; c < out.cols; ++c) out(r - r0, c) = a->value(r, c);
  return detail::unary(a, std::move(out), [a, r0](Node* o) {
    auto& g = a->ensure_grad();
    for (std::size_t r = 0; r < o->grad.rows; ++r)
      for (std::size_t c = 0; c < o->grad.cols; ++c) g(r0 + r, c) += o->grad(r, c);
  });
}

inline Var slice_cols(Var a, std::size_t c0, std::size_t c1) {
  if (c0 > c1 || c1 > a->value.cols) throw contract_error("slice_cols: bad range");
  DenseMatrix out(a->value.rows, c1 - c0);
  for (std::size_t r = 0; r < out.rows; ++r)
    for (std::size_t c = c0; c < c1; ++c) out(r, c - c0) = a->value(r, c);
  return detail::unary(a, std::move(out), [a, c0](Node* o) {
    auto& g = a->ensure_grad();
    for (std::size_t r = 0; r < o->grad.rows; ++r)
      for (std::size_t c = 0; c < o->grad.cols; ++c) g(r, c0 + c) += o->grad(r, c);
  });
}

inline Var sum_all(Var a) {
  DenseMatrix out(1, 1);
  out.v[0] = motorec::sum_all(a->value);
  return detail::unary(a, std::move(out), [a](Node* o) {
    auto& g = a->ensure_grad();
    const double d = o->grad.v[0];
    for (double& x : g.v) x += d;
  });
}

inline Var mean_all(Var a) {
  if (a->value.size() == 0) throw contract_error("mean_all: empty matrix");
  DenseMatrix out(1, 1);
  out.v[0] = motorec::sum_all(a->value) / static_cast<double>(a->value.size());
  return detail::unary(a, std::move(out), [a](Node* o) {
    auto& g = a->ensure_grad();
    const double d = o->grad.v[0] / static_cast<double>(g.size());
    for (double& x : g.v) x += d;
  });
}

inline Var row_sum(Var a) {
  DenseMatrix out(a->value.rows, 1);
  for (std::size_t r = 0; r < a->value.rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < a->value.cols; ++c) s += a->value(r, c);
    out(r, 0) = s;
  }
  return detail::unary(a, std::move(out), [a](Node* o) {
    auto& g = a->ensure_grad();
    for (std::size_t r = 0; r < g.rows; ++r) {
      const double d = o->grad(r, 0);
      for (std::size_t c = 0; c < g.cols; ++c) g(r, c) += d;
    }
  });
}

inline Var col_mean(Var a) {
  if (a->value.rows == 0) throw contract_error("col_mean: empty matrix");
  DenseMatrix out(1, a->value.cols);
  for (std::size_t r = 0; r < a->value.rows; ++r)
    for (std::size_t c = 0; c < a->value.cols; ++c) out(0, c) += a->value(r, c);
  for (std::size_t c = 0; c < a->value.cols; ++c) out(0, c) /= static_cast<double>(a->value.rows);
  return detail::unary(a, std::move(out), [a](Node* o) {
    auto& g = a->ensure_grad();
    const double inv = 1.0 / static_cast<double>(g.rows);
    for (std::size_t r = 0; r < g.rows; ++r)
      for (std::size_t c = 0; c < g.cols; ++c) g(r, c) += o->grad(0, c) * inv;
  });
}

inline Var add_row_vector(Var a, Var rv) {
  if (rv->value.rows != 1 || rv->value.cols != a->value.cols)
    throw dimension_error("add_row_vector: need 1 x cols vector");
  DenseMatrix out(a->value.rows, a->value.cols);
  for (std::size_t r = 0; r < out.rows; ++r)
    for (std::size_t c = 0; c < out.cols; ++c) out(r, c) = a->value(r, c) + rv->value(0, c);
  return detail::binary(a, rv, std::move(out), [a, rv](Node* o) {
    if (a->requires_grad) {
      auto& g = a->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g.v[i] += o->grad.v[i];
    }
    if (rv->requires_grad) {
      auto& g = rv->ensure_grad();
      for (std::size_t r = 0; r < o->grad.rows; ++r)
        for (std::size_t c = 0; c < o->grad.cols; ++c) g(0, c) += o->grad(r, c);
    }
  });
}

inline Var add_col_vector(Var a, Var cv) {
  if (cv->value.cols != 1 || cv->value.rows != a->value.rows)
    throw dimension_error("add_col_vector: need rows x 1 vector");
  DenseMatrix out(a->value.rows, a->value.cols);
  for (std::size_t r = 0; r < out.rows; ++r)
    for (std::size_t c = 0; c < out.cols; ++c) out(r, c) = a->value(r, c) + cv->value(r, 0);
  return detail::binary(a, cv, std::move(out), [a, cv](Node* o) {
    if (a->requires_grad) {
      auto& g = a->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g.v[i] += o->grad.v[i];
    }
    if (cv->requires_grad) {
      auto& g = cv->ensure_grad();
      for (std::size_t r = 0; r < o->grad.rows; ++r)
        for (std::size_t c = 0; c < o->grad.cols; ++c) g(r, 0) += o->grad(r, c);
    }
  });
}

inline Var mul_col_vector(Var a, Var cv) {
  if (cv->value.cols != 1 || cv->value.rows != a->value.rows)
    throw dimension_error("mul_col_vector: need rows x 1 vector");
  DenseMatrix out(a->value.rows, a->value.cols);
  for (std::size_t r = 0; r < out.rows; ++r)
    for (std::size_t c = 0; c < out.cols; ++c) out(r, c) = a->value(r, c) * cv->value(r, 0);
  return detail::binary(a, cv, std::move(out), [a, cv](Node* o) {
    if (a->requires_grad) {
      auto& g = a->ensure_grad();
      for (std::size_t r = 0; r < g.rows; ++r)
        for (std::size_t c = 0; c < g.cols; ++c) g(r, c) += o->grad(r, c) * cv->value(r, 0);
    }
    if (cv->requires_grad) {
      auto& g = cv->ensure_grad();
      for (std::size_t r = 0; r < o->grad.rows; ++r)
        for (std::size_t c = 0; c < o->grad.cols; ++c) g(r, 0) += o->grad(r, c) * a->value(r, c);
    }
  });
}

inline Var tanh_op(Var a) {
  DenseMatrix out(a->value.rows, a->value.cols);
  for (std::size_t i = 0; i < out.size(); ++i) out.v[i] = std::tanh(a->value.v[i]);
  Var o = detail::unary(a, std::move(out), nullptr);
  if (o->requires_grad)
    o->backprop = [a, o](Node*) {
      auto& g = a->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        g.v[i] += o->grad.v[i] * (1.0 - o->value.v[i] * o->value.v[i]);
    };
  return o;
}

inline double sigmoid_scalar(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline Var sigmoid(Var a) {
  DenseMatrix out(a->value.rows, a->value.cols);
  for (std::size_t i = 0; i < out.size(); ++i) out.v[i] = sigmoid_scalar(a->value.v[i]);
  Var o = detail::unary(a, std::move(out), nullptr);
  if (o->requires_grad)
    o->backprop = [a, o](Node*) {
      auto& g = a->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        g.v[i] += o->grad.v[i] * o->value.v[i] * (1.0 - o->value.v[i]);
    };
  return o;
}

// log(1 + e^x) without overflow on either side.
inline double softplus_scalar(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline Var softplus(Var a) {
  DenseMatrix out(a->value.rows, a->value.cols);
  for (std::size_t i = 0; i < out.size(); ++i) out.v[i] = softplus_scalar(a->value.v[i]);
  return detail::unary(a, std::move(out), [a](Node* o) {
    auto& g = a->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i)
      g.v[i] += o->grad.v[i] * sigmoid_scalar(a->value.v[i]);
  });
}

inline Var log_op(Var a) {
  DenseMatrix out(a->value.rows, a->value.cols);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (a->value.v[i] <= 0.0) throw contract_error("log: nonpositive input");
    out.v[i] = std::log(a->value.v[i]);
  }
  return detail::unary(a, std::move(out), [a](Node* o) {
    auto& g = a->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g.v[i] += o->grad.v[i] / a->value.v[i];
  });
}

// Gradient passes only through the strict interior.
inline Var clamp(Var a, double lo, double hi) {
  DenseMatrix out(a->value.rows, a->value.cols);
  for (std::size_t i = 0; i < out.size(); ++i)
    out.v[i] = std::min(std::max(a->value.v[i], lo), hi);
  return detail::unary(a, std::move(out), [a, lo, hi](Node* o) {
    auto& g = a->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (a->value.v[i] > lo && a->value.v[i] < hi) g.v[i] += o->grad.v[i];
  });
}

inline Var softmax_rows(Var a) {
  DenseMatrix out(a->value.rows, a->value.cols);
  for (std::size_t r = 0; r < out.rows; ++r) {
    double m = a->value(r, 0);
    for (std::size_t c = 1; c < out.cols; ++c) m = std::max(m, a->value(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < out.cols; ++c) {
      out(r, c) = std::exp(a->value(r, c) - m);
      z += out(r, c);
    }
    for (std::size_t c = 0; c < out.cols; ++c) out(r, c) /= z;
  }
  Var o = detail::unary(a, std::move(out), nullptr);
  if (o->requires_grad)
    o->backprop = [a, o](Node*) {
      auto& g = a->ensure_grad();
      for (std::size_t r = 0; r < g.rows; ++r) {
        double inner = 0.0;
        for (std::size_t c = 0; c < g.cols; ++c) inner += o->grad(r, c) * o->value(r, c);
        for (std::size_t c = 0; c < g.cols; ++c)
          g(r, c) += o->value(r, c) * (o->grad(r, c) - inner);
      }
    };
  return o;
}

inline Var row_l2_normalize(Var a) {
  DenseMatrix out(a->value.rows, a->value.cols);
  std::vector<double> norms(a->value.rows);
  for (std::size_t r = 0; r < out.rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < out.cols; ++c) s += a->value(r, c) * a->value(r, c);
    const double n = std::sqrt(s);
    if (n == 0.0) throw contract_error("row_l2_normalize: zero-norm row " + std::to_string(r));
    norms[r] = n;
    for (std::size_t c = 0; c < out.cols; ++c) out(r, c) = a->value(r, c) / n;
  }
  Var o = detail::unary(a, std::move(out), nullptr);
  if (o->requires_grad)
    o->backprop = [a, o, norms = std::move(norms)](Node*) {
      auto& g = a->ensure_grad();
      for (std::size_t r = 0; r < g.rows; ++r) {
        double ydy = 0.0;
        for (std::size_t c = 0; c < g.cols; ++c) ydy += o->value(r, c) * o->grad(r, c);
        for (std::size_t c = 0; c < g.cols; ++c)
          g(r, c) += (o->grad(r, c) - o->value(r, c) * ydy) / norms[r];
      }
    };
  return o;
}

inline Var logsumexp_rows(Var a) {
  DenseMatrix out(a->value.rows, 1);
  for (std::size_t r = 0; r < a->value.rows; ++r) {
    double m = a->value(r, 0);
    for (std::size_t c = 1; c < a->value.cols; ++c) m = std::max(m, a->value(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < a->value.cols; ++c) z += std::exp(a->value(r, c) - m);
    out(r, 0) = m + std::log(z);
  }
  Var o = detail::unary(a, std::move(out), nullptr);
  if (o->requires_grad)
    o->backprop = [a, o](Node*) {
      auto& g = a->ensure_grad();
      for (std::size_t r = 0; r < g.rows; ++r) {
        const double d = o->grad(r, 0);
        for (std::size_t c = 0; c < g.cols; ++c)
          g(r, c) += d * std::exp(a->value(r, c) - o->value(r, 0));
      }
    };
  return o;
}

inline Var gather_diag(Var a) {
  if (a->value.rows != a->value.cols) throw dimension_error("gather_diag: matrix not square");
  DenseMatrix out(a->value.rows, 1);
  for (std::size_t r = 0; r < out.rows; ++r) out(r, 0) = a->value(r, r);
  return detail::unary(a, std::move(out), [a](Node* o) {
    auto& g = a->ensure_grad();
    for (std::size_t r = 0; r < g.rows; ++r) g(r, r) += o->grad(r, 0);
  });
}

// Value passes through; gradient does not. Under capture/replay the forwarded
// value is recorded/substituted so probes see the differentiated function.
inline Var stop_grad(Var a) {
  Tape& t = detail::tape_of(a);
  Var out = t.make(t.intercept_value(a->value));
  out->requires_grad = false;
  return out;
}

// value_of(out) = value_of(target); d out / d flow = identity. The offset
// (target - flow) is the stop-gradient payload.
inline Var straight_through(Var flow, Var target) {
  detail::check_same_tape(flow, target, "straight_through");
  check_same_shape(flow->value, target->value, "straight_through");
  Tape& t = detail::tape_of(flow);
  DenseMatrix offset = t.intercept_value(motorec::sub(target->value, flow->value));
  Var out = t.make(motorec::add(flow->value, offset));
  out->parents = {flow};
  out->requires_grad = flow->requires_grad;
  if (out->requires_grad)
    out->backprop = [flow](Node* o) {
      auto& g = flow->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g.v[i] += o->grad.v[i];
    };
  return out;
}

}  // namespace motorec::ad
