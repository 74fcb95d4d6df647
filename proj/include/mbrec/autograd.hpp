// Copyright 2026 The mbrec Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Reverse-mode differentiation over dense matrices.
//
// A BasicTape records every operation in creation order; BasicVar is a cheap
// handle (tape pointer + node index). Backward walks the tape once in reverse.
// Stop-gradient is its own node kind: it forwards its input's value unchanged
// and never propagates gradient to that input.
//
// Usage:
//   Tape tape;
//   Var x = tape.input(m);
//   Var loss = sum(hadamard(x, x));
//   tape.backward(loss);
//   Matrix dx = tape.grad(x);

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mbrec/dense.hpp"
#include "mbrec/parameter.hpp"

namespace mbrec {

enum class OpTag {
  kConstant,
  kInput,
  kParameter,
  kStopGradient,
  kSpmm,
  kMatMul,
  kMatMulNT,
  kTranspose,
  kAdd,
  kSub,
  kHadamard,
  kScale,
  kAddRowBroadcast,
  kMulRowBroadcast,
  kMulColBroadcast,
  kConcatRows,
  kConcatCols,
  kSliceRows,
  kSliceCols,
  kGatherRows,
  kRowSum,
  kRowMean,
  kSum,
  kMean,
  kSoftmaxRows,
  kLogSumExpRows,
  kSigmoid,
  kSoftplus,
  kLog,
  kExp,
  kL2NormalizeRows,
};

template <typename Scalar>
class BasicTape;

template <typename Scalar>
class BasicVar {
 public:
  BasicVar() = default;
  BasicVar(BasicTape<Scalar>* tape, std::size_t id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  std::size_t id() const { return id_; }
  BasicTape<Scalar>& tape() const { return *tape_; }
  const Dense<Scalar>& value() const { return tape_->node(id_).value; }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  /// Convenience for 1x1 nodes.
  Scalar scalar() const { return value()(0, 0); }

 private:
  BasicTape<Scalar>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename Scalar>
struct TapeNode {
  using BackwardFn = std::function<void(BasicTape<Scalar>&, std::size_t self)>;

  OpTag op = OpTag::kConstant;
  std::vector<std::size_t> inputs;
  Dense<Scalar> value;
  Dense<Scalar> grad;
  bool has_grad = false;
  bool requires_grad = false;
  // Set only on kStopGradient nodes: backward is never propagated past them.
  bool stop_gradient = false;
  BasicParameter<Scalar>* parameter = nullptr;
  BackwardFn backward;
};

template <typename Scalar>
class BasicTape {
 public:
  using Var = BasicVar<Scalar>;
  using Node = TapeNode<Scalar>;
  using Mat = Dense<Scalar>;

  BasicTape() = default;
  BasicTape(const BasicTape&) = delete;
  BasicTape& operator=(const BasicTape&) = delete;

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t id) const { return nodes_[id]; }

  Var constant(Mat value) { return leaf(OpTag::kConstant, std::move(value), false, nullptr); }
  /// A differentiable leaf not bound to any parameter.
  Var input(Mat value) { return leaf(OpTag::kInput, std::move(value), true, nullptr); }
  /// Leaf whose gradient is added into p.grad by backward().
  Var parameter(BasicParameter<Scalar>& p) { return leaf(OpTag::kParameter, p.value, true, &p); }

  /// Appends a computed node. requires_grad is inherited from the inputs.
  Var push(OpTag op, std::vector<std::size_t> inputs, Mat value, typename Node::BackwardFn backward) {
    Node n;
    n.op = op;
    for (auto i : inputs) n.requires_grad = n.requires_grad || nodes_[i].requires_grad;
    n.inputs = std::move(inputs);
    n.value = std::move(value);
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
  }

  Var stop_gradient(Var x) {
    Mat value;
    if (sg_cursor_ < frozen_.size()) {
      value = frozen_[sg_cursor_];
      if (value.rows() != x.rows() || value.cols() != x.cols()) {
        throw ConfigError("frozen stop-gradient value has shape " + shape_string(value) + ", expected " +
                          shape_string(x.value()));
      }
    } else {
      value = x.value();
    }
    ++sg_cursor_;
    Var out = push(OpTag::kStopGradient, {x.id()}, std::move(value), nullptr);
    nodes_[out.id()].stop_gradient = true;
    sg_nodes_.push_back(out.id());
    return out;
  }

  /// Values produced by stop-gradient nodes, in creation order.
  std::vector<Mat> stop_gradient_values() const {
    std::vector<Mat> out;
    out.reserve(sg_nodes_.size());
    for (auto id : sg_nodes_) out.push_back(nodes_[id].value);
    return out;
  }
  std::span<const std::size_t> stop_gradient_nodes() const { return sg_nodes_; }

  /// Makes the i-th stop-gradient node created on this tape output values[i]
  /// instead of its input. Differencing a loss under frozen values measures
  /// the derivative that treats sg(.) as a constant.
  void freeze_stop_gradients(std::vector<Mat> values) {
    frozen_ = std::move(values);
    sg_cursor_ = 0;
  }

  void backward(Var loss) {
    if (loss.rows() != 1 || loss.cols() != 1) {
      throw UsageError("backward requires a scalar (1x1) node, got " + shape_string(loss.value()));
    }
    accumulate(loss.id(), Mat::Ones(1, 1));
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.has_grad || n.stop_gradient || !n.backward) continue;
      n.backward(*this, i);
    }
    for (auto& n : nodes_) {
      if (n.parameter != nullptr && n.has_grad) n.parameter->grad += n.grad;
    }
  }

  /// Gradient accumulated on a node; zeros if nothing reached it.
  Mat grad(Var v) const {
    const Node& n = nodes_[v.id()];
    if (!n.has_grad) return Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }
  bool has_grad(Var v) const { return nodes_[v.id()].has_grad; }

  const Mat& grad_of(std::size_t id) const { return nodes_[id].grad; }
  const Mat& value_of(std::size_t id) const { return nodes_[id].value; }

  template <typename Derived>
  void accumulate(std::size_t id, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (!n.has_grad) {
      n.grad = g;
      n.has_grad = true;
    } else {
      n.grad += g;
    }
  }

  template <typename Derived>
  void accumulate_block(std::size_t id, Index row0, Index col0, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (!n.has_grad) {
      n.grad = Mat::Zero(n.value.rows(), n.value.cols());
      n.has_grad = true;
    }
    n.grad.block(row0, col0, g.rows(), g.cols()) += g;
  }

  Mat& grad_slot(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
      n.grad = Mat::Zero(n.value.rows(), n.value.cols());
      n.has_grad = true;
    }
    return n.grad;
  }

 private:
  Var leaf(OpTag op, Mat value, bool requires_grad, BasicParameter<Scalar>* p) {
    Node n;
    n.op = op;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.parameter = p;
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  std::vector<std::size_t> sg_nodes_;
  std::vector<Mat> frozen_;
  std::size_t sg_cursor_ = 0;
};

using Tape = BasicTape<double>;
using Var = BasicVar<double>;

namespace detail {

template <typename Scalar>
void require_same_shape(const char* op, BasicVar<Scalar> a, BasicVar<Scalar> b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ConfigError(std::string(op) + ": shape mismatch " + shape_string(a.value()) + " vs " +
                      shape_string(b.value()));
  }
}

template <typename Scalar>
Scalar stable_sigmoid(Scalar x) {
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
Scalar stable_softplus(Scalar x) {
  return std::max(x, Scalar(0)) + std::log1p(std::exp(-std::abs(x)));
}

template <typename Scalar>
Dense<Scalar> softmax_rows_value(const Dense<Scalar>& a) {
  Dense<Scalar> y(a.rows(), a.cols());
  for (Index r = 0; r < a.rows(); ++r) {
    const Scalar m = a.row(r).maxCoeff();
    Scalar total = Scalar(0);
    for (Index c = 0; c < a.cols(); ++c) {
      y(r, c) = std::exp(a(r, c) - m);
      total += y(r, c);
    }
    for (Index c = 0; c < a.cols(); ++c) y(r, c) /= total;
  }
  return y;
}

}  // namespace detail

template <typename Scalar>
BasicVar<Scalar> stop_gradient(BasicVar<Scalar> x) {
  return x.tape().stop_gradient(x);
}

/// Sparse (constant) times dense (differentiable).
template <typename Scalar>
BasicVar<Scalar> spmm(std::shared_ptr<const CsrMatrix<Scalar>> a, BasicVar<Scalar> b) {
  auto& t = b.tape();
  Dense<Scalar> value = spmm(*a, b.value());
  const auto bid = b.id();
  return t.push(OpTag::kSpmm, {bid}, std::move(value), [a, bid](BasicTape<Scalar>& tape, std::size_t self) {
    tape.accumulate(bid, spmm_transposed(*a, tape.grad_of(self)));
  });
}

template <typename Scalar>
BasicVar<Scalar> matmul(BasicVar<Scalar> a, BasicVar<Scalar> b) {
  if (a.cols() != b.rows()) {
    throw ConfigError("matmul: shape mismatch " + shape_string(a.value()) + " times " + shape_string(b.value()));
  }
  Dense<Scalar> value = a.value() * b.value();
  const auto aid = a.id(), bid = b.id();
  return a.tape().push(OpTag::kMatMul, {aid, bid}, std::move(value),
                       [aid, bid](BasicTape<Scalar>& t, std::size_t self) {
                         const auto& g = t.grad_of(self);
                         t.accumulate(aid, g * t.value_of(bid).transpose());
                         t.accumulate(bid, t.value_of(aid).transpose() * g);
                       });
}

/// a * b^T.
template <typename Scalar>
BasicVar<Scalar> matmul_nt(BasicVar<Scalar> a, BasicVar<Scalar> b) {
  if (a.cols() != b.cols()) {
    throw ConfigError("matmul_nt: shape mismatch " + shape_string(a.value()) + " times transpose of " +
                      shape_string(b.value()));
  }
  Dense<Scalar> value = a.value() * b.value().transpose();
  const auto aid = a.id(), bid = b.id();
  return a.tape().push(OpTag::kMatMulNT, {aid, bid}, std::move(value),
                       [aid, bid](BasicTape<Scalar>& t, std::size_t self) {
                         const auto& g = t.grad_of(self);
                         t.accumulate(aid, g * t.value_of(bid));
                         t.accumulate(bid, g.transpose() * t.value_of(aid));
                       });
}

template <typename Scalar>
BasicVar<Scalar> transpose(BasicVar<Scalar> a) {
  Dense<Scalar> value = a.value().transpose();
  const auto aid = a.id();
  return a.tape().push(OpTag::kTranspose, {aid}, std::move(value), [aid](BasicTape<Scalar>& t, std::size_t self) {
    t.accumulate(aid, t.grad_of(self).transpose());
  });
}

template <typename Scalar>
BasicVar<Scalar> add(BasicVar<Scalar> a, BasicVar<Scalar> b) {
  detail::require_same_shape("add", a, b);
  Dense<Scalar> value = a.value() + b.value();
  const auto aid = a.id(), bid = b.id();
  return a.tape().push(OpTag::kAdd, {aid, bid}, std::move(value), [aid, bid](BasicTape<Scalar>& t, std::size_t self) {
    t.accumulate(aid, t.grad_of(self));
    t.accumulate(bid, t.grad_of(self));
  });
}

template <typename Scalar>
BasicVar<Scalar> sub(BasicVar<Scalar> a, BasicVar<Scalar> b) {
  detail::require_same_shape("sub", a, b);
  Dense<Scalar> value = a.value() - b.value();
  const auto aid = a.id(), bid = b.id();
  return a.tape().push(OpTag::kSub, {aid, bid}, std::move(value), [aid, bid](BasicTape<Scalar>& t, std::size_t self) {
    t.accumulate(aid, t.grad_of(self));
    t.accumulate(bid, -t.grad_of(self));
  });
}

template <typename Scalar>
BasicVar<Scalar> hadamard(BasicVar<Scalar> a, BasicVar<Scalar> b) {
  detail::require_same_shape("hadamard", a, b);
  Dense<Scalar> value = a.value().cwiseProduct(b.value());
  const auto aid = a.id(), bid = b.id();
  return a.tape().push(OpTag::kHadamard, {aid, bid}, std::move(value),
                       [aid, bid](BasicTape<Scalar>& t, std::size_t self) {
                         const auto& g = t.grad_of(self);
                         t.accumulate(aid, g.cwiseProduct(t.value_of(bid)));
                         t.accumulate(bid, g.cwiseProduct(t.value_of(aid)));
                       });
}

template <typename Scalar>
BasicVar<Scalar> scale(BasicVar<Scalar> a, Scalar s) {
  Dense<Scalar> value = a.value() * s;
  const auto aid = a.id();
  return a.tape().push(OpTag::kScale, {aid}, std::move(value), [aid, s](BasicTape<Scalar>& t, std::size_t self) {
    t.accumulate(aid, t.grad_of(self) * s);
  });
}

template <typename Scalar>
BasicVar<Scalar> operator+(BasicVar<Scalar> a, BasicVar<Scalar> b) {
  return add(a, b);
}
template <typename Scalar>
BasicVar<Scalar> operator-(BasicVar<Scalar> a, BasicVar<Scalar> b) {
  return sub(a, b);
}
template <typename Scalar>
BasicVar<Scalar> operator*(BasicVar<Scalar> a, Scalar s) {
  return scale(a, s);
}
template <typename Scalar>
BasicVar<Scalar> operator*(Scalar s, BasicVar<Scalar> a) {
  return scale(a, s);
}

/// a (n x c) plus row vector r (1 x c) added to every row.
template <typename Scalar>
BasicVar<Scalar> add_row_broadcast(BasicVar<Scalar> a, BasicVar<Scalar> r) {
  if (r.rows() != 1 || r.cols() != a.cols()) {
    throw ConfigError("add_row_broadcast: " + shape_string(a.value()) + " with row " + shape_string(r.value()));
  }
  Dense<Scalar> value = a.value().rowwise() + r.value().row(0);
  const auto aid = a.id(), rid = r.id();
  return a.tape().push(OpTag::kAddRowBroadcast, {aid, rid}, std::move(value),
                       [aid, rid](BasicTape<Scalar>& t, std::size_t self) {
                         const auto& g = t.grad_of(self);
                         t.accumulate(aid, g);
                         t.accumulate(rid, g.colwise().sum());
                       });
}

/// Every row of a multiplied elementwise by the row vector r.
template <typename Scalar>
BasicVar<Scalar> mul_row_broadcast(BasicVar<Scalar> a, BasicVar<Scalar> r) {
  if (r.rows() != 1 || r.cols() != a.cols()) {
    throw ConfigError("mul_row_broadcast: " + shape_string(a.value()) + " with row " + shape_string(r.value()));
  }
  Dense<Scalar> value = a.value().array().rowwise() * r.value().row(0).array();
  const auto aid = a.id(), rid = r.id();
  return a.tape().push(OpTag::kMulRowBroadcast, {aid, rid}, std::move(value),
                       [aid, rid](BasicTape<Scalar>& t, std::size_t self) {
                         const auto& g = t.grad_of(self);
                         const auto& rv = t.value_of(rid);
                         t.accumulate(aid, (g.array().rowwise() * rv.row(0).array()).matrix());
                         t.accumulate(rid, g.cwiseProduct(t.value_of(aid)).colwise().sum());
                       });
}

/// Every row i of a multiplied by the scalar col(i, 0).
template <typename Scalar>
BasicVar<Scalar> mul_col_broadcast(BasicVar<Scalar> a, BasicVar<Scalar> col) {
  if (col.cols() != 1 || col.rows() != a.rows()) {
    throw ConfigError("mul_col_broadcast: " + shape_string(a.value()) + " with column " +
                      shape_string(col.value()));
  }
  Dense<Scalar> value = a.value().array().colwise() * col.value().col(0).array();
  const auto aid = a.id(), cid = col.id();
  return a.tape().push(OpTag::kMulColBroadcast, {aid, cid}, std::move(value),
                       [aid, cid](BasicTape<Scalar>& t, std::size_t self) {
                         const auto& g = t.grad_of(self);
                         const auto& cv = t.value_of(cid);
                         t.accumulate(aid, (g.array().colwise() * cv.col(0).array()).matrix());
                         t.accumulate(cid, g.cwiseProduct(t.value_of(aid)).rowwise().sum());
                       });
}

template <typename Scalar>
BasicVar<Scalar> concat_rows(BasicVar<Scalar> a, BasicVar<Scalar> b) {
  if (a.cols() != b.cols()) {
    throw ConfigError("concat_rows: " + shape_string(a.value()) + " and " + shape_string(b.value()));
  }
  Dense<Scalar> value(a.rows() + b.rows(), a.cols());
  value.topRows(a.rows()) = a.value();
  value.bottomRows(b.rows()) = b.value();
  const auto aid = a.id(), bid = b.id();
  const Index split = a.rows();
  return a.tape().push(OpTag::kConcatRows, {aid, bid}, std::move(value),
                       [aid, bid, split](BasicTape<Scalar>& t, std::size_t self) {
                         const auto& g = t.grad_of(self);
                         t.accumulate(aid, g.topRows(split));
                         t.accumulate(bid, g.bottomRows(g.rows() - split));
                       });
}

template <typename Scalar>
BasicVar<Scalar> concat_cols(BasicVar<Scalar> a, BasicVar<Scalar> b) {
  if (a.rows() != b.rows()) {
    throw ConfigError("concat_cols: " + shape_string(a.value()) + " and " + shape_string(b.value()));
  }
  Dense<Scalar> value(a.rows(), a.cols() + b.cols());
  value.leftCols(a.cols()) = a.value();
  value.rightCols(b.cols()) = b.value();
  const auto aid = a.id(), bid = b.id();
  const Index split = a.cols();
  return a.tape().push(OpTag::kConcatCols, {aid, bid}, std::move(value),
                       [aid, bid, split](BasicTape<Scalar>& t, std::size_t self) {
                         const auto& g = t.grad_of(self);
                         t.accumulate(aid, g.leftCols(split));
                         t.accumulate(bid, g.rightCols(g.cols() - split));
                       });
}

template <typename Scalar>
BasicVar<Scalar> slice_rows(BasicVar<Scalar> a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw ConfigError("slice_rows [" + std::to_string(start) + ", +" + std::to_string(count) + ") of " +
                      shape_string(a.value()));
  }
  Dense<Scalar> value = a.value().middleRows(start, count);
  const auto aid = a.id();
  return a.tape().push(OpTag::kSliceRows, {aid}, std::move(value), [aid, start](BasicTape<Scalar>& t, std::size_t self) {
    t.accumulate_block(aid, start, 0, t.grad_of(self));
  });
}

template <typename Scalar>
BasicVar<Scalar> slice_cols(BasicVar<Scalar> a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw ConfigError("slice_cols [" + std::to_string(start) + ", +" + std::to_string(count) + ") of " +
                      shape_string(a.value()));
  }
  Dense<Scalar> value = a.value().middleCols(start, count);
  const auto aid = a.id();
  return a.tape().push(OpTag::kSliceCols, {aid}, std::move(value), [aid, start](BasicTape<Scalar>& t, std::size_t self) {
    t.accumulate_block(aid, 0, start, t.grad_of(self));
  });
}

/// Embedding lookup: row i of the result is row rows[i] of a. Backward
/// scatter-adds in index order.
template <typename Scalar>
BasicVar<Scalar> gather_rows(BasicVar<Scalar> a, std::vector<Index> rows) {
  Dense<Scalar> value(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= a.rows()) {
      throw ConfigError("gather_rows: index " + std::to_string(rows[i]) + " outside " + shape_string(a.value()));
    }
    value.row(static_cast<Index>(i)) = a.value().row(rows[i]);
  }
  const auto aid = a.id();
  return a.tape().push(OpTag::kGatherRows, {aid}, std::move(value),
                       [aid, rows = std::move(rows)](BasicTape<Scalar>& t, std::size_t self) {
                         if (!t.node(aid).requires_grad) return;
                         const auto& g = t.grad_of(self);
                         auto& slot = t.grad_slot(aid);
                         for (std::size_t i = 0; i < rows.size(); ++i) slot.row(rows[i]) += g.row(static_cast<Index>(i));
                       });
}

template <typename Scalar>
BasicVar<Scalar> row_sum(BasicVar<Scalar> a) {
  Dense<Scalar> value = a.value().rowwise().sum();
  const auto aid = a.id();
  const Index width = a.cols();
  return a.tape().push(OpTag::kRowSum, {aid}, std::move(value), [aid, width](BasicTape<Scalar>& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    t.accumulate(aid, g.col(0).replicate(1, width));
  });
}

template <typename Scalar>
BasicVar<Scalar> row_mean(BasicVar<Scalar> a) {
  if (a.cols() == 0) throw ConfigError("row_mean of a matrix with no columns");
  Dense<Scalar> value = a.value().rowwise().sum() / Scalar(a.cols());
  const auto aid = a.id();
  const Index width = a.cols();
  return a.tape().push(OpTag::kRowMean, {aid}, std::move(value), [aid, width](BasicTape<Scalar>& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    t.accumulate(aid, (g.col(0) / Scalar(width)).replicate(1, width));
  });
}

template <typename Scalar>
BasicVar<Scalar> sum(BasicVar<Scalar> a) {
  Dense<Scalar> value(1, 1);
  value(0, 0) = a.value().sum();
  const auto aid = a.id();
  return a.tape().push(OpTag::kSum, {aid}, std::move(value), [aid](BasicTape<Scalar>& t, std::size_t self) {
    const Scalar g = t.grad_of(self)(0, 0);
    const auto& av = t.value_of(aid);
    t.accumulate(aid, Dense<Scalar>::Constant(av.rows(), av.cols(), g));
  });
}

template <typename Scalar>
BasicVar<Scalar> mean(BasicVar<Scalar> a) {
  if (a.value().size() == 0) throw ConfigError("mean of an empty matrix");
  const Scalar n = Scalar(a.value().size());
  Dense<Scalar> value(1, 1);
  value(0, 0) = a.value().sum() / n;
  const auto aid = a.id();
  return a.tape().push(OpTag::kMean, {aid}, std::move(value), [aid, n](BasicTape<Scalar>& t, std::size_t self) {
    const Scalar g = t.grad_of(self)(0, 0) / n;
    const auto& av = t.value_of(aid);
    t.accumulate(aid, Dense<Scalar>::Constant(av.rows(), av.cols(), g));
  });
}

/// Row-wise softmax with max subtraction.
template <typename Scalar>
BasicVar<Scalar> softmax_rows(BasicVar<Scalar> a) {
  Dense<Scalar> value = detail::softmax_rows_value(a.value());
  const auto aid = a.id();
  return a.tape().push(OpTag::kSoftmaxRows, {aid}, std::move(value), [aid](BasicTape<Scalar>& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    const auto& y = t.value_of(self);
    Dense<Scalar> dot = g.cwiseProduct(y).rowwise().sum();
    Dense<Scalar> ga = y.array() * (g.array().colwise() - dot.col(0).array());
    t.accumulate(aid, ga);
  });
}

/// Row-wise log-sum-exp (n x 1), stabilized by the row maximum.
template <typename Scalar>
BasicVar<Scalar> logsumexp_rows(BasicVar<Scalar> a) {
  if (a.cols() == 0) throw ConfigError("logsumexp_rows of a matrix with no columns");
  const auto& av = a.value();
  Dense<Scalar> value(av.rows(), 1);
  for (Index r = 0; r < av.rows(); ++r) {
    const Scalar m = av.row(r).maxCoeff();
    Scalar total = Scalar(0);
    for (Index c = 0; c < av.cols(); ++c) total += std::exp(av(r, c) - m);
    value(r, 0) = m + std::log(total);
  }
  const auto aid = a.id();
  return a.tape().push(OpTag::kLogSumExpRows, {aid}, std::move(value), [aid](BasicTape<Scalar>& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    Dense<Scalar> p = detail::softmax_rows_value(t.value_of(aid));
    t.accumulate(aid, (p.array().colwise() * g.col(0).array()).matrix());
  });
}

template <typename Scalar>
BasicVar<Scalar> sigmoid(BasicVar<Scalar> a) {
  Dense<Scalar> value = a.value().unaryExpr([](Scalar x) { return detail::stable_sigmoid(x); });
  const auto aid = a.id();
  return a.tape().push(OpTag::kSigmoid, {aid}, std::move(value), [aid](BasicTape<Scalar>& t, std::size_t self) {
    const auto& y = t.value_of(self);
    t.accumulate(aid, (t.grad_of(self).array() * y.array() * (Scalar(1) - y.array())).matrix());
  });
}

/// ln(1 + e^x), evaluated without overflow.
template <typename Scalar>
BasicVar<Scalar> softplus(BasicVar<Scalar> a) {
  Dense<Scalar> value = a.value().unaryExpr([](Scalar x) { return detail::stable_softplus(x); });
  const auto aid = a.id();
  return a.tape().push(OpTag::kSoftplus, {aid}, std::move(value), [aid](BasicTape<Scalar>& t, std::size_t self) {
    Dense<Scalar> s = t.value_of(aid).unaryExpr([](Scalar x) { return detail::stable_sigmoid(x); });
    t.accumulate(aid, t.grad_of(self).cwiseProduct(s));
  });
}

template <typename Scalar>
BasicVar<Scalar> log(BasicVar<Scalar> a) {
  Dense<Scalar> value = a.value().array().log().matrix();
  const auto aid = a.id();
  return a.tape().push(OpTag::kLog, {aid}, std::move(value), [aid](BasicTape<Scalar>& t, std::size_t self) {
    t.accumulate(aid, t.grad_of(self).cwiseQuotient(t.value_of(aid)));
  });
}

template <typename Scalar>
BasicVar<Scalar> exp(BasicVar<Scalar> a) {
  Dense<Scalar> value = a.value().array().exp().matrix();
  const auto aid = a.id();
  return a.tape().push(OpTag::kExp, {aid}, std::move(value), [aid](BasicTape<Scalar>& t, std::size_t self) {
    t.accumulate(aid, t.grad_of(self).cwiseProduct(t.value_of(self)));
  });
}

/// Rows scaled to unit Euclidean norm (norm floored at 1e-12).
template <typename Scalar>
BasicVar<Scalar> l2_normalize_rows(BasicVar<Scalar> a) {
  constexpr Scalar kFloor = Scalar(1e-12);
  Dense<Scalar> norms = a.value().rowwise().norm().cwiseMax(kFloor);
  Dense<Scalar> value = a.value().array().colwise() / norms.col(0).array();
  const auto aid = a.id();
  return a.tape().push(OpTag::kL2NormalizeRows, {aid}, std::move(value),
                       [aid, norms = std::move(norms)](BasicTape<Scalar>& t, std::size_t self) {
                         const auto& g = t.grad_of(self);
                         const auto& y = t.value_of(self);
                         Dense<Scalar> dot = g.cwiseProduct(y).rowwise().sum();
                         Dense<Scalar> ga = (g - (y.array().colwise() * dot.col(0).array()).matrix()).array().colwise() /
                                            norms.col(0).array();
                         t.accumulate(aid, ga);
                       });
}

/// Sum of squares of all entries.
template <typename Scalar>
BasicVar<Scalar> squared_norm(BasicVar<Scalar> a) {
  return sum(hadamard(a, a));
}

}  // namespace mbrec
