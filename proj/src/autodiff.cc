// Copyright 2026 Desep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "desep/autodiff.h"

#include <cmath>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "desep/common.h"
#include "desep/fft.h"

namespace desep::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMat>;
using ConstRowMap = Eigen::Map<const RowMat>;

NodePtr make_node(const Shape& shape, std::vector<NodePtr> inputs) {
  auto n = std::make_shared<Node>();
  n->shape = shape;
  n->value.resize(shape_size(shape));
  n->inputs = std::move(inputs);
  for (const auto& in : n->inputs)
    if (in->requires_grad) n->requires_grad = true;
  return n;
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a) +
                              " vs " + shape_str(b));
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.shape().size() != 2)
    throw std::invalid_argument(std::string(op) + ": expected rank 2, got " +
                                shape_str(t.shape()));
}

enum class BinKind { kSame, kScalarB, kScalarA };

BinKind bin_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return BinKind::kSame;
  if (b.size() == 1) return BinKind::kScalarB;
  if (a.size() == 1) return BinKind::kScalarA;
  shape_error(op, a.shape(), b.shape());
}

Eigen::ArrayXd sum_to_scalar(const Eigen::ArrayXd& g) {
  Eigen::ArrayXd out(1);
  out(0) = g.sum();
  return out;
}

Tensor elementwise_unary(
    const Tensor& a, std::function<Eigen::ArrayXd(const Eigen::ArrayXd&)> fwd,
    std::function<Eigen::ArrayXd(const Eigen::ArrayXd& g, const Eigen::ArrayXd& x,
                                 const Eigen::ArrayXd& y)>
        bwd) {
  NodePtr n = make_node(a.shape(), {a.node()});
  n->value = fwd(a.node()->value);
  if (n->requires_grad) {
    NodePtr an = a.node();
    // Raw pointer avoids an ownership cycle; the node outlives its own
    // backprop call by construction.
    Node* self = n.get();
    n->backprop = [an, self, bwd](const Eigen::ArrayXd& g, GradStore* store) {
      store->add(an, bwd(g, an->value, self->value));
    };
  }
  return Tensor(n);
}

}  // namespace

int64_t shape_size(const Shape& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("shape: negative dimension");
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ")";
  return os.str();
}

Tensor Tensor::leaf(const Shape& shape, const Eigen::ArrayXd& values,
                    bool requires_grad) {
  if (values.size() != shape_size(shape))
    throw std::invalid_argument("tensor: " + std::to_string(values.size()) +
                                " values for shape " + shape_str(shape));
  auto n = std::make_shared<Node>();
  n->shape = shape;
  n->value = values;
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  return leaf(shape, Eigen::ArrayXd::Zero(shape_size(shape)), requires_grad);
}

Tensor Tensor::full(const Shape& shape, double value, bool requires_grad) {
  return leaf(shape, Eigen::ArrayXd::Constant(shape_size(shape), value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return full({1}, value, requires_grad);
}

Tensor Tensor::from_matrix(const Eigen::MatrixXd& m, bool requires_grad) {
  Eigen::ArrayXd flat(m.size());
  RowMap(flat.data(), m.rows(), m.cols()) = m;
  return leaf({static_cast<int>(m.rows()), static_cast<int>(m.cols())}, flat,
              requires_grad);
}

double Tensor::item() const {
  if (size() != 1)
    throw std::invalid_argument("tensor: item() on non-scalar " + shape_str(shape()));
  return node_->value(0);
}

Eigen::MatrixXd Tensor::to_matrix() const {
  const Shape& s = shape();
  if (s.size() == 1) {
    Eigen::MatrixXd m(s[0], 1);
    for (int i = 0; i < s[0]; ++i) m(i, 0) = node_->value(i);
    return m;
  }
  if (s.size() == 2) return ConstRowMap(node_->value.data(), s[0], s[1]);
  throw std::invalid_argument("tensor: to_matrix on rank > 2 " + shape_str(s));
}

void GradStore::add(Node* n, const Eigen::ArrayXd& g) {
  if (!n->requires_grad) return;
  if (g.size() != n->size())
    throw std::logic_error("gradstore: gradient size " + std::to_string(g.size()) +
                           " for node of size " + std::to_string(n->size()));
  auto it = grads_.find(n);
  if (it == grads_.end())
    grads_.emplace(n, g);
  else
    it->second += g;
}

void GradStore::add(const NodePtr& n, const Eigen::ArrayXd& g) { add(n.get(), g); }

const Eigen::ArrayXd* GradStore::find(const Node* n) const {
  auto it = grads_.find(n);
  return it == grads_.end() ? nullptr : &it->second;
}

Eigen::ArrayXd& GradStore::slot(Node* n, int64_t size) {
  auto it = grads_.find(n);
  if (it == grads_.end())
    it = grads_.emplace(n, Eigen::ArrayXd::Zero(size)).first;
  return it->second;
}

GradStore backward(const Tensor& loss) {
  if (!loss.defined()) throw std::invalid_argument("backward: undefined loss");
  Node* root = loss.node().get();
  if (loss.size() != 1)
    throw std::invalid_argument("backward: loss must be a scalar, got " +
                                shape_str(loss.shape()));
  if (root->backward_ran)
    throw std::logic_error(
        "backward: gradients already computed for this loss; rebuild the graph");
  root->backward_ran = true;

  GradStore store;
  if (!root->requires_grad) return store;

  // Iterative post-order traversal; recursion would overflow on long
  // recurrent chains. Reversed post-order is a topological order, so each
  // node sees its full gradient before its own backprop runs.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto [n, idx] = stack.back();
    if (idx < n->inputs.size()) {
      ++stack.back().second;
      Node* child = n->inputs[idx].get();
      if (child->requires_grad && !seen.count(child)) {
        seen.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  store.slot(root, 1) = Eigen::ArrayXd::Ones(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    const Eigen::ArrayXd* g = store.find(n);
    if (g && n->backprop) n->backprop(*g, &store);
  }
  return store;
}

// ----- elementwise binary -----

Tensor add(const Tensor& a, const Tensor& b) {
  const BinKind kind = bin_kind(a, b, "add");
  const Shape& out_shape = kind == BinKind::kScalarA ? b.shape() : a.shape();
  NodePtr n = make_node(out_shape, {a.node(), b.node()});
  switch (kind) {
    case BinKind::kSame: n->value = a.value() + b.value(); break;
    case BinKind::kScalarB: n->value = a.value() + b.value()(0); break;
    case BinKind::kScalarA: n->value = a.value()(0) + b.value(); break;
  }
  if (n->requires_grad) {
    NodePtr an = a.node(), bn = b.node();
    n->backprop = [an, bn, kind](const Eigen::ArrayXd& g, GradStore* store) {
      store->add(an, kind == BinKind::kScalarA ? sum_to_scalar(g) : g);
      store->add(bn, kind == BinKind::kScalarB ? sum_to_scalar(g) : g);
    };
  }
  return Tensor(n);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const BinKind kind = bin_kind(a, b, "sub");
  const Shape& out_shape = kind == BinKind::kScalarA ? b.shape() : a.shape();
  NodePtr n = make_node(out_shape, {a.node(), b.node()});
  switch (kind) {
    case BinKind::kSame: n->value = a.value() - b.value(); break;
    case BinKind::kScalarB: n->value = a.value() - b.value()(0); break;
    case BinKind::kScalarA: n->value = a.value()(0) - b.value(); break;
  }
  if (n->requires_grad) {
    NodePtr an = a.node(), bn = b.node();
    n->backprop = [an, bn, kind](const Eigen::ArrayXd& g, GradStore* store) {
      store->add(an, kind == BinKind::kScalarA ? sum_to_scalar(g) : g);
      Eigen::ArrayXd gb = -g;
      store->add(bn, kind == BinKind::kScalarB ? sum_to_scalar(gb) : gb);
    };
  }
  return Tensor(n);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const BinKind kind = bin_kind(a, b, "mul");
  const Shape& out_shape = kind == BinKind::kScalarA ? b.shape() : a.shape();
  NodePtr n = make_node(out_shape, {a.node(), b.node()});
  switch (kind) {
    case BinKind::kSame: n->value = a.value() * b.value(); break;
    case BinKind::kScalarB: n->value = a.value() * b.value()(0); break;
    case BinKind::kScalarA: n->value = a.value()(0) * b.value(); break;
  }
  if (n->requires_grad) {
    NodePtr an = a.node(), bn = b.node();
    n->backprop = [an, bn, kind](const Eigen::ArrayXd& g, GradStore* store) {
      switch (kind) {
        case BinKind::kSame:
          store->add(an, Eigen::ArrayXd(g * bn->value));
          store->add(bn, Eigen::ArrayXd(g * an->value));
          break;
        case BinKind::kScalarB:
          store->add(an, Eigen::ArrayXd(g * bn->value(0)));
          store->add(bn, sum_to_scalar(g * an->value));
          break;
        case BinKind::kScalarA:
          store->add(an, sum_to_scalar(g * bn->value));
          store->add(bn, Eigen::ArrayXd(g * an->value(0)));
          break;
      }
    };
  }
  return Tensor(n);
}

Tensor div(const Tensor& a, const Tensor& b) {
  const BinKind kind = bin_kind(a, b, "div");
  const Shape& out_shape = kind == BinKind::kScalarA ? b.shape() : a.shape();
  NodePtr n = make_node(out_shape, {a.node(), b.node()});
  switch (kind) {
    case BinKind::kSame: n->value = a.value() / b.value(); break;
    case BinKind::kScalarB: n->value = a.value() / b.value()(0); break;
    case BinKind::kScalarA: n->value = a.value()(0) / b.value(); break;
  }
  if (n->requires_grad) {
    NodePtr an = a.node(), bn = b.node();
    n->backprop = [an, bn, kind](const Eigen::ArrayXd& g, GradStore* store) {
      switch (kind) {
        case BinKind::kSame:
          store->add(an, Eigen::ArrayXd(g / bn->value));
          store->add(bn, Eigen::ArrayXd(-g * an->value / (bn->value * bn->value)));
          break;
        case BinKind::kScalarB: {
          const double bv = bn->value(0);
          store->add(an, Eigen::ArrayXd(g / bv));
          store->add(bn, sum_to_scalar(-g * an->value / (bv * bv)));
          break;
        }
        case BinKind::kScalarA:
          store->add(an, sum_to_scalar(g / bn->value));
          store->add(bn, Eigen::ArrayXd(-g * an->value(0) / (bn->value * bn->value)));
          break;
      }
    };
  }
  return Tensor(n);
}

Tensor neg(const Tensor& a) {
  return elementwise_unary(
      a, [](const Eigen::ArrayXd& x) { return Eigen::ArrayXd(-x); },
      [](const Eigen::ArrayXd& g, const Eigen::ArrayXd&, const Eigen::ArrayXd&) {
        return Eigen::ArrayXd(-g);
      });
}

Tensor add_scalar(const Tensor& a, double c) {
  return elementwise_unary(
      a, [c](const Eigen::ArrayXd& x) { return Eigen::ArrayXd(x + c); },
      [](const Eigen::ArrayXd& g, const Eigen::ArrayXd&, const Eigen::ArrayXd&) {
        return g;
      });
}

Tensor mul_scalar(const Tensor& a, double c) {
  return elementwise_unary(
      a, [c](const Eigen::ArrayXd& x) { return Eigen::ArrayXd(x * c); },
      [c](const Eigen::ArrayXd& g, const Eigen::ArrayXd&, const Eigen::ArrayXd&) {
        return Eigen::ArrayXd(g * c);
      });
}

// ----- row/column vector broadcasts over (rows, cols) matrices -----

namespace {

// axis 1: vector spans columns (length cols); axis 0: spans rows.
Tensor broadcast_binary(const Tensor& m, const Tensor& v, int vec_axis, bool product,
                        const char* op) {
  require_rank2(m, op);
  const int rows = m.shape()[0], cols = m.shape()[1];
  const int expect = vec_axis == 1 ? cols : rows;
  if (v.size() != expect) shape_error(op, m.shape(), v.shape());

  NodePtr n = make_node(m.shape(), {m.node(), v.node()});
  const auto& mv = m.value();
  const auto& vv = v.value();
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const double b = vv(vec_axis == 1 ? c : r);
      n->value(static_cast<int64_t>(r) * cols + c) =
          product ? mv(static_cast<int64_t>(r) * cols + c) * b
                  : mv(static_cast<int64_t>(r) * cols + c) + b;
    }
  if (n->requires_grad) {
    NodePtr mn = m.node(), vn = v.node();
    n->backprop = [mn, vn, rows, cols, vec_axis, product](const Eigen::ArrayXd& g,
                                                          GradStore* store) {
      Eigen::ArrayXd gm(g.size());
      Eigen::ArrayXd gv = Eigen::ArrayXd::Zero(vn->size());
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
          const int64_t i = static_cast<int64_t>(r) * cols + c;
          const int vi = vec_axis == 1 ? c : r;
          if (product) {
            gm(i) = g(i) * vn->value(vi);
            gv(vi) += g(i) * mn->value(i);
          } else {
            gm(i) = g(i);
            gv(vi) += g(i);
          }
        }
      store->add(mn, gm);
      store->add(vn, gv);
    };
  }
  return Tensor(n);
}

}  // namespace

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
  return broadcast_binary(m, v, 1, false, "add_rowvec");
}
Tensor add_colvec(const Tensor& m, const Tensor& v) {
  return broadcast_binary(m, v, 0, false, "add_colvec");
}
Tensor mul_rowvec(const Tensor& m, const Tensor& v) {
  return broadcast_binary(m, v, 1, true, "mul_rowvec");
}
Tensor mul_colvec(const Tensor& m, const Tensor& v) {
  return broadcast_binary(m, v, 0, true, "mul_colvec");
}

// ----- linear algebra and movement -----

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const int rows = a.shape()[0], inner = a.shape()[1], cols = b.shape()[1];
  if (b.shape()[0] != inner) shape_error("matmul", a.shape(), b.shape());

  NodePtr n = make_node({rows, cols}, {a.node(), b.node()});
  ConstRowMap am(a.value().data(), rows, inner);
  ConstRowMap bm(b.value().data(), inner, cols);
  RowMap(n->value.data(), rows, cols) = am * bm;
  if (n->requires_grad) {
    NodePtr an = a.node(), bn = b.node();
    n->backprop = [an, bn, rows, inner, cols](const Eigen::ArrayXd& g, GradStore* store) {
      ConstRowMap gm(g.data(), rows, cols);
      ConstRowMap am2(an->value.data(), rows, inner);
      ConstRowMap bm2(bn->value.data(), inner, cols);
      if (an->requires_grad) {
        Eigen::ArrayXd ga(an->size());
        RowMap(ga.data(), rows, inner) = gm * bm2.transpose();
        store->add(an, ga);
      }
      if (bn->requires_grad) {
        Eigen::ArrayXd gb(bn->size());
        RowMap(gb.data(), inner, cols) = am2.transpose() * gm;
        store->add(bn, gb);
      }
    };
  }
  return Tensor(n);
}

Tensor transpose2d(const Tensor& a) {
  require_rank2(a, "transpose");
  const int rows = a.shape()[0], cols = a.shape()[1];
  NodePtr n = make_node({cols, rows}, {a.node()});
  ConstRowMap am(a.value().data(), rows, cols);
  RowMap(n->value.data(), cols, rows) = am.transpose();
  if (n->requires_grad) {
    NodePtr an = a.node();
    n->backprop = [an, rows, cols](const Eigen::ArrayXd& g, GradStore* store) {
      ConstRowMap gm(g.data(), cols, rows);
      Eigen::ArrayXd ga(an->size());
      RowMap(ga.data(), rows, cols) = gm.transpose();
      store->add(an, ga);
    };
  }
  return Tensor(n);
}

Tensor reshape(const Tensor& a, const Shape& shape) {
  if (shape_size(shape) != a.size())
    throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) +
                                " as " + shape_str(shape));
  NodePtr n = make_node(shape, {a.node()});
  n->value = a.value();
  if (n->requires_grad) {
    NodePtr an = a.node();
    n->backprop = [an](const Eigen::ArrayXd& g, GradStore* store) { store->add(an, g); };
  }
  return Tensor(n);
}

namespace {

// Splits a shape at the given axis into (outer, axis_dim, inner) extents
// so contiguous row-major blocks can be copied per outer index.
void axis_extents(const Shape& shape, int axis, int64_t* outer, int64_t* inner) {
  *outer = 1;
  *inner = 1;
  for (int i = 0; i < axis; ++i) *outer *= shape[i];
  for (int i = axis + 1; i < static_cast<int>(shape.size()); ++i) *inner *= shape[i];
}

}  // namespace

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: empty part list");
  const Shape& s0 = parts[0].shape();
  const int rank = static_cast<int>(s0.size());
  if (axis < 0 || axis >= rank)
    throw std::invalid_argument("concat: axis " + std::to_string(axis) +
                                " out of range for rank " + std::to_string(rank));
  int total = 0;
  std::vector<NodePtr> inputs;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (static_cast<int>(s.size()) != rank) shape_error("concat", s0, s);
    for (int i = 0; i < rank; ++i)
      if (i != axis && s[i] != s0[i]) shape_error("concat", s0, s);
    total += s[axis];
    inputs.push_back(p.node());
  }
  Shape out_shape = s0;
  out_shape[axis] = total;

  int64_t outer, inner;
  axis_extents(s0, axis, &outer, &inner);
  NodePtr n = make_node(out_shape, inputs);
  int64_t offset = 0;
  for (const auto& p : parts) {
    const int64_t d = p.shape()[axis];
    for (int64_t o = 0; o < outer; ++o)
      n->value.segment((o * total + offset) * inner, d * inner) =
          p.node()->value.segment(o * d * inner, d * inner);
    offset += d;
  }
  if (n->requires_grad) {
    std::vector<int> axis_dims;
    for (const auto& p : parts) axis_dims.push_back(p.shape()[axis]);
    n->backprop = [inputs, axis_dims, outer, inner, total](const Eigen::ArrayXd& g,
                                                           GradStore* store) {
      int64_t off = 0;
      for (size_t k = 0; k < inputs.size(); ++k) {
        const int64_t d = axis_dims[k];
        if (inputs[k]->requires_grad) {
          Eigen::ArrayXd gp(d * inner * outer);
          for (int64_t o = 0; o < outer; ++o)
            gp.segment(o * d * inner, d * inner) =
                g.segment((o * total + off) * inner, d * inner);
          store->add(inputs[k], gp);
        }
        off += d;
      }
    };
  }
  return Tensor(n);
}

Tensor slice(const Tensor& a, int axis, int start, int length) {
  const Shape& s = a.shape();
  const int rank = static_cast<int>(s.size());
  if (axis < 0 || axis >= rank)
    throw std::invalid_argument("slice: axis " + std::to_string(axis) +
                                " out of range for rank " + std::to_string(rank));
  if (start < 0 || length < 1 || start + length > s[axis])
    throw std::invalid_argument("slice: range [" + std::to_string(start) + ", " +
                                std::to_string(start + length) + ") outside axis of size " +
                                std::to_string(s[axis]));
  Shape out_shape = s;
  out_shape[axis] = length;
  int64_t outer, inner;
  axis_extents(s, axis, &outer, &inner);
  const int64_t d_in = s[axis];

  NodePtr n = make_node(out_shape, {a.node()});
  for (int64_t o = 0; o < outer; ++o)
    n->value.segment(o * length * inner, length * inner) =
        a.value().segment((o * d_in + start) * inner, length * inner);
  if (n->requires_grad) {
    NodePtr an = a.node();
    n->backprop = [an, outer, inner, d_in, start, length](const Eigen::ArrayXd& g,
                                                          GradStore* store) {
      Eigen::ArrayXd ga = Eigen::ArrayXd::Zero(an->size());
      for (int64_t o = 0; o < outer; ++o)
        ga.segment((o * d_in + start) * inner, length * inner) =
            g.segment(o * length * inner, length * inner);
      store->add(an, ga);
    };
  }
  return Tensor(n);
}

// ----- reductions -----

Tensor sum_all(const Tensor& a) {
  NodePtr n = make_node({1}, {a.node()});
  n->value(0) = a.value().sum();
  if (n->requires_grad) {
    NodePtr an = a.node();
    n->backprop = [an](const Eigen::ArrayXd& g, GradStore* store) {
      store->add(an, Eigen::ArrayXd(Eigen::ArrayXd::Constant(an->size(), g(0))));
    };
  }
  return Tensor(n);
}

Tensor mean_all(const Tensor& a) {
  NodePtr n = make_node({1}, {a.node()});
  const double inv = 1.0 / static_cast<double>(a.size());
  n->value(0) = a.value().sum() * inv;
  if (n->requires_grad) {
    NodePtr an = a.node();
    n->backprop = [an, inv](const Eigen::ArrayXd& g, GradStore* store) {
      store->add(an, Eigen::ArrayXd(Eigen::ArrayXd::Constant(an->size(), g(0) * inv)));
    };
  }
  return Tensor(n);
}

namespace {

Tensor axis_reduce(const Tensor& a, int axis, bool mean) {
  require_rank2(a, "sum_axis");
  if (axis != 0 && axis != 1) throw std::invalid_argument("sum_axis: axis must be 0 or 1");
  const int rows = a.shape()[0], cols = a.shape()[1];
  const Shape out_shape = axis == 0 ? Shape{1, cols} : Shape{rows, 1};
  const double inv = mean ? 1.0 / (axis == 0 ? rows : cols) : 1.0;

  NodePtr n = make_node(out_shape, {a.node()});
  n->value.setZero();
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      n->value(axis == 0 ? c : r) += a.value()(static_cast<int64_t>(r) * cols + c);
  n->value *= inv;
  if (n->requires_grad) {
    NodePtr an = a.node();
    n->backprop = [an, rows, cols, axis, inv](const Eigen::ArrayXd& g, GradStore* store) {
      Eigen::ArrayXd ga(an->size());
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
          ga(static_cast<int64_t>(r) * cols + c) = g(axis == 0 ? c : r) * inv;
      store->add(an, ga);
    };
  }
  return Tensor(n);
}

}  // namespace

Tensor sum_axis(const Tensor& a, int axis) { return axis_reduce(a, axis, false); }
Tensor mean_axis(const Tensor& a, int axis) { return axis_reduce(a, axis, true); }

// ----- nonlinearities -----

Tensor tanh_t(const Tensor& a) {
  return elementwise_unary(
      a, [](const Eigen::ArrayXd& x) { return Eigen::ArrayXd(x.tanh()); },
      [](const Eigen::ArrayXd& g, const Eigen::ArrayXd&, const Eigen::ArrayXd& y) {
        return Eigen::ArrayXd(g * (1.0 - y * y));
      });
}

Tensor sigmoid(const Tensor& a) {
  return elementwise_unary(
      a,
      [](const Eigen::ArrayXd& x) {
        Eigen::ArrayXd y(x.size());
        for (Eigen::Index i = 0; i < x.size(); ++i) {
          const double v = x(i);
          y(i) = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                          : std::exp(v) / (1.0 + std::exp(v));
        }
        return y;
      },
      [](const Eigen::ArrayXd& g, const Eigen::ArrayXd&, const Eigen::ArrayXd& y) {
        return Eigen::ArrayXd(g * y * (1.0 - y));
      });
}

Tensor exp_t(const Tensor& a) {
  return elementwise_unary(
      a, [](const Eigen::ArrayXd& x) { return Eigen::ArrayXd(x.exp()); },
      [](const Eigen::ArrayXd& g, const Eigen::ArrayXd&, const Eigen::ArrayXd& y) {
        return Eigen::ArrayXd(g * y);
      });
}

Tensor log_t(const Tensor& a) {
  return elementwise_unary(
      a, [](const Eigen::ArrayXd& x) { return Eigen::ArrayXd(x.log()); },
      [](const Eigen::ArrayXd& g, const Eigen::ArrayXd& x, const Eigen::ArrayXd&) {
        return Eigen::ArrayXd(g / x);
      });
}

Tensor sqrt_t(const Tensor& a) {
  return elementwise_unary(
      a, [](const Eigen::ArrayXd& x) { return Eigen::ArrayXd(x.sqrt()); },
      [](const Eigen::ArrayXd& g, const Eigen::ArrayXd&, const Eigen::ArrayXd& y) {
        return Eigen::ArrayXd(g * 0.5 / y);
      });
}

Tensor cos_t(const Tensor& a) {
  return elementwise_unary(
      a, [](const Eigen::ArrayXd& x) { return Eigen::ArrayXd(x.cos()); },
      [](const Eigen::ArrayXd& g, const Eigen::ArrayXd& x, const Eigen::ArrayXd&) {
        return Eigen::ArrayXd(-g * x.sin());
      });
}

Tensor sin_t(const Tensor& a) {
  return elementwise_unary(
      a, [](const Eigen::ArrayXd& x) { return Eigen::ArrayXd(x.sin()); },
      [](const Eigen::ArrayXd& g, const Eigen::ArrayXd& x, const Eigen::ArrayXd&) {
        return Eigen::ArrayXd(g * x.cos());
      });
}

Tensor atan2_t(const Tensor& y, const Tensor& x) {
  if (y.shape() != x.shape()) shape_error("atan2", y.shape(), x.shape());
  NodePtr n = make_node(y.shape(), {y.node(), x.node()});
  for (Eigen::Index i = 0; i < n->size(); ++i)
    n->value(i) = std::atan2(y.value()(i), x.value()(i));
  if (n->requires_grad) {
    NodePtr yn = y.node(), xn = x.node();
    n->backprop = [yn, xn](const Eigen::ArrayXd& g, GradStore* store) {
      // Clamp the squared radius so a zero-magnitude point cannot poison
      // the whole sweep with NaNs; the true derivative is undefined there.
      Eigen::ArrayXd denom =
          (yn->value * yn->value + xn->value * xn->value).max(1e-12);
      store->add(yn, Eigen::ArrayXd(g * xn->value / denom));
      store->add(xn, Eigen::ArrayXd(-g * yn->value / denom));
    };
  }
  return Tensor(n);
}

Tensor softplus(const Tensor& a) {
  return elementwise_unary(
      a,
      [](const Eigen::ArrayXd& x) {
        Eigen::ArrayXd y(x.size());
        for (Eigen::Index i = 0; i < x.size(); ++i)
          y(i) = x(i) > 30.0 ? x(i) : std::log1p(std::exp(x(i)));
        return y;
      },
      [](const Eigen::ArrayXd& g, const Eigen::ArrayXd& x, const Eigen::ArrayXd&) {
        Eigen::ArrayXd s(x.size());
        for (Eigen::Index i = 0; i < x.size(); ++i) {
          const double v = x(i);
          s(i) = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                          : std::exp(v) / (1.0 + std::exp(v));
        }
        return Eigen::ArrayXd(g * s);
      });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  return elementwise_unary(
      a,
      [slope](const Eigen::ArrayXd& x) {
        return Eigen::ArrayXd((x > 0.0).select(x, x * slope));
      },
      [slope](const Eigen::ArrayXd& g, const Eigen::ArrayXd& x, const Eigen::ArrayXd&) {
        return Eigen::ArrayXd((x > 0.0).select(g, g * slope));
      });
}

Tensor clamp_min(const Tensor& a, double floor) {
  return elementwise_unary(
      a, [floor](const Eigen::ArrayXd& x) { return Eigen::ArrayXd(x.max(floor)); },
      [floor](const Eigen::ArrayXd& g, const Eigen::ArrayXd& x, const Eigen::ArrayXd&) {
        return Eigen::ArrayXd((x > floor).select(g, 0.0));
      });
}

Tensor softmax(const Tensor& a, int axis) {
  const int rank = static_cast<int>(a.shape().size());
  if (rank != 1 && rank != 2)
    throw std::invalid_argument("softmax: rank must be 1 or 2, got " +
                                shape_str(a.shape()));
  if (rank == 1 && axis != 0)
    throw std::invalid_argument("softmax: axis must be 0 for rank 1");
  const int rows = rank == 1 ? 1 : a.shape()[0];
  const int cols = rank == 1 ? a.shape()[0] : a.shape()[1];
  // Normalize along `axis`; groups run across the other axis.
  const bool along_cols = rank == 1 || axis == 1;

  NodePtr n = make_node(a.shape(), {a.node()});
  const int groups = along_cols ? rows : cols;
  const int span = along_cols ? cols : rows;
  auto index = [along_cols, cols](int group, int k) {
    return along_cols ? static_cast<int64_t>(group) * cols + k
                      : static_cast<int64_t>(k) * cols + group;
  };
  for (int gidx = 0; gidx < groups; ++gidx) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < span; ++k) mx = std::max(mx, a.value()(index(gidx, k)));
    double sum = 0.0;
    for (int k = 0; k < span; ++k) {
      const double e = std::exp(a.value()(index(gidx, k)) - mx);
      n->value(index(gidx, k)) = e;
      sum += e;
    }
    for (int k = 0; k < span; ++k) n->value(index(gidx, k)) /= sum;
  }
  if (n->requires_grad) {
    NodePtr an = a.node();
    Node* self = n.get();
    n->backprop = [an, self, groups, span, index](const Eigen::ArrayXd& g,
                                                  GradStore* store) {
      Eigen::ArrayXd ga(an->size());
      for (int gidx = 0; gidx < groups; ++gidx) {
        double dot = 0.0;
        for (int k = 0; k < span; ++k)
          dot += g(index(gidx, k)) * self->value(index(gidx, k));
        for (int k = 0; k < span; ++k) {
          const int64_t i = index(gidx, k);
          ga(i) = self->value(i) * (g(i) - dot);
        }
      }
      store->add(an, ga);
    };
  }
  return Tensor(n);
}

// ----- composites -----

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  Tensor y = matmul(weight, x);
  if (!bias.defined()) return y;
  return add_colvec(y, bias);
}

LstmState lstm_cell(const Tensor& x, const LstmState& state, const Tensor& w_ih,
                    const Tensor& w_hh, const Tensor& b_ih, const Tensor& b_hh) {
  const int hidden = state.h.shape()[0];
  Tensor gates = add(add(matmul(w_ih, x), b_ih), add(matmul(w_hh, state.h), b_hh));
  Tensor i = sigmoid(slice(gates, 0, 0, hidden));
  Tensor f = sigmoid(slice(gates, 0, hidden, hidden));
  Tensor g = tanh_t(slice(gates, 0, 2 * hidden, hidden));
  Tensor o = sigmoid(slice(gates, 0, 3 * hidden, hidden));
  LstmState next;
  next.c = add(mul(f, state.c), mul(i, g));
  next.h = mul(o, tanh_t(next.c));
  return next;
}

// ----- convolution -----

namespace {

struct ConvDims {
  int in_ch, in_h, in_w;
  int out_ch, kh, kw;
  int sh, sw, ph, pw;
  int out_h, out_w;
};

ConvDims conv_dims(const Shape& x, const Shape& k, int sh, int sw, int ph, int pw) {
  if (x.size() != 3 || k.size() != 4)
    throw std::invalid_argument("conv2d: want input (ch, h, w) and kernel "
                                "(out, in, kh, kw), got " +
                                shape_str(x) + " and " + shape_str(k));
  if (k[1] != x[0]) shape_error("conv2d", x, k);
  if (sh < 1 || sw < 1 || ph < 0 || pw < 0)
    throw std::invalid_argument("conv2d: bad stride or padding");
  ConvDims d;
  d.in_ch = x[0];
  d.in_h = x[1];
  d.in_w = x[2];
  d.out_ch = k[0];
  d.kh = k[2];
  d.kw = k[3];
  d.sh = sh;
  d.sw = sw;
  d.ph = ph;
  d.pw = pw;
  d.out_h = (d.in_h + 2 * ph - d.kh) / sh + 1;
  d.out_w = (d.in_w + 2 * pw - d.kw) / sw + 1;
  if (d.in_h + 2 * ph < d.kh || d.in_w + 2 * pw < d.kw)
    throw std::invalid_argument("conv2d: kernel larger than padded input, input " +
                                shape_str(x) + " kernel " + shape_str(k));
  return d;
}

// Patch matrix (in_ch * kh * kw, out_h * out_w); zeros where the window
// hangs over the padding.
Eigen::MatrixXd im2col(const Eigen::ArrayXd& x, const ConvDims& d) {
  Eigen::MatrixXd cols = Eigen::MatrixXd::Zero(
      static_cast<int64_t>(d.in_ch) * d.kh * d.kw,
      static_cast<int64_t>(d.out_h) * d.out_w);
  for (int c = 0; c < d.in_ch; ++c)
    for (int ki = 0; ki < d.kh; ++ki)
      for (int kj = 0; kj < d.kw; ++kj) {
        const int64_t row = (static_cast<int64_t>(c) * d.kh + ki) * d.kw + kj;
        for (int oh = 0; oh < d.out_h; ++oh) {
          const int h = oh * d.sh - d.ph + ki;
          if (h < 0 || h >= d.in_h) continue;
          for (int ow = 0; ow < d.out_w; ++ow) {
            const int w = ow * d.sw - d.pw + kj;
            if (w < 0 || w >= d.in_w) continue;
            cols(row, static_cast<int64_t>(oh) * d.out_w + ow) =
                x((static_cast<int64_t>(c) * d.in_h + h) * d.in_w + w);
          }
        }
      }
  return cols;
}

void col2im_add(const Eigen::MatrixXd& cols, const ConvDims& d, Eigen::ArrayXd* x) {
  for (int c = 0; c < d.in_ch; ++c)
    for (int ki = 0; ki < d.kh; ++ki)
      for (int kj = 0; kj < d.kw; ++kj) {
        const int64_t row = (static_cast<int64_t>(c) * d.kh + ki) * d.kw + kj;
        for (int oh = 0; oh < d.out_h; ++oh) {
          const int h = oh * d.sh - d.ph + ki;
          if (h < 0 || h >= d.in_h) continue;
          for (int ow = 0; ow < d.out_w; ++ow) {
            const int w = ow * d.sw - d.pw + kj;
            if (w < 0 || w >= d.in_w) continue;
            (*x)((static_cast<int64_t>(c) * d.in_h + h) * d.in_w + w) +=
                cols(row, static_cast<int64_t>(oh) * d.out_w + ow);
          }
        }
      }
}

Eigen::ArrayXd conv_forward(const Eigen::ArrayXd& x, const Eigen::ArrayXd& kernel,
                            const ConvDims& d) {
  const Eigen::MatrixXd cols = im2col(x, d);
  ConstRowMap km(kernel.data(), d.out_ch, static_cast<int64_t>(d.in_ch) * d.kh * d.kw);
  Eigen::ArrayXd out(static_cast<int64_t>(d.out_ch) * d.out_h * d.out_w);
  RowMap(out.data(), d.out_ch, static_cast<int64_t>(d.out_h) * d.out_w) = km * cols;
  return out;
}

Eigen::ArrayXd conv_grad_input(const Eigen::ArrayXd& gout, const Eigen::ArrayXd& kernel,
                               const ConvDims& d) {
  ConstRowMap km(kernel.data(), d.out_ch, static_cast<int64_t>(d.in_ch) * d.kh * d.kw);
  ConstRowMap gm(gout.data(), d.out_ch, static_cast<int64_t>(d.out_h) * d.out_w);
  const Eigen::MatrixXd cols = km.transpose() * gm;
  Eigen::ArrayXd gx = Eigen::ArrayXd::Zero(static_cast<int64_t>(d.in_ch) * d.in_h * d.in_w);
  col2im_add(cols, d, &gx);
  return gx;
}

Eigen::ArrayXd conv_grad_kernel(const Eigen::ArrayXd& gout, const Eigen::ArrayXd& x,
                                const ConvDims& d) {
  const Eigen::MatrixXd cols = im2col(x, d);
  ConstRowMap gm(gout.data(), d.out_ch, static_cast<int64_t>(d.out_h) * d.out_w);
  Eigen::ArrayXd gk(static_cast<int64_t>(d.out_ch) * d.in_ch * d.kh * d.kw);
  RowMap(gk.data(), d.out_ch, static_cast<int64_t>(d.in_ch) * d.kh * d.kw) =
      gm * cols.transpose();
  return gk;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& kernel, int stride_h, int stride_w,
              int pad_h, int pad_w) {
  const ConvDims d = conv_dims(x.shape(), kernel.shape(), stride_h, stride_w, pad_h, pad_w);
  NodePtr n = make_node({d.out_ch, d.out_h, d.out_w}, {x.node(), kernel.node()});
  n->value = conv_forward(x.value(), kernel.value(), d);
  if (n->requires_grad) {
    NodePtr xn = x.node(), kn = kernel.node();
    n->backprop = [xn, kn, d](const Eigen::ArrayXd& g, GradStore* store) {
      if (xn->requires_grad) store->add(xn, conv_grad_input(g, kn->value, d));
      if (kn->requires_grad) store->add(kn, conv_grad_kernel(g, xn->value, d));
    };
  }
  return Tensor(n);
}

Tensor deconv2d(const Tensor& x, const Tensor& kernel, int stride_h, int stride_w,
                int pad_h, int pad_w) {
  const Shape& xs = x.shape();
  const Shape& ks = kernel.shape();
  if (xs.size() != 3 || ks.size() != 4)
    throw std::invalid_argument("deconv2d: want input (ch, h, w) and kernel "
                                "(in, out, kh, kw), got " +
                                shape_str(xs) + " and " + shape_str(ks));
  if (ks[0] != xs[0]) shape_error("deconv2d", xs, ks);
  const int out_ch = ks[1];
  const int out_h = (xs[1] - 1) * stride_h - 2 * pad_h + ks[2];
  const int out_w = (xs[2] - 1) * stride_w - 2 * pad_w + ks[3];
  if (out_h < 1 || out_w < 1)
    throw std::invalid_argument("deconv2d: empty output for input " + shape_str(xs));

  // A transposed convolution is the adjoint of the convolution that maps
  // the deconv output back onto the deconv input, so the forward pass is
  // that convolution's input-gradient and vice versa.
  const ConvDims d = conv_dims({out_ch, out_h, out_w}, {xs[0], out_ch, ks[2], ks[3]},
                               stride_h, stride_w, pad_h, pad_w);
  if (d.out_h != xs[1] || d.out_w != xs[2])
    throw std::invalid_argument("deconv2d: stride/padding inconsistent with input " +
                                shape_str(xs));

  NodePtr n = make_node({out_ch, out_h, out_w}, {x.node(), kernel.node()});
  n->value = conv_grad_input(x.value(), kernel.value(), d);
  if (n->requires_grad) {
    NodePtr xn = x.node(), kn = kernel.node();
    n->backprop = [xn, kn, d](const Eigen::ArrayXd& g, GradStore* store) {
      if (xn->requires_grad) store->add(xn, conv_forward(g, kn->value, d));
      if (kn->requires_grad) store->add(kn, conv_grad_kernel(xn->value, g, d));
    };
  }
  return Tensor(n);
}

// ----- batch normalization -----

Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   Tensor running_mean, Tensor running_var, bool train,
                   double momentum, double eps) {
  const Shape& s = x.shape();
  if (s.size() != 3)
    throw std::invalid_argument("batchnorm2d: want (ch, h, w), got " + shape_str(s));
  const int ch = s[0];
  const int64_t plane = static_cast<int64_t>(s[1]) * s[2];
  if (gamma.size() != ch || beta.size() != ch || running_mean.size() != ch ||
      running_var.size() != ch)
    throw std::invalid_argument("batchnorm2d: per-channel tensors must have size " +
                                std::to_string(ch));

  Eigen::ArrayXd mu(ch), var(ch);
  if (train) {
    for (int c = 0; c < ch; ++c) {
      auto seg = x.value().segment(c * plane, plane);
      mu(c) = seg.mean();
      var(c) = (seg - mu(c)).square().mean();
    }
    // Serialized: concurrent chunk forwards share the running-stat leaves.
    // Snapping to float32 keeps checkpoint round trips bit-exact.
    static std::mutex stats_mutex;
    std::lock_guard<std::mutex> lock(stats_mutex);
    auto& rm = running_mean.mutable_value();
    auto& rv = running_var.mutable_value();
    rm = momentum * rm + (1.0 - momentum) * mu;
    rv = momentum * rv + (1.0 - momentum) * var;
    quantize_float32(&rm);
    quantize_float32(&rv);
  } else {
    mu = running_mean.value();
    var = running_var.value();
  }

  NodePtr n = make_node(s, {x.node(), gamma.node(), beta.node()});
  Eigen::ArrayXd inv_std = (var + eps).sqrt().inverse();
  for (int c = 0; c < ch; ++c)
    n->value.segment(c * plane, plane) =
        (x.value().segment(c * plane, plane) - mu(c)) * inv_std(c) * gamma.value()(c) +
        beta.value()(c);

  if (n->requires_grad) {
    NodePtr xn = x.node(), gn = gamma.node(), bn = beta.node();
    n->backprop = [xn, gn, bn, mu, inv_std, ch, plane, train](const Eigen::ArrayXd& g,
                                                              GradStore* store) {
      Eigen::ArrayXd gx(xn->size()), ggamma(ch), gbeta(ch);
      for (int c = 0; c < ch; ++c) {
        auto xs_seg = xn->value.segment(c * plane, plane);
        auto gs = g.segment(c * plane, plane);
        const Eigen::ArrayXd xhat = (xs_seg - mu(c)) * inv_std(c);
        ggamma(c) = (gs * xhat).sum();
        gbeta(c) = gs.sum();
        const double gamma_c = gn->value(c);
        if (train) {
          // Batch statistics depend on x, so the mean/variance terms feed
          // back into the input gradient.
          const double inv_n = 1.0 / static_cast<double>(plane);
          const double sum_g = gs.sum();
          const double sum_gx = (gs * xhat).sum();
          gx.segment(c * plane, plane) =
              gamma_c * inv_std(c) * (gs - inv_n * sum_g - xhat * inv_n * sum_gx);
        } else {
          gx.segment(c * plane, plane) = gs * gamma_c * inv_std(c);
        }
      }
      store->add(xn, gx);
      store->add(gn, ggamma);
      store->add(bn, gbeta);
    };
  }
  return Tensor(n);
}

// ----- differentiable inverse transform -----

Tensor istft_t(const Tensor& re, const Tensor& im, const StftConfig& config,
               int num_samples) {
  config.validate();
  if (re.shape() != im.shape()) shape_error("istft", re.shape(), im.shape());
  require_rank2(re, "istft");
  const int bins = re.shape()[0];
  const int frames = re.shape()[1];
  if (bins != config.num_bins())
    throw std::invalid_argument("istft: rows must equal fft_size/2+1, got " +
                                shape_str(re.shape()));
  if (num_samples < 1) throw std::invalid_argument("istft: bad output length");

  Eigen::MatrixXcd spec(bins, frames);
  for (int f = 0; f < bins; ++f)
    for (int t = 0; t < frames; ++t)
      spec(f, t) = std::complex<double>(re.value()(static_cast<int64_t>(f) * frames + t),
                                        im.value()(static_cast<int64_t>(f) * frames + t));
  const Eigen::VectorXd wave = istft(spec, config, num_samples);

  NodePtr n = make_node({num_samples}, {re.node(), im.node()});
  for (int i = 0; i < num_samples; ++i) n->value(i) = wave(i);

  if (n->requires_grad) {
    NodePtr rn = re.node(), in = im.node();
    n->backprop = [rn, in, config, num_samples, bins, frames](const Eigen::ArrayXd& g,
                                                              GradStore* store) {
      const int nfft = config.fft_size;
      const int hop = config.hop_size;
      const int pad = nfft / 2;
      const auto window = periodic_hann(nfft);

      // Window-square normalizer, identical to the forward pass.
      const int64_t padded = static_cast<int64_t>(frames - 1) * hop + nfft;
      Eigen::VectorXd wsum = Eigen::VectorXd::Zero(padded);
      for (int t = 0; t < frames; ++t)
        for (int i = 0; i < nfft; ++i)
          wsum(static_cast<int64_t>(t) * hop + i) += window[i] * window[i];

      Eigen::VectorXd gp = Eigen::VectorXd::Zero(padded);
      const int64_t stop = std::min<int64_t>(num_samples, padded - pad);
      for (int64_t i = 0; i < stop; ++i)
        if (wsum(pad + i) > 1e-8) gp(pad + i) = g(i) / wsum(pad + i);

      Eigen::ArrayXd gre = Eigen::ArrayXd::Zero(static_cast<int64_t>(bins) * frames);
      Eigen::ArrayXd gim = Eigen::ArrayXd::Zero(static_cast<int64_t>(bins) * frames);
      std::vector<double> frame(nfft);
      for (int t = 0; t < frames; ++t) {
        for (int i = 0; i < nfft; ++i)
          frame[i] = gp(static_cast<int64_t>(t) * hop + i) * window[i];
        const auto spec_g = rfft(frame);
        for (int f = 0; f < bins; ++f) {
          const double scale = (f == 0 || f == nfft / 2) ? 1.0 / nfft : 2.0 / nfft;
          gre(static_cast<int64_t>(f) * frames + t) = scale * spec_g[f].real();
          gim(static_cast<int64_t>(f) * frames + t) = scale * spec_g[f].imag();
        }
      }
      store->add(rn, gre);
      store->add(in, gim);
    };
  }
  return Tensor(n);
}

// ----- parameters and optimizer -----

Tensor ParameterSet::add(const std::string& name, Tensor t) {
  if (params_.count(name))
    throw std::invalid_argument("parameters: duplicate name " + name);
  if (!t.defined()) throw std::invalid_argument("parameters: undefined tensor " + name);
  order_.push_back(name);
  params_.emplace(name, t);
  return t;
}

Tensor ParameterSet::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end())
    throw std::invalid_argument("parameters: unknown name " + name);
  return it->second;
}

bool ParameterSet::contains(const std::string& name) const {
  return params_.count(name) > 0;
}

int64_t ParameterSet::total_size() const {
  int64_t n = 0;
  for (const auto& name : order_) n += params_.at(name).size();
  return n;
}

void quantize_float32(Eigen::ArrayXd* values) {
  *values = values->cast<float>().cast<double>();
}

void Adam::step(ParameterSet* params,
                const std::unordered_map<std::string, Eigen::ArrayXd>& grads) {
  double sq_norm = 0.0;
  for (const auto& name : params->names()) {
    Tensor t = params->get(name);
    if (!t.requires_grad()) continue;
    auto it = grads.find(name);
    if (it == grads.end())
      throw std::invalid_argument("adam: missing gradient for parameter " + name);
    if (it->second.size() != t.size())
      throw std::invalid_argument("adam: gradient size mismatch for parameter " + name);
    if (!it->second.allFinite())
      throw NumericalError("adam: non-finite gradient for parameter " + name);
    sq_norm += it->second.square().sum();
  }

  double scale = 1.0;
  if (config_.clip_norm > 0.0) {
    const double norm = std::sqrt(sq_norm);
    if (norm > config_.clip_norm) scale = config_.clip_norm / norm;
  }

  ++step_count_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));
  for (const auto& name : params->names()) {
    Tensor t = params->get(name);
    if (!t.requires_grad()) continue;
    const Eigen::ArrayXd g = grads.at(name) * scale;
    auto mit = m_.find(name);
    if (mit == m_.end()) {
      m_.emplace(name, Eigen::ArrayXd::Zero(t.size()));
      v_.emplace(name, Eigen::ArrayXd::Zero(t.size()));
    }
    Eigen::ArrayXd& m = m_[name];
    Eigen::ArrayXd& v = v_[name];
    m = config_.beta1 * m + (1.0 - config_.beta1) * g;
    v = config_.beta2 * v + (1.0 - config_.beta2) * g.square();
    if (config_.store_float32) {
      quantize_float32(&m);
      quantize_float32(&v);
    }
    Eigen::ArrayXd& p = t.mutable_value();
    p -= config_.lr * (m / bc1) / ((v / bc2).sqrt() + config_.eps);
    if (config_.store_float32) quantize_float32(&p);
  }
}

std::unordered_map<std::string, Eigen::ArrayXd> gradients_by_name(
    const ParameterSet& params, const GradStore& store, bool fill_missing) {
  std::unordered_map<std::string, Eigen::ArrayXd> out;
  for (const auto& name : params.names()) {
    Tensor t = params.get(name);
    if (!t.requires_grad()) continue;
    const Eigen::ArrayXd* g = store.find(t);
    if (g) {
      out.emplace(name, *g);
    } else if (fill_missing) {
      out.emplace(name, Eigen::ArrayXd::Zero(t.size()));
    } else {
      throw std::invalid_argument("gradients: no gradient recorded for parameter " + name);
    }
  }
  return out;
}

}  // namespace desep::ad
