// Copyright 2026 Desep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DESEP_AUTODIFF_H_
#define DESEP_AUTODIFF_H_

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "desep/stft.h"

namespace desep::ad {

// Dimension list of a tensor; values are stored flat in row-major order.
using Shape = std::vector<int>;

int64_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

class GradStore;

struct Node {
  Shape shape;
  Eigen::ArrayXd value;
  bool requires_grad = false;
  bool backward_ran = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Receives the accumulated gradient of this node and scatters it into
  // the slots of its inputs.
  std::function<void(const Eigen::ArrayXd& grad, GradStore* store)> backprop;

  int64_t size() const { return value.size(); }
};

using NodePtr = std::shared_ptr<Node>;

// Value-semantic handle onto a graph node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor leaf(const Shape& shape, const Eigen::ArrayXd& values,
                     bool requires_grad);
  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  // (rows, cols) tensor copied out of an Eigen matrix.
  static Tensor from_matrix(const Eigen::MatrixXd& m, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  const Eigen::ArrayXd& value() const { return node_->value; }
  // Leaf state mutation (parameter updates, running statistics).
  Eigen::ArrayXd& mutable_value() { return node_->value; }
  double item() const;
  Eigen::MatrixXd to_matrix() const;  // rank 1 or 2 only

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

// Gradients accumulated outside the nodes so a graph can be replayed and
// several losses can be differentiated independently.
class GradStore {
 public:
  // Adds g into the slot for n if n requires grad; no-op otherwise.
  void add(const NodePtr& n, const Eigen::ArrayXd& g);
  void add(Node* n, const Eigen::ArrayXd& g);
  const Eigen::ArrayXd* find(const Node* n) const;
  const Eigen::ArrayXd* find(const Tensor& t) const { return find(t.node().get()); }
  Eigen::ArrayXd& slot(Node* n, int64_t size);
  bool empty() const { return grads_.empty(); }

 private:
  std::unordered_map<const Node*, Eigen::ArrayXd> grads_;
};

// Reverse-mode sweep from a scalar loss. Each reachable node is visited
// exactly once in reverse topological order; branches that do not require
// gradients are skipped. Calling backward twice on the same loss node is
// an error (rebuild the graph to differentiate again).
GradStore backward(const Tensor& loss);

// ----- elementwise and shape primitives -----
Tensor add(const Tensor& a, const Tensor& b);       // same shape, or one scalar
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);
// (rows, cols) op broadcast vector: row vector spans cols, col vector rows.
Tensor add_rowvec(const Tensor& m, const Tensor& v);
Tensor add_colvec(const Tensor& m, const Tensor& v);
Tensor mul_rowvec(const Tensor& m, const Tensor& v);
Tensor mul_colvec(const Tensor& m, const Tensor& v);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose2d(const Tensor& a);
Tensor reshape(const Tensor& a, const Shape& shape);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, int start, int length);

Tensor sum_all(const Tensor& a);    // shape {1}
Tensor mean_all(const Tensor& a);
Tensor sum_axis(const Tensor& a, int axis);   // 2-D, keeps the axis at size 1
Tensor mean_axis(const Tensor& a, int axis);

Tensor tanh_t(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp_t(const Tensor& a);
Tensor log_t(const Tensor& a);
Tensor sqrt_t(const Tensor& a);
Tensor cos_t(const Tensor& a);
Tensor sin_t(const Tensor& a);
Tensor atan2_t(const Tensor& y, const Tensor& x);
Tensor softplus(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope);
Tensor clamp_min(const Tensor& a, double floor);
Tensor softmax(const Tensor& a, int axis);  // rank 1 or 2

// ----- network building blocks -----
// x: (in, cols); weight: (out, in); bias: (out, 1) added to every column.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// One recurrence step. x: (in, 1); h, c: (hidden, 1); w_ih: (4*hidden, in);
// w_hh: (4*hidden, hidden); biases (4*hidden, 1). Gate order i, f, g, o.
struct LstmState {
  Tensor h;
  Tensor c;
};
LstmState lstm_cell(const Tensor& x, const LstmState& state, const Tensor& w_ih,
                    const Tensor& w_hh, const Tensor& b_ih, const Tensor& b_hh);

// x: (in_ch, h, w); kernel: (out_ch, in_ch, kh, kw). Zero padding.
Tensor conv2d(const Tensor& x, const Tensor& kernel, int stride_h, int stride_w,
              int pad_h, int pad_w);
// Transposed convolution, kernel (in_ch, out_ch, kh, kw); output spatial
// size (h - 1) * stride - 2 * pad + k.
Tensor deconv2d(const Tensor& x, const Tensor& kernel, int stride_h, int stride_w,
                int pad_h, int pad_w);

// Per-channel normalization of (ch, h, w) over the spatial plane. In
// training mode batch statistics are used and the running leaf tensors
// (shape (ch,)) are updated in place with the given momentum; in eval mode
// the running statistics are read instead.
Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   Tensor running_mean, Tensor running_var, bool train,
                   double momentum = 0.9, double eps = 1e-5);

// Overlap-add inverse transform as a differentiable op. re, im: (bins,
// frames); output: (num_samples,). The imaginary parts of bins 0 and
// fft_size/2 do not influence the output, so their gradients are zero.
Tensor istft_t(const Tensor& re, const Tensor& im, const StftConfig& config,
               int num_samples);

// ----- parameters and optimizer -----
class ParameterSet {
 public:
  Tensor add(const std::string& name, Tensor t);
  Tensor get(const std::string& name) const;
  bool contains(const std::string& name) const;
  const std::vector<std::string>& names() const { return order_; }
  int64_t total_size() const;

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, Tensor> params_;
};

// Snaps every entry to the nearest float32 value.
void quantize_float32(Eigen::ArrayXd* values);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 5.0;      // global gradient norm ceiling, <= 0 disables
  bool store_float32 = true;   // snap params and moments to float32 each step
};

class Adam {
 public:
  explicit Adam(AdamConfig config) : config_(config) {}

  // grads must hold one entry per trainable parameter (zero allowed);
  // a missing entry is an error naming the parameter. Non-trainable
  // entries (running statistics) are left untouched.
  void step(ParameterSet* params,
            const std::unordered_map<std::string, Eigen::ArrayXd>& grads);

  int64_t step_count() const { return step_count_; }
  double lr() const { return config_.lr; }
  void set_lr(double lr) { config_.lr = lr; }
  const AdamConfig& config() const { return config_; }

  // Optimizer state for checkpointing, keyed by parameter name.
  std::unordered_map<std::string, Eigen::ArrayXd>& first_moments() { return m_; }
  std::unordered_map<std::string, Eigen::ArrayXd>& second_moments() { return v_; }
  void set_step_count(int64_t t) { step_count_ = t; }

 private:
  AdamConfig config_;
  int64_t step_count_ = 0;
  std::unordered_map<std::string, Eigen::ArrayXd> m_, v_;
};

// Dense per-parameter gradients from a backward sweep; missing entries
// become zeros when fill_missing is set, otherwise they raise.
std::unordered_map<std::string, Eigen::ArrayXd> gradients_by_name(
    const ParameterSet& params, const GradStore& store, bool fill_missing);

}  // namespace desep::ad

#endif  // DESEP_AUTODIFF_H_
