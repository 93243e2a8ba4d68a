#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace msqnet {

// Thread-local switch for gradient recording. Finite-difference probes and
// evaluation loops run with gradients off to skip tape bookkeeping.
class GradMode {
 public:
  static bool enabled();
  static void set(bool on);
};

struct NoGradGuard {
  NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set(false); }
  ~NoGradGuard() { GradMode::set(prev_); }

 private:
  bool prev_;
};

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

// One recorded operation result. `seq` is a monotonically increasing
// execution stamp; walking reachable nodes in decreasing `seq` visits ops in
// reverse execution order exactly once, which is the tape contract.
struct TensorNode {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;  // sized like data iff requires_grad
  bool requires_grad = false;
  std::uint64_t seq = 0;
  std::vector<NodePtr> parents;
  std::function<void(TensorNode&)> backward_fn;
};

// Dense row-major N-d array of doubles with reverse-mode autodiff.
// Copies are shallow: a Tensor is a handle onto a shared node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, double fill = 0.0);
  Tensor(std::vector<int> shape, std::vector<double> data);
  static Tensor scalar(double v);

  // Gaussian-initialized tensor, mean 0, given std.
  static Tensor randn(std::vector<int> shape, class Rng& rng, double std = 1.0);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  int size() const { return static_cast<int>(node_->data.size()); }
  int rows() const { return dim(0); }
  int cols() const { return dim(1); }

  std::span<double> data() { return node_->data; }
  std::span<const double> data() const { return node_->data; }
  double& at(int i) { return node_->data[static_cast<std::size_t>(i)]; }
  double at(int i) const { return node_->data[static_cast<std::size_t>(i)]; }
  double& at(int i, int j) { return node_->data[static_cast<std::size_t>(i * cols() + j)]; }
  double at(int i, int j) const { return node_->data[static_cast<std::size_t>(i * cols() + j)]; }
  double at(int i, int j, int k) const;
  double value() const;  // the single element of a scalar tensor

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> grad_mut() { return node_->grad; }
  void zero_grad();

  // Runs reverse-mode accumulation from this scalar, seeding d(this)=1.
  // Gradients accumulate into every reachable node with requires_grad.
  void backward() const;

  const NodePtr& node() const { return node_; }

 private:
  explicit Tensor(NodePtr n) : node_(std::move(n)) {}
  NodePtr node_;

  friend Tensor make_op(std::vector<int> shape, std::vector<double> data,
                        std::vector<Tensor> parents,
                        std::function<void(TensorNode&)> backward);
};

// Records one op on the tape: allocates the result node, wires parents and
// the backward closure when gradients are enabled. The closure must add into
// parent grads (never overwrite).
Tensor make_op(std::vector<int> shape, std::vector<double> data, std::vector<Tensor> parents,
               std::function<void(TensorNode&)> backward);

// ---- elementwise and structural ops ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
// broadcast add of a vector over the trailing dimension of a matrix
Tensor add_row(const Tensor& m, const Tensor& v);
Tensor reshape(const Tensor& a, std::vector<int> shape);
Tensor transpose(const Tensor& a);
Tensor slice_rows(const Tensor& a, int r0, int r1);
Tensor slice_cols(const Tensor& a, int c0, int c1);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor tile_rows(const Tensor& v, int n);  // vector [C] -> [n x C]
// row selection by arbitrary (unique) indices, and its scatter inverse
Tensor gather_rows(const Tensor& a, std::vector<int> idx);
Tensor scatter_rows(const Tensor& a, std::vector<int> idx, int total_rows);
Tensor detach(const Tensor& a);

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);     // [m x k] . [k x n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m x k] . [n x k]^T
Tensor rowwise_dot(const Tensor& a, const Tensor& b);  // [K x D],[K x D] -> [K]

// ---- nonlinearities and reductions ----
Tensor softmax(const Tensor& x, int axis);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor mean_rows(const Tensor& m);  // [R x C] -> [C]
Tensor sum_all(const Tensor& a);    // -> scalar
Tensor mean_all(const Tensor& a);   // -> scalar

// ---- losses (stable, computed from logits) ----
// mean over all entries of y*softplus(-z) + (1-y)*softplus(z)
Tensor bce_with_logits_mean(const Tensor& logits, const Tensor& targets);
// mean over rows of -log softmax(z)[true class]; targets are one-hot rows
Tensor softmax_xent_mean(const Tensor& logits, const Tensor& onehot);

std::string shape_str(const std::vector<int>& s);

// ---- gradient checking ----
struct ParamRef {
  std::string name;
  Tensor value;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  int worst_index = -1;
  std::size_t coords_checked = 0;
  double tol = 0.0;
  std::vector<std::string> violations;  // coordinates exceeding tol
  bool passed() const { return max_rel_err <= tol; }
};

// Compares tape gradients of f() against central differences
// (f(p+h)-f(p-h))/2h for every coordinate of every parameter. Relative error
// uses a magnitude floor of 1e-3 so near-zero gradients are compared
// absolutely at that scale.
GradCheckReport grad_check(const std::function<Tensor()>& f,
                           const std::vector<ParamRef>& params,
                           double h = 1e-5, double tol = 1e-4);

}  // namespace msqnet
