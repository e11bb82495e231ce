#pragma once

#include <functional>
#include <map>
#include <memory>

#include "kdseq/common.hpp"

namespace kdseq {

// Reverse-mode autodiff over dense 2-D tensors (scalars are 1x1).
// The graph is define-by-run: every op allocates a Node whose creation
// sequence number gives a valid reverse topological order. Gradients
// accumulate additively across fan-out; callers zero them between steps.

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  size_t rows = 0, cols = 0;
  std::vector<double> value;
  std::vector<double> grad;  // lazily allocated, same length as value
  bool requires_grad = false;
  bool backward_run = false;  // set on a node used as a backward() root
  uint64_t seq = 0;
  const char* op = "leaf";
  std::vector<NodePtr> inputs;
  std::function<void(Node&)> backprop;  // scatters this->grad into inputs

  size_t size() const { return rows * cols; }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

// Suppresses tape recording for the enclosed scope (teacher inference,
// numeric probes in grad_check). Nestable, thread-local.
class NoGradGuard {
public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
  static bool active();
};

class Tensor {
public:
  Tensor() = default;
  explicit Tensor(NodePtr n) : n_(std::move(n)) {}
  Tensor(size_t rows, size_t cols, std::vector<double> v, bool requires_grad = false);
  Tensor(size_t rows, size_t cols, double fill, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor from_mat(const Mat& m, bool requires_grad = false);

  bool defined() const { return n_ != nullptr; }
  size_t rows() const { return n_->rows; }
  size_t cols() const { return n_->cols; }
  size_t size() const { return n_->size(); }
  const std::vector<double>& values() const { return n_->value; }
  std::vector<double>& values_mut() { return n_->value; }
  double operator()(size_t r, size_t c) const { return n_->value[r * n_->cols + c]; }
  double item() const;  // value of a 1x1 tensor
  bool requires_grad() const { return n_->requires_grad; }
  const std::vector<double>& grad() const;
  void zero_grad();
  Mat to_mat() const;
  NodePtr node() const { return n_; }

private:
  NodePtr n_;
};

// Custom-op hook: wraps a forward result and its backward scatter into a
// tape node. All built-in kernels go through this; the ctc module uses it
// for the closed-form posterior gradient.
Tensor make_op(const char* name, size_t rows, size_t cols, std::vector<double> value,
               std::vector<Tensor> inputs, std::function<void(Node&)> backprop);

// Kernels. Binary elementwise ops accept equal shapes, a (1,c) row to
// broadcast down rows, or a (1,1) scalar, broadcast operand on the right.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);      // constant scalar multiply
Tensor add_const(const Tensor& a, double c);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, size_t c0, size_t c1);
Tensor slice_rows(const Tensor& a, size_t r0, size_t r1);
Tensor reverse_rows(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh_t(const Tensor& a);
Tensor exp_t(const Tensor& a);
Tensor log_t(const Tensor& a);  // numeric_domain_error on non-positive input
Tensor clamp_min(const Tensor& a, double lo);
Tensor sum_all(const Tensor& a);   // 1x1
Tensor mean_all(const Tensor& a);  // 1x1
Tensor row_max(const Tensor& a);   // (r,1), subgradient to first argmax
Tensor softmax_rows(const Tensor& a);
Tensor log_softmax_rows(const Tensor& a);
// Mean over rows of the cosine between corresponding rows; a zero-norm row
// contributes 0 (orthogonal convention) and is counted in *zero_rows.
Tensor row_cosine_mean(const Tensor& a, const Tensor& b, size_t* zero_rows = nullptr);
Tensor detach(const Tensor& a);

// Named parameters with deterministic (sorted) iteration order.
class ParameterSet {
public:
  Tensor& add(const std::string& name, Tensor t);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const { return items_.count(name) != 0; }
  size_t count() const { return items_.size(); }
  void zero_grad();
  double grad_l2_norm() const;
  uint64_t value_hash() const;  // order-stable hash of names, shapes, raw values
  std::vector<std::string> names() const;

  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

private:
  std::map<std::string, Tensor> items_;
};

// Reverse pass from a scalar loss. Populates grads of every reachable node;
// parameters not on the tape get exact-zero grads. Running backward twice on
// the same loss node without rebuilding the forward graph is a state_error.
// Distinct scalar roots over a shared graph may each be walked once (the
// trainer differentiates individual loss terms this way); interior grads are
// cleared per pass, leaf grads accumulate.
void backward(const Tensor& loss, ParameterSet& params);

struct GradCheck {
  double max_rel_err = 0.0;
  bool ok = false;
  std::string worst_param;
  size_t worst_index = 0;
};

// Central-difference check of d f / d params against the tape gradients.
// Relative error is |analytic - numeric| / max(1, |analytic|).
GradCheck grad_check(const std::function<Tensor(ParameterSet&)>& f, ParameterSet& params,
                     double h = 1e-5, double tol = 1e-4);

}  // namespace kdseq
