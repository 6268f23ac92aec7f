#pragma once
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ibn/rng.hpp"

// Reverse-mode tape autodiff over row-major double arrays.  Each op records a
// node holding its parents and a backward closure; Tensor::backward() walks
// the tape in reverse topological order.  All math is 64-bit.

namespace ibn {

using Shape = std::vector<int64_t>;

struct TensorImpl;

struct Node {
  std::string op;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  // Receives the output impl (values + accumulated grad) and scatters into
  // the parents' grads.
  std::function<void(const TensorImpl&)> backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> v;
  bool requires_grad = false;
  std::vector<double> grad;  // same length as v once touched
  std::shared_ptr<Node> node;

  int64_t size() const { return int64_t(v.size()); }
  void ensure_grad() {
    if (grad.size() != v.size()) grad.assign(v.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0,
                      bool requires_grad = false);
  static Tensor rand_uniform(Shape shape, Rng& rng, double lo, double hi,
                             bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int ndim() const { return int(impl_->shape.size()); }
  int64_t dim(int i) const { return impl_->shape[size_t(i)]; }
  int64_t size() const { return impl_->size(); }
  double* data() { return impl_->v.data(); }
  const double* data() const { return impl_->v.data(); }
  std::vector<double>& values() { return impl_->v; }
  const std::vector<double>& values() const { return impl_->v; }
  double item() const;
  bool requires_grad() const { return impl_->requires_grad; }
  std::vector<double>& grad();
  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

  // Runs reverse accumulation from this scalar.
  void backward() const;

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Toggles the per-op non-finite detector (throws on NaN/Inf when enabled).
void set_finite_checks(bool on);
bool finite_checks_enabled();

// Disables tape recording in scope (inference).
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  bool prev;
};
bool grad_enabled();

// --- elementwise / broadcast ---
Tensor add(const Tensor& a, const Tensor& b);          // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_bias(const Tensor& x, const Tensor& b);     // b spans the last axis
Tensor scale(const Tensor& x, double c);
Tensor add_const(const Tensor& x, double c);
Tensor neg(const Tensor& x);
Tensor exp_t(const Tensor& x);
Tensor log_t(const Tensor& x);
Tensor tanh_t(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor square(const Tensor& x);
Tensor clamp(const Tensor& x, double lo, double hi);   // pass-through grad inside
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor sign_st(const Tensor& x);  // hard sign forward, identity backward

// --- linear algebra ---
Tensor matmul(const Tensor& a, const Tensor& b);       // (M,K) x (K,N)
Tensor bmm(const Tensor& a, const Tensor& b);          // (B,M,K) x (B,K,N)
Tensor bmm_nt(const Tensor& a, const Tensor& b);       // (B,M,K) x (B,N,K)^T

// --- shape ---
Tensor reshape(const Tensor& x, Shape shape);
// Slice along axis 1 of a 3-d tensor: (B, M, N) -> (B, hi-lo, N).
Tensor narrow1(const Tensor& x, int64_t lo, int64_t hi);
Tensor concat_last(const std::vector<Tensor>& parts);

// --- reductions / losses / normalization ---
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum_last(const Tensor& x);                      // (..., N) -> (...)
Tensor softmax_last(const Tensor& x);
Tensor layernorm_last(const Tensor& x, const Tensor& gain, const Tensor& bias,
                      double eps = 1e-5);
Tensor mse(const Tensor& pred, const Tensor& target);

}  // namespace ibn
