#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "milgan/error.hpp"

namespace milgan {

class Rng;

/// Dense row-major double tensor. Every public operation on tensors checks
/// that its result is finite; NaN/Inf surface as NumericalFault instead of
/// propagating silently.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> shape);
  Tensor(std::vector<std::int64_t> shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor vec(std::vector<double> v);
  static Tensor matrix(std::int64_t rows, std::int64_t cols, std::vector<double> data);
  static Tensor full(std::vector<std::int64_t> shape, double v);
  static Tensor uniform(std::vector<std::int64_t> shape, Rng& rng, double lo, double hi);
  static Tensor gaussian(std::vector<std::int64_t> shape, Rng& rng, double stddev);

  const std::vector<std::int64_t>& shape() const { return shape_; }
  std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  std::int64_t extent(std::int64_t axis) const { return shape_[static_cast<std::size_t>(axis)]; }
  std::int64_t rows() const;
  std::int64_t cols() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& at(std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double at(std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }
  double& at(std::int64_t r, std::int64_t c) { return data_[static_cast<std::size_t>(r * cols() + c)]; }
  double at(std::int64_t r, std::int64_t c) const { return data_[static_cast<std::size_t>(r * cols() + c)]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  std::string shape_str() const;

  void fill(double v);
  bool all_finite() const;
  /// Throws NumericalFault naming `what` if any entry is non-finite.
  void check_finite(const std::string& what) const;

  bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

 private:
  std::vector<std::int64_t> shape_;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// forward ops with hand-wired analytic backwards
//
// Backward functions accumulate (+=) into the gradient arguments so multiple
// uses of a value compose naturally. Callers own the wiring order.
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& grad_out,
                     Tensor& grad_a, Tensor& grad_b);

Tensor transpose(const Tensor& m);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // Hadamard
void add_backward(const Tensor& grad_out, Tensor& grad_a, Tensor& grad_b);
void sub_backward(const Tensor& grad_out, Tensor& grad_a, Tensor& grad_b);
void mul_backward(const Tensor& a, const Tensor& b, const Tensor& grad_out,
                  Tensor& grad_a, Tensor& grad_b);

Tensor tanh_op(const Tensor& x);
Tensor sigmoid_op(const Tensor& x);
Tensor exp_op(const Tensor& x);
/// Backwards for the unary ops take the forward *output* y.
void tanh_backward(const Tensor& y, const Tensor& grad_out, Tensor& grad_x);
void sigmoid_backward(const Tensor& y, const Tensor& grad_out, Tensor& grad_x);
void exp_backward(const Tensor& y, const Tensor& grad_out, Tensor& grad_x);

double sigmoid(double x);

/// Stable masked softmax over a rank-1 tensor. Mask entries are 0/1; masked
/// positions come out exactly 0. Throws VocabExhausted when nothing is
/// unmasked.
Tensor softmax(const Tensor& logits, const Tensor* mask = nullptr);
void softmax_backward(const Tensor& y, const Tensor& grad_out, const Tensor* mask,
                      Tensor& grad_logits);

/// Valid 1-D convolution over time followed by max-over-time, per filter.
/// seq is T x k; each bank is [maps, w, k]. Output concatenates all banks'
/// pooled features. argmax records the winning window start per feature
/// (lowest time index wins ties) for deterministic backward routing.
struct ConvPool {
  Tensor features;           // [total maps]
  std::vector<int> argmax;   // window start per feature
};
ConvPool conv1d_maxpool(const Tensor& seq, const std::vector<Tensor>& banks);
void conv1d_maxpool_backward(const Tensor& seq, const std::vector<Tensor>& banks,
                             const ConvPool& out, const Tensor& grad_features,
                             Tensor* grad_seq, const std::vector<Tensor*>& grad_banks);

// ---------------------------------------------------------------------------
// parameter store
// ---------------------------------------------------------------------------

enum class Direction { descend, ascend };

/// Named parameters with same-shape gradient accumulators. Iteration order is
/// the name order (std::map), which keeps updates deterministic.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor init);
  Tensor& param(const std::string& name);
  const Tensor& param(const std::string& name) const;
  Tensor& grad(const std::string& name);
  const Tensor& grad(const std::string& name) const;
  bool has(const std::string& name) const;

  void zero_grads();
  std::vector<std::string> names() const;
  std::size_t count() const { return params_.size(); }

  const std::map<std::string, Tensor>& all_params() const { return params_; }
  std::map<std::string, Tensor>& mutable_params() { return params_; }
  const std::map<std::string, Tensor>& all_grads() const { return grads_; }
  std::map<std::string, Tensor>& mutable_grads() { return grads_; }

 private:
  std::map<std::string, Tensor> params_;
  std::map<std::string, Tensor> grads_;
};

/// p <- p -/+ rate * grad. Gradients are left untouched. Throws
/// NumericalFault naming the parameter if its gradient is non-finite.
void sgd_step(ParamStore& store, double rate, Direction dir = Direction::descend);

/// Central finite-difference verification. `loss_and_grads` must recompute
/// the loss AND overwrite the analytic gradients in `store` each call.
/// Returns the max over parameters of |analytic - numeric| / max(1, |a|, |n|).
double grad_check(const std::function<double()>& loss_and_grads, ParamStore& store,
                  double step);

}  // namespace milgan
