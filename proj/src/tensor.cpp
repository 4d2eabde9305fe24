#include "milgan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "milgan/kernels.hpp"
#include "milgan/rng.hpp"

namespace milgan {

namespace {

std::int64_t shape_product(const std::vector<std::int64_t>& shape) {
  std::int64_t p = 1;
  for (std::int64_t e : shape) {
    if (e <= 0) throw ShapeError("tensor extent must be positive");
    p *= e;
  }
  return p;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": " + a.shape_str() + " vs " + b.shape_str());
  }
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected rank-2, got " + t.shape_str());
}

}  // namespace

Tensor::Tensor(std::vector<std::int64_t> shape)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_product(shape_)), 0.0) {}

Tensor::Tensor(std::vector<std::int64_t> shape, std::vector<double> data) : shape_(std::move(shape)) {
  if (shape_product(shape_) != static_cast<std::int64_t>(data.size())) {
    throw ShapeError("tensor data length does not match shape " + shape_str());
  }
  data_ = std::move(data);
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::vec(std::vector<double> v) {
  auto n = static_cast<std::int64_t>(v.size());
  return Tensor({n}, std::move(v));
}

Tensor Tensor::matrix(std::int64_t rows, std::int64_t cols, std::vector<double> data) {
  return Tensor({rows, cols}, std::move(data));
}

Tensor Tensor::full(std::vector<std::int64_t> shape, double v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

Tensor Tensor::uniform(std::vector<std::int64_t> shape, Rng& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t.at(i) = rng.uniform(lo, hi);
  return t;
}

Tensor Tensor::gaussian(std::vector<std::int64_t> shape, Rng& rng, double stddev) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t.at(i) = stddev * rng.gaussian();
  return t;
}

std::int64_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows(): tensor is not rank-2: " + shape_str());
  return shape_[0];
}

std::int64_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols(): tensor is not rank-2: " + shape_str());
  return shape_[1];
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << ",";
    os << shape_[i];
  }
  os << "]";
  return os.str();
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::check_finite(const std::string& what) const {
  if (!all_finite()) throw NumericalFault(what + ": non-finite value");
}

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner extents disagree: " + a.shape_str() + " x " + b.shape_str());
  }
  Tensor out({a.rows(), b.cols()});
  kern::matmul(a.data(), b.data(), out.data(),
               static_cast<std::size_t>(a.rows()), static_cast<std::size_t>(a.cols()),
               static_cast<std::size_t>(b.cols()));
  out.check_finite("matmul");
  return out;
}

Tensor transpose(const Tensor& m) {
  require_rank2(m, "transpose");
  Tensor out({m.cols(), m.rows()});
  for (std::int64_t r = 0; r < m.rows(); ++r)
    for (std::int64_t c = 0; c < m.cols(); ++c) out.at(c, r) = m.at(r, c);
  return out;
}

void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& grad_out,
                     Tensor& grad_a, Tensor& grad_b) {
  require_same_shape(grad_a, a, "matmul_backward/grad_a");
  require_same_shape(grad_b, b, "matmul_backward/grad_b");
  // dA = dC * B^T, dB = A^T * dC
  Tensor da = matmul(grad_out, transpose(b));
  Tensor db = matmul(transpose(a), grad_out);
  kern::add(grad_a.data(), da.data(), grad_a.data(), static_cast<std::size_t>(da.size()));
  kern::add(grad_b.data(), db.data(), grad_b.data(), static_cast<std::size_t>(db.size()));
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  kern::add(a.data(), b.data(), out.data(), static_cast<std::size_t>(a.size()));
  out.check_finite("add");
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  kern::sub(a.data(), b.data(), out.data(), static_cast<std::size_t>(a.size()));
  out.check_finite("sub");
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  kern::mul(a.data(), b.data(), out.data(), static_cast<std::size_t>(a.size()));
  out.check_finite("mul");
  return out;
}

void add_backward(const Tensor& grad_out, Tensor& grad_a, Tensor& grad_b) {
  kern::add(grad_a.data(), grad_out.data(), grad_a.data(), static_cast<std::size_t>(grad_out.size()));
  kern::add(grad_b.data(), grad_out.data(), grad_b.data(), static_cast<std::size_t>(grad_out.size()));
}

void sub_backward(const Tensor& grad_out, Tensor& grad_a, Tensor& grad_b) {
  kern::add(grad_a.data(), grad_out.data(), grad_a.data(), static_cast<std::size_t>(grad_out.size()));
  kern::axpy(-1.0, grad_out.data(), grad_b.data(), static_cast<std::size_t>(grad_out.size()));
}

void mul_backward(const Tensor& a, const Tensor& b, const Tensor& grad_out,
                  Tensor& grad_a, Tensor& grad_b) {
  for (std::int64_t i = 0; i < grad_out.size(); ++i) {
    grad_a.at(i) += grad_out.at(i) * b.at(i);
    grad_b.at(i) += grad_out.at(i) * a.at(i);
  }
}

double sigmoid(double x) {
  // Branch form keeps exp() argument nonpositive.
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor tanh_op(const Tensor& x) {
  Tensor out(x.shape());
  for (std::int64_t i = 0; i < x.size(); ++i) out.at(i) = std::tanh(x.at(i));
  out.check_finite("tanh");
  return out;
}

Tensor sigmoid_op(const Tensor& x) {
  Tensor out(x.shape());
  for (std::int64_t i = 0; i < x.size(); ++i) out.at(i) = sigmoid(x.at(i));
  out.check_finite("sigmoid");
  return out;
}

Tensor exp_op(const Tensor& x) {
  Tensor out(x.shape());
  for (std::int64_t i = 0; i < x.size(); ++i) out.at(i) = std::exp(x.at(i));
  out.check_finite("exp");
  return out;
}

void tanh_backward(const Tensor& y, const Tensor& grad_out, Tensor& grad_x) {
  for (std::int64_t i = 0; i < y.size(); ++i) grad_x.at(i) += grad_out.at(i) * (1.0 - y.at(i) * y.at(i));
}

void sigmoid_backward(const Tensor& y, const Tensor& grad_out, Tensor& grad_x) {
  for (std::int64_t i = 0; i < y.size(); ++i) grad_x.at(i) += grad_out.at(i) * y.at(i) * (1.0 - y.at(i));
}

void exp_backward(const Tensor& y, const Tensor& grad_out, Tensor& grad_x) {
  for (std::int64_t i = 0; i < y.size(); ++i) grad_x.at(i) += grad_out.at(i) * y.at(i);
}

// ---------------------------------------------------------------------------
// softmax
// ---------------------------------------------------------------------------

Tensor softmax(const Tensor& logits, const Tensor* mask) {
  if (logits.rank() != 1) throw ShapeError("softmax: expected rank-1, got " + logits.shape_str());
  if (mask != nullptr) require_same_shape(logits, *mask, "softmax/mask");

  const std::int64_t n = logits.size();
  double maxv = -std::numeric_limits<double>::infinity();
  std::int64_t live = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    if (mask && mask->at(i) == 0.0) continue;
    ++live;
    maxv = std::max(maxv, logits.at(i));
  }
  if (live == 0) throw VocabExhausted("softmax: all entries masked");

  Tensor out(logits.shape());
  double total = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    if (mask && mask->at(i) == 0.0) {
      out.at(i) = 0.0;
      continue;
    }
    const double e = std::exp(logits.at(i) - maxv);
    out.at(i) = e;
    total += e;
  }
  for (std::int64_t i = 0; i < n; ++i) {
    if (mask && mask->at(i) == 0.0) continue;
    out.at(i) /= total;
  }
  out.check_finite("softmax");
  return out;
}

void softmax_backward(const Tensor& y, const Tensor& grad_out, const Tensor* mask,
                      Tensor& grad_logits) {
  double inner = 0.0;
  for (std::int64_t i = 0; i < y.size(); ++i) {
    if (mask && mask->at(i) == 0.0) continue;
    inner += y.at(i) * grad_out.at(i);
  }
  for (std::int64_t i = 0; i < y.size(); ++i) {
    if (mask && mask->at(i) == 0.0) continue;
    grad_logits.at(i) += y.at(i) * (grad_out.at(i) - inner);
  }
}

// ---------------------------------------------------------------------------
// conv1d + max-over-time
// ---------------------------------------------------------------------------

ConvPool conv1d_maxpool(const Tensor& seq, const std::vector<Tensor>& banks) {
  require_rank2(seq, "conv1d_maxpool");
  const std::int64_t t_len = seq.rows();
  const std::int64_t k = seq.cols();

  std::int64_t total = 0;
  for (const Tensor& bank : banks) {
    if (bank.rank() != 3) throw ShapeError("conv1d_maxpool: bank must be [maps,w,k], got " + bank.shape_str());
    if (bank.extent(2) != k) {
      throw ShapeError("conv1d_maxpool: bank " + bank.shape_str() + " does not match input " + seq.shape_str());
    }
    if (bank.extent(1) > t_len) {
      throw ShapeError("conv1d_maxpool: sequence length " + std::to_string(t_len) +
                       " shorter than filter width " + std::to_string(bank.extent(1)));
    }
    total += bank.extent(0);
  }

  ConvPool out;
  out.features = Tensor({total});
  out.argmax.assign(static_cast<std::size_t>(total), 0);

  std::int64_t f = 0;
  for (const Tensor& bank : banks) {
    const std::int64_t maps = bank.extent(0);
    const std::int64_t w = bank.extent(1);
    const std::int64_t wk = w * k;
    const std::int64_t windows = t_len - w + 1;
    for (std::int64_t m = 0; m < maps; ++m, ++f) {
      const double* filt = bank.data() + m * wk;
      double best = -std::numeric_limits<double>::infinity();
      int best_p = 0;
      for (std::int64_t p = 0; p < windows; ++p) {
        // window rows are contiguous in a row-major T x k matrix
        const double r = kern::dot(seq.data() + p * k, filt, static_cast<std::size_t>(wk));
        if (r > best) {
          best = r;
          best_p = static_cast<int>(p);
        }
      }
      out.features.at(f) = best;
      out.argmax[static_cast<std::size_t>(f)] = best_p;
    }
  }
  out.features.check_finite("conv1d_maxpool");
  return out;
}

void conv1d_maxpool_backward(const Tensor& seq, const std::vector<Tensor>& banks,
                             const ConvPool& out, const Tensor& grad_features,
                             Tensor* grad_seq, const std::vector<Tensor*>& grad_banks) {
  const std::int64_t k = seq.cols();
  std::int64_t f = 0;
  std::size_t bi = 0;
  for (const Tensor& bank : banks) {
    const std::int64_t maps = bank.extent(0);
    const std::int64_t w = bank.extent(1);
    const std::int64_t wk = w * k;
    for (std::int64_t m = 0; m < maps; ++m, ++f) {
      const double g = grad_features.at(f);
      const std::int64_t p = out.argmax[static_cast<std::size_t>(f)];
      if (!grad_banks.empty()) {
        Tensor& gb = *grad_banks[bi];
        kern::axpy(g, seq.data() + p * k, gb.data() + m * wk, static_cast<std::size_t>(wk));
      }
      if (grad_seq) {
        kern::axpy(g, bank.data() + m * wk, grad_seq->data() + p * k, static_cast<std::size_t>(wk));
      }
    }
    ++bi;
  }
}

// ---------------------------------------------------------------------------
// ParamStore
// ---------------------------------------------------------------------------

Tensor& ParamStore::add(const std::string& name, Tensor init) {
  if (params_.count(name)) throw DataError("ParamStore: duplicate parameter '" + name + "'");
  grads_.emplace(name, Tensor(init.shape()));
  auto [it, ok] = params_.emplace(name, std::move(init));
  (void)ok;
  return it->second;
}

Tensor& ParamStore::param(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw DataError("ParamStore: unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& ParamStore::param(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw DataError("ParamStore: unknown parameter '" + name + "'");
  return it->second;
}

Tensor& ParamStore::grad(const std::string& name) {
  auto it = grads_.find(name);
  if (it == grads_.end()) throw DataError("ParamStore: unknown gradient '" + name + "'");
  return it->second;
}

const Tensor& ParamStore::grad(const std::string& name) const {
  auto it = grads_.find(name);
  if (it == grads_.end()) throw DataError("ParamStore: unknown gradient '" + name + "'");
  return it->second;
}

bool ParamStore::has(const std::string& name) const { return params_.count(name) != 0; }

void ParamStore::zero_grads() {
  for (auto& [name, g] : grads_) g.fill(0.0);
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, p] : params_) out.push_back(name);
  return out;
}

void sgd_step(ParamStore& store, double rate, Direction dir) {
  const double step = dir == Direction::descend ? -rate : rate;
  for (auto& [name, p] : store.mutable_params()) {
    const Tensor& g = store.grad(name);
    if (!g.all_finite()) {
      throw NumericalFault("sgd_step: non-finite gradient for parameter '" + name + "'");
    }
    kern::axpy(step, g.data(), p.data(), static_cast<std::size_t>(p.size()));
  }
}

double grad_check(const std::function<double()>& loss_and_grads, ParamStore& store,
                  double step) {
  loss_and_grads();
  std::map<std::string, Tensor> analytic = store.all_grads();

  double worst = 0.0;
  for (const std::string& name : store.names()) {
    Tensor& p = store.param(name);
    const Tensor& a = analytic.at(name);
    for (std::int64_t i = 0; i < p.size(); ++i) {
      const double saved = p.at(i);
      p.at(i) = saved + step;
      const double lp = loss_and_grads();
      p.at(i) = saved - step;
      const double lm = loss_and_grads();
      p.at(i) = saved;
      const double numeric = (lp - lm) / (2.0 * step);
      const double denom = std::max({1.0, std::fabs(a.at(i)), std::fabs(numeric)});
      worst = std::max(worst, std::fabs(a.at(i) - numeric) / denom);
    }
  }
  loss_and_grads();  // leave store gradients consistent with current params
  return worst;
}

}  // namespace milgan
