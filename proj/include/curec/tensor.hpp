#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "curec/rng.hpp"

namespace curec {

using Shape = std::vector<int64_t>;

std::string shape_str(const Shape& s);
int64_t shape_size(const Shape& s);

// Sentinel for masked-out maxima: large negative finite value so that hinge
// terms built on top of it evaluate to exactly zero without producing inf/nan
// in intermediate arithmetic.
inline constexpr double kNegInf = -1e30;

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // same length as data once grad participation starts
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

// Dense row-major tensor handle. Copies share storage; ops produce fresh
// storage. Gradients accumulate into `grad` during Tape::backward.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> data);
  static Tensor scalar(double value);  // rank-0
  static Tensor randn(Shape shape, Rng& rng, double stddev, double mean = 0.0);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int64_t rank() const { return static_cast<int64_t>(impl_->shape.size()); }
  int64_t size() const { return static_cast<int64_t>(impl_->data.size()); }
  int64_t extent(int64_t axis) const { return impl_->shape[static_cast<size_t>(axis)]; }

  std::vector<double>& data() { return impl_->data; }
  const std::vector<double>& data() const { return impl_->data; }
  std::vector<double>& grad();
  const std::vector<double>& grad() const;

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  void zero_grad();

  double item() const;  // value of a single-element tensor
  double at(std::initializer_list<int64_t> idx) const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;
};

// Ordered record of primitive adjoints for one forward pass. Replaying in
// reverse order with a fixed per-op reduction order makes repeated runs
// bitwise identical.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  void record(std::function<void()> adjoint);
  size_t size() const { return adjoints_.size(); }

  // Seeds d(loss)/d(loss) = 1 and replays adjoints in reverse. `loss` must be
  // a single-element tensor that participates in this tape.
  void backward(const Tensor& loss);

 private:
  friend class TapeScope;
  std::vector<std::function<void()>> adjoints_;
};

// RAII guard that makes a tape the active recording target on this thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

// ---- primitives -----------------------------------------------------------
// Every op validates shapes, computes eagerly, and records an adjoint when a
// tape is active and an input participates in grad.

Tensor matmul(const Tensor& a, const Tensor& b);                 // [m,k]x[k,n]
Tensor transpose(const Tensor& a);                               // 2-D
Tensor add(const Tensor& a, const Tensor& b);                    // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);                    // elementwise
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor add_rows(const Tensor& x, const Tensor& bias);            // [r,c] + [c]
Tensor relu(const Tensor& x);
Tensor tanh_op(const Tensor& x);
Tensor log_op(const Tensor& x);                                  // requires x > 0
Tensor clamp(const Tensor& x, double lo, double hi);             // pass-through grad inside

// Softmax along the last axis; stabilized by max subtraction. Rows sum to 1.
Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);

// Euclidean normalization of every slice along the last axis. Slices whose
// norm falls below `eps` are divided by `eps` instead (guarded division).
Tensor l2_normalize(const Tensor& x, double eps = 1e-12);

struct MaxResult {
  Tensor values;
  std::vector<int64_t> argmax;  // index along the reduced axis; -1 when masked out
};

// Axis maxima; gradient routes to the first-occurring argmax only.
MaxResult max_over_axis(const Tensor& x, int64_t axis);

// Row maxima of a 2-D tensor restricted to `allowed` entries (size r*c,
// row-major). Rows with no allowed entry yield kNegInf and argmax -1.
MaxResult masked_row_max(const Tensor& x, const std::vector<uint8_t>& allowed);

Tensor mean_over_axis(const Tensor& x, int64_t axis);
Tensor sum_last_axis(const Tensor& x);
Tensor mean_all(const Tensor& x);  // rank-0
Tensor sum_all(const Tensor& x);   // rank-0

Tensor concat_rows(const std::vector<Tensor>& parts);  // 2-D along axis 0
Tensor stack(const std::vector<Tensor>& parts);        // new leading axis
Tensor gather_rows(const Tensor& x, const std::vector<int64_t>& rows);
Tensor slice_rows(const Tensor& x, int64_t begin, int64_t end);
Tensor pick_per_row(const Tensor& x, const std::vector<int64_t>& cols);
Tensor diag(const Tensor& x);  // [n,n] -> [n]
Tensor reshape(const Tensor& x, Shape shape);

}  // namespace curec
