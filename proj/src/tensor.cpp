#include "curec/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "curec/common.hpp"

namespace curec {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << "]";
  return os.str();
}

int64_t shape_size(const Shape& s) {
  int64_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw NumericError(msg);
}

void check_shape(const Shape& s) {
  for (auto e : s) require(e > 0, "tensor: non-positive extent in " + shape_str(s));
}

}  // namespace

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape) {
  check_shape(shape);
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(static_cast<size_t>(shape_size(shape)), 0.0);
  impl->shape = std::move(shape);
  return Tensor(std::move(impl));
}

Tensor Tensor::full(Shape shape, double value) {
  Tensor t = zeros(std::move(shape));
  std::fill(t.data().begin(), t.data().end(), value);
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> data) {
  check_shape(shape);
  require(shape_size(shape) == static_cast<int64_t>(data.size()),
          "tensor: data length " + std::to_string(data.size()) +
              " does not match shape " + shape_str(shape));
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, double mean) {
  Tensor t = zeros(std::move(shape));
  for (auto& v : t.data()) v = rng.normal(mean, stddev);
  return t;
}

std::vector<double>& Tensor::grad() {
  impl_->ensure_grad();
  return impl_->grad;
}

const std::vector<double>& Tensor::grad() const {
  impl_->ensure_grad();
  return impl_->grad;
}

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  if (on) impl_->ensure_grad();
  return *this;
}

void Tensor::zero_grad() {
  impl_->ensure_grad();
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

double Tensor::item() const {
  require(size() == 1, "tensor: item() on non-scalar " + shape_str(shape()));
  return impl_->data[0];
}

double Tensor::at(std::initializer_list<int64_t> idx) const {
  require(static_cast<int64_t>(idx.size()) == rank(), "tensor: at() rank mismatch");
  int64_t flat = 0;
  size_t axis = 0;
  for (auto i : idx) {
    flat = flat * impl_->shape[axis] + i;
    ++axis;
  }
  return impl_->data[static_cast<size_t>(flat)];
}

// ---- Tape ------------------------------------------------------------------

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::function<void()> adjoint) {
  adjoints_.push_back(std::move(adjoint));
}

void Tape::backward(const Tensor& loss) {
  require(loss.size() == 1, "backward: loss must be a single scalar, got " +
                                shape_str(loss.shape()));
  require(loss.requires_grad(), "backward: loss does not participate in this tape");
  loss.impl()->ensure_grad();
  loss.impl()->grad[0] = 1.0;
  for (auto it = adjoints_.rbegin(); it != adjoints_.rend(); ++it) (*it)();
}

TapeScope::TapeScope(Tape& tape) : prev_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = prev_; }

// ---- op plumbing ----------------------------------------------------------

namespace {

using ImplPtr = std::shared_ptr<TensorImpl>;

bool wants_grad(std::initializer_list<const Tensor*> inputs) {
  if (!Tape::active()) return false;
  bool any = false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) {
      t->impl()->ensure_grad();
      any = true;
    }
  }
  return any;
}

void track(Tensor& out) { out.set_requires_grad(true); }

void check_finite(const Tensor& t, const char* op) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite input");
  }
}

}  // namespace

// ---- primitives ------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.extent(1) == b.extent(0),
          "matmul: shape mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const int64_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  Tensor out = Tensor::zeros({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const double* brow = pb + p * n;
      double* orow = po + i * n;
      for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  if (wants_grad({&a, &b})) {
    track(out);
    Tape::active()->record([ai = a.impl(), bi = b.impl(), oi = out.impl(), m, k, n] {
      const double* g = oi->grad.data();
      if (ai->requires_grad) {
        double* da = ai->grad.data();
        const double* pb2 = bi->data.data();
        for (int64_t i = 0; i < m; ++i)
          for (int64_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (int64_t j = 0; j < n; ++j) acc += g[i * n + j] * pb2[p * n + j];
            da[i * k + p] += acc;
          }
      }
      if (bi->requires_grad) {
        double* db = bi->grad.data();
        const double* pa2 = ai->data.data();
        for (int64_t p = 0; p < k; ++p)
          for (int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int64_t i = 0; i < m; ++i) acc += pa2[i * k + p] * g[i * n + j];
            db[p * n + j] += acc;
          }
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require(a.rank() == 2, "transpose: expects 2-D, got " + shape_str(a.shape()));
  const int64_t r = a.extent(0), c = a.extent(1);
  Tensor out = Tensor::zeros({c, r});
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out.data()[j * r + i] = a.data()[i * c + j];
  if (wants_grad({&a})) {
    track(out);
    Tape::active()->record([ai = a.impl(), oi = out.impl(), r, c] {
      for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) ai->grad[i * c + j] += oi->grad[j * r + i];
    });
  }
  return out;
}

namespace {

Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* name,
                          double (*fwd)(double, double), double da_coef, double db_coef,
                          bool mul_rule) {
  require(a.shape() == b.shape(), std::string(name) + ": shape mismatch " +
                                      shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out = Tensor::zeros(a.shape());
  for (int64_t i = 0; i < a.size(); ++i)
    out.data()[i] = fwd(a.data()[i], b.data()[i]);
  if (wants_grad({&a, &b})) {
    track(out);
    Tape::active()->record([ai = a.impl(), bi = b.impl(), oi = out.impl(), da_coef,
                            db_coef, mul_rule] {
      const size_t n = oi->grad.size();
      if (ai->requires_grad)
        for (size_t i = 0; i < n; ++i)
          ai->grad[i] += oi->grad[i] * (mul_rule ? bi->data[i] : da_coef);
      if (bi->requires_grad)
        for (size_t i = 0; i < n; ++i)
          bi->grad[i] += oi->grad[i] * (mul_rule ? ai->data[i] : db_coef);
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(a, b, "add", [](double x, double y) { return x + y; }, 1.0, 1.0, false);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(a, b, "sub", [](double x, double y) { return x - y; }, 1.0, -1.0, false);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(a, b, "mul", [](double x, double y) { return x * y; }, 0.0, 0.0, true);
}

Tensor scale(const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape());
  for (int64_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * c;
  if (wants_grad({&a})) {
    track(out);
    Tape::active()->record([ai = a.impl(), oi = out.impl(), c] {
      for (size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i] * c;
    });
  }
  return out;
}

Tensor add_scalar(const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape());
  for (int64_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] + c;
  if (wants_grad({&a})) {
    track(out);
    Tape::active()->record([ai = a.impl(), oi = out.impl()] {
      for (size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i];
    });
  }
  return out;
}

Tensor add_rows(const Tensor& x, const Tensor& bias) {
  require(x.rank() == 2 && bias.rank() == 1 && x.extent(1) == bias.extent(0),
          "add_rows: shape mismatch " + shape_str(x.shape()) + " + " + shape_str(bias.shape()));
  const int64_t r = x.extent(0), c = x.extent(1);
  Tensor out = Tensor::zeros(x.shape());
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out.data()[i * c + j] = x.data()[i * c + j] + bias.data()[j];
  if (wants_grad({&x, &bias})) {
    track(out);
    Tape::active()->record([xi = x.impl(), bi = bias.impl(), oi = out.impl(), r, c] {
      if (xi->requires_grad)
        for (size_t i = 0; i < oi->grad.size(); ++i) xi->grad[i] += oi->grad[i];
      if (bi->requires_grad)
        for (int64_t i = 0; i < r; ++i)
          for (int64_t j = 0; j < c; ++j) bi->grad[j] += oi->grad[i * c + j];
    });
  }
  return out;
}

namespace {

// unary elementwise with derivative computed from (x, y)
template <typename F, typename DF>
Tensor unary_elementwise(const Tensor& x, F fwd, DF dfdx) {
  Tensor out = Tensor::zeros(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) out.data()[i] = fwd(x.data()[i]);
  if (wants_grad({&x})) {
    track(out);
    Tape::active()->record([xi = x.impl(), oi = out.impl(), dfdx] {
      for (size_t i = 0; i < oi->grad.size(); ++i)
        xi->grad[i] += oi->grad[i] * dfdx(xi->data[i], oi->data[i]);
    });
  }
  return out;
}

}  // namespace

Tensor relu(const Tensor& x) {
  // subgradient at 0 is 0
  return unary_elementwise(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh_op(const Tensor& x) {
  return unary_elementwise(
      x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor log_op(const Tensor& x) {
  for (double v : x.data())
    require(v > 0.0, "log: non-positive input " + std::to_string(v));
  return unary_elementwise(
      x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  Tensor out = Tensor::zeros(x.shape());
  for (int64_t i = 0; i < x.size(); ++i)
    out.data()[i] = std::min(hi, std::max(lo, x.data()[i]));
  if (wants_grad({&x})) {
    track(out);
    Tape::active()->record([xi = x.impl(), oi = out.impl(), lo, hi] {
      for (size_t i = 0; i < oi->grad.size(); ++i)
        if (xi->data[i] >= lo && xi->data[i] <= hi) xi->grad[i] += oi->grad[i];
    });
  }
  return out;
}

namespace {

// rows = product of leading extents, cols = last extent
std::pair<int64_t, int64_t> flatten_rows(const Tensor& x) {
  require(x.rank() >= 1, "softmax/normalize: rank-0 input");
  const int64_t cols = x.extent(x.rank() - 1);
  return {x.size() / cols, cols};
}

}  // namespace

Tensor softmax_rows(const Tensor& x) {
  check_finite(x, "softmax_rows");
  auto [rows, cols] = flatten_rows(x);
  Tensor out = Tensor::zeros(x.shape());
  for (int64_t i = 0; i < rows; ++i) {
    const double* xr = x.data().data() + i * cols;
    double* yr = out.data().data() + i * cols;
    double mx = xr[0];
    for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
    double sum = 0.0;
    for (int64_t j = 0; j < cols; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      sum += yr[j];
    }
    for (int64_t j = 0; j < cols; ++j) yr[j] /= sum;
  }
  if (wants_grad({&x})) {
    track(out);
    Tape::active()->record([xi = x.impl(), oi = out.impl(), rows = rows, cols = cols] {
      for (int64_t i = 0; i < rows; ++i) {
        const double* y = oi->data.data() + i * cols;
        const double* g = oi->grad.data() + i * cols;
        double dot = 0.0;
        for (int64_t j = 0; j < cols; ++j) dot += g[j] * y[j];
        double* dx = xi->grad.data() + i * cols;
        for (int64_t j = 0; j < cols; ++j) dx[j] += y[j] * (g[j] - dot);
      }
    });
  }
  return out;
}

Tensor log_softmax_rows(const Tensor& x) {
  check_finite(x, "log_softmax_rows");
  auto [rows, cols] = flatten_rows(x);
  Tensor out = Tensor::zeros(x.shape());
  for (int64_t i = 0; i < rows; ++i) {
    const double* xr = x.data().data() + i * cols;
    double* yr = out.data().data() + i * cols;
    double mx = xr[0];
    for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
    double sum = 0.0;
    for (int64_t j = 0; j < cols; ++j) sum += std::exp(xr[j] - mx);
    const double lse = mx + std::log(sum);
    for (int64_t j = 0; j < cols; ++j) yr[j] = xr[j] - lse;
  }
  if (wants_grad({&x})) {
    track(out);
    Tape::active()->record([xi = x.impl(), oi = out.impl(), rows = rows, cols = cols] {
      for (int64_t i = 0; i < rows; ++i) {
        const double* y = oi->data.data() + i * cols;
        const double* g = oi->grad.data() + i * cols;
        double gsum = 0.0;
        for (int64_t j = 0; j < cols; ++j) gsum += g[j];
        double* dx = xi->grad.data() + i * cols;
        for (int64_t j = 0; j < cols; ++j) dx[j] += g[j] - std::exp(y[j]) * gsum;
      }
    });
  }
  return out;
}

Tensor l2_normalize(const Tensor& x, double eps) {
  auto [rows, cols] = flatten_rows(x);
  Tensor out = Tensor::zeros(x.shape());
  std::vector<double> norms(static_cast<size_t>(rows));
  for (int64_t i = 0; i < rows; ++i) {
    const double* xr = x.data().data() + i * cols;
    double sq = 0.0;
    for (int64_t j = 0; j < cols; ++j) sq += xr[j] * xr[j];
    const double n = std::max(std::sqrt(sq), eps);
    norms[static_cast<size_t>(i)] = std::sqrt(sq);
    double* yr = out.data().data() + i * cols;
    for (int64_t j = 0; j < cols; ++j) yr[j] = xr[j] / n;
  }
  if (wants_grad({&x})) {
    track(out);
    Tape::active()->record(
        [xi = x.impl(), oi = out.impl(), norms, eps, rows = rows, cols = cols] {
          for (int64_t i = 0; i < rows; ++i) {
            const double* y = oi->data.data() + i * cols;
            const double* g = oi->grad.data() + i * cols;
            double* dx = xi->grad.data() + i * cols;
            const double n = norms[static_cast<size_t>(i)];
            if (n > eps) {
              double dot = 0.0;
              for (int64_t j = 0; j < cols; ++j) dot += g[j] * y[j];
              for (int64_t j = 0; j < cols; ++j) dx[j] += (g[j] - y[j] * dot) / n;
            } else {
              // guarded branch: y = x / eps is linear
              for (int64_t j = 0; j < cols; ++j) dx[j] += g[j] / eps;
            }
          }
        });
  }
  return out;
}

MaxResult max_over_axis(const Tensor& x, int64_t axis) {
  require(axis >= 0 && axis < x.rank(),
          "max_over_axis: axis " + std::to_string(axis) + " out of range for " +
              shape_str(x.shape()));
  const int64_t len = x.extent(axis);
  require(len > 0, "max_over_axis: empty axis");
  int64_t outer = 1, inner = 1;
  for (int64_t a = 0; a < axis; ++a) outer *= x.extent(a);
  for (int64_t a = axis + 1; a < x.rank(); ++a) inner *= x.extent(a);

  Shape out_shape;
  for (int64_t a = 0; a < x.rank(); ++a)
    if (a != axis) out_shape.push_back(x.extent(a));
  Tensor values = Tensor::zeros(out_shape.empty() ? Shape{} : out_shape);
  std::vector<int64_t> argmax(static_cast<size_t>(outer * inner), 0);

  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t in = 0; in < inner; ++in) {
      double best = x.data()[static_cast<size_t>((o * len) * inner + in)];
      int64_t best_k = 0;
      for (int64_t k2 = 1; k2 < len; ++k2) {
        const double v = x.data()[static_cast<size_t>((o * len + k2) * inner + in)];
        if (v > best) {  // strict: ties keep the first occurrence
          best = v;
          best_k = k2;
        }
      }
      values.data()[static_cast<size_t>(o * inner + in)] = best;
      argmax[static_cast<size_t>(o * inner + in)] = best_k;
    }
  }
  if (wants_grad({&x})) {
    track(values);
    Tape::active()->record([xi = x.impl(), oi = values.impl(), argmax, outer, inner, len] {
      (void)len;
      for (int64_t o = 0; o < outer; ++o)
        for (int64_t in = 0; in < inner; ++in) {
          const int64_t k2 = argmax[static_cast<size_t>(o * inner + in)];
          xi->grad[static_cast<size_t>((o * len + k2) * inner + in)] +=
              oi->grad[static_cast<size_t>(o * inner + in)];
        }
    });
  }
  return {values, std::move(argmax)};
}

MaxResult masked_row_max(const Tensor& x, const std::vector<uint8_t>& allowed) {
  require(x.rank() == 2, "masked_row_max: expects 2-D, got " + shape_str(x.shape()));
  const int64_t r = x.extent(0), c = x.extent(1);
  require(static_cast<int64_t>(allowed.size()) == r * c,
          "masked_row_max: mask length mismatch");
  Tensor values = Tensor::zeros({r});
  std::vector<int64_t> argmax(static_cast<size_t>(r), -1);
  for (int64_t i = 0; i < r; ++i) {
    double best = kNegInf;
    int64_t best_j = -1;
    for (int64_t j = 0; j < c; ++j) {
      if (!allowed[static_cast<size_t>(i * c + j)]) continue;
      const double v = x.data()[static_cast<size_t>(i * c + j)];
      if (best_j < 0 || v > best) {
        best = v;
        best_j = j;
      }
    }
    values.data()[static_cast<size_t>(i)] = best;
    argmax[static_cast<size_t>(i)] = best_j;
  }
  if (wants_grad({&x})) {
    track(values);
    Tape::active()->record([xi = x.impl(), oi = values.impl(), argmax, c] {
      for (size_t i = 0; i < argmax.size(); ++i) {
        if (argmax[i] < 0) continue;  // fully-masked row: no grad path
        xi->grad[i * static_cast<size_t>(c) + static_cast<size_t>(argmax[i])] += oi->grad[i];
      }
    });
  }
  return {values, std::move(argmax)};
}

Tensor mean_over_axis(const Tensor& x, int64_t axis) {
  require(axis >= 0 && axis < x.rank(), "mean_over_axis: bad axis");
  const int64_t len = x.extent(axis);
  int64_t outer = 1, inner = 1;
  for (int64_t a = 0; a < axis; ++a) outer *= x.extent(a);
  for (int64_t a = axis + 1; a < x.rank(); ++a) inner *= x.extent(a);
  Shape out_shape;
  for (int64_t a = 0; a < x.rank(); ++a)
    if (a != axis) out_shape.push_back(x.extent(a));
  Tensor out = Tensor::zeros(out_shape.empty() ? Shape{} : out_shape);
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t k2 = 0; k2 < len; ++k2)
      for (int64_t in = 0; in < inner; ++in)
        out.data()[static_cast<size_t>(o * inner + in)] +=
            x.data()[static_cast<size_t>((o * len + k2) * inner + in)];
  for (auto& v : out.data()) v /= static_cast<double>(len);
  if (wants_grad({&x})) {
    track(out);
    Tape::active()->record([xi = x.impl(), oi = out.impl(), outer, inner, len] {
      const double inv = 1.0 / static_cast<double>(len);
      for (int64_t o = 0; o < outer; ++o)
        for (int64_t k2 = 0; k2 < len; ++k2)
          for (int64_t in = 0; in < inner; ++in)
            xi->grad[static_cast<size_t>((o * len + k2) * inner + in)] +=
                oi->grad[static_cast<size_t>(o * inner + in)] * inv;
    });
  }
  return out;
}

Tensor sum_last_axis(const Tensor& x) {
  auto [rows, cols] = flatten_rows(x);
  Shape out_shape(x.shape().begin(), x.shape().end() - 1);
  Tensor out = Tensor::zeros(out_shape.empty() ? Shape{} : out_shape);
  for (int64_t i = 0; i < rows; ++i) {
    double acc = 0.0;
    for (int64_t j = 0; j < cols; ++j) acc += x.data()[static_cast<size_t>(i * cols + j)];
    out.data()[static_cast<size_t>(i)] = acc;
  }
  if (wants_grad({&x})) {
    track(out);
    Tape::active()->record([xi = x.impl(), oi = out.impl(), rows = rows, cols = cols] {
      for (int64_t i = 0; i < rows; ++i)
        for (int64_t j = 0; j < cols; ++j)
          xi->grad[static_cast<size_t>(i * cols + j)] += oi->grad[static_cast<size_t>(i)];
    });
  }
  return out;
}

Tensor sum_all(const Tensor& x) {
  Tensor out = Tensor::zeros({});
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  out.data()[0] = acc;
  if (wants_grad({&x})) {
    track(out);
    Tape::active()->record([xi = x.impl(), oi = out.impl()] {
      for (auto& g : xi->grad) g += oi->grad[0];
    });
  }
  return out;
}

Tensor mean_all(const Tensor& x) {
  const double inv = 1.0 / static_cast<double>(x.size());
  return scale(sum_all(x), inv);
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_rows: no parts");
  const int64_t cols = parts[0].extent(1);
  int64_t rows = 0;
  for (const auto& p : parts) {
    require(p.rank() == 2 && p.extent(1) == cols,
            "concat_rows: incompatible part " + shape_str(p.shape()));
    rows += p.extent(0);
  }
  Tensor out = Tensor::zeros({rows, cols});
  int64_t at = 0;
  for (const auto& p : parts) {
    std::copy(p.data().begin(), p.data().end(), out.data().begin() + at);
    at += p.size();
  }
  bool any = false;
  for (const auto& p : parts)
    if (p.requires_grad()) any = true;
  if (Tape::active() && any) {
    std::vector<ImplPtr> impls;
    impls.reserve(parts.size());
    for (const auto& p : parts) {
      if (p.requires_grad()) p.impl()->ensure_grad();
      impls.push_back(p.impl());
    }
    track(out);
    Tape::active()->record([impls, oi = out.impl()] {
      size_t at2 = 0;
      for (const auto& pi : impls) {
        if (pi->requires_grad)
          for (size_t i = 0; i < pi->data.size(); ++i) pi->grad[i] += oi->grad[at2 + i];
        at2 += pi->data.size();
      }
    });
  }
  return out;
}

Tensor stack(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "stack: no parts");
  const Shape& s0 = parts[0].shape();
  for (const auto& p : parts)
    require(p.shape() == s0, "stack: incompatible part " + shape_str(p.shape()));
  Shape out_shape;
  out_shape.push_back(static_cast<int64_t>(parts.size()));
  out_shape.insert(out_shape.end(), s0.begin(), s0.end());
  Tensor out = Tensor::zeros(out_shape);
  int64_t at = 0;
  for (const auto& p : parts) {
    std::copy(p.data().begin(), p.data().end(), out.data().begin() + at);
    at += p.size();
  }
  bool any = false;
  for (const auto& p : parts)
    if (p.requires_grad()) any = true;
  if (Tape::active() && any) {
    std::vector<ImplPtr> impls;
    for (const auto& p : parts) {
      if (p.requires_grad()) p.impl()->ensure_grad();
      impls.push_back(p.impl());
    }
    track(out);
    Tape::active()->record([impls, oi = out.impl()] {
      size_t at2 = 0;
      for (const auto& pi : impls) {
        if (pi->requires_grad)
          for (size_t i = 0; i < pi->data.size(); ++i) pi->grad[i] += oi->grad[at2 + i];
        at2 += pi->data.size();
      }
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& x, const std::vector<int64_t>& rows) {
  require(x.rank() == 2, "gather_rows: expects 2-D");
  const int64_t n = x.extent(0), c = x.extent(1);
  for (auto r : rows)
    require(r >= 0 && r < n, "gather_rows: row id " + std::to_string(r) +
                                 " out of range [0," + std::to_string(n) + ")");
  Tensor out = Tensor::zeros({static_cast<int64_t>(rows.size()), c});
  for (size_t i = 0; i < rows.size(); ++i)
    std::copy_n(x.data().begin() + rows[i] * c, c, out.data().begin() + static_cast<int64_t>(i) * c);
  if (wants_grad({&x})) {
    track(out);
    Tape::active()->record([xi = x.impl(), oi = out.impl(), rows, c] {
      // duplicated ids accumulate
      for (size_t i = 0; i < rows.size(); ++i)
        for (int64_t j = 0; j < c; ++j)
          xi->grad[static_cast<size_t>(rows[i] * c + j)] +=
              oi->grad[i * static_cast<size_t>(c) + static_cast<size_t>(j)];
    });
  }
  return out;
}

Tensor slice_rows(const Tensor& x, int64_t begin, int64_t end) {
  require(x.rank() == 2 && begin >= 0 && end <= x.extent(0) && begin < end,
          "slice_rows: bad range [" + std::to_string(begin) + "," + std::to_string(end) +
              ") for " + shape_str(x.shape()));
  const int64_t c = x.extent(1);
  Tensor out = Tensor::zeros({end - begin, c});
  std::copy_n(x.data().begin() + begin * c, (end - begin) * c, out.data().begin());
  if (wants_grad({&x})) {
    track(out);
    Tape::active()->record([xi = x.impl(), oi = out.impl(), begin, c] {
      for (size_t i = 0; i < oi->grad.size(); ++i)
        xi->grad[static_cast<size_t>(begin * c) + i] += oi->grad[i];
    });
  }
  return out;
}

Tensor pick_per_row(const Tensor& x, const std::vector<int64_t>& cols) {
  require(x.rank() == 2, "pick_per_row: expects 2-D");
  const int64_t r = x.extent(0), c = x.extent(1);
  require(static_cast<int64_t>(cols.size()) == r, "pick_per_row: one column id per row");
  for (auto j : cols) require(j >= 0 && j < c, "pick_per_row: column out of range");
  Tensor out = Tensor::zeros({r});
  for (int64_t i = 0; i < r; ++i)
    out.data()[static_cast<size_t>(i)] = x.data()[static_cast<size_t>(i * c + cols[static_cast<size_t>(i)])];
  if (wants_grad({&x})) {
    track(out);
    Tape::active()->record([xi = x.impl(), oi = out.impl(), cols, c] {
      for (size_t i = 0; i < cols.size(); ++i)
        xi->grad[i * static_cast<size_t>(c) + static_cast<size_t>(cols[i])] += oi->grad[i];
    });
  }
  return out;
}

Tensor diag(const Tensor& x) {
  require(x.rank() == 2 && x.extent(0) == x.extent(1),
          "diag: expects square 2-D, got " + shape_str(x.shape()));
  const int64_t n = x.extent(0);
  Tensor out = Tensor::zeros({n});
  for (int64_t i = 0; i < n; ++i)
    out.data()[static_cast<size_t>(i)] = x.data()[static_cast<size_t>(i * n + i)];
  if (wants_grad({&x})) {
    track(out);
    Tape::active()->record([xi = x.impl(), oi = out.impl(), n] {
      for (int64_t i = 0; i < n; ++i)
        xi->grad[static_cast<size_t>(i * n + i)] += oi->grad[static_cast<size_t>(i)];
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  require(shape_size(shape) == x.size(), "reshape: size mismatch " + shape_str(x.shape()) +
                                             " -> " + shape_str(shape));
  Tensor out = Tensor::from(std::move(shape), x.data());
  if (wants_grad({&x})) {
    track(out);
    Tape::active()->record([xi = x.impl(), oi = out.impl()] {
      for (size_t i = 0; i < oi->grad.size(); ++i) xi->grad[i] += oi->grad[i];
    });
  }
  return out;
}

}  // namespace curec
