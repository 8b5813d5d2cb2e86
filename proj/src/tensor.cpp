#include "pipcfr/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "pipcfr/errors.hpp"

namespace pipcfr {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConstMat = Eigen::Map<const RowMat>;

std::string shape_of(std::size_t r, std::size_t c) {
  std::ostringstream os;
  os << "(" << r << " x " << c << ")";
  return os.str();
}

[[noreturn]] void shape_fail(const char* op, const TensorImpl& a, const TensorImpl& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_of(a.rows, a.cols) +
                   " and " + shape_of(b.rows, b.cols));
}

std::shared_ptr<TensorImpl> new_impl(std::size_t rows, std::size_t cols) {
  auto impl = std::make_shared<TensorImpl>();
  impl->rows = rows;
  impl->cols = cols;
  impl->data.assign(rows * cols, 0.0);
  return impl;
}

// How b broadcasts against a.
enum class Bcast { Same, Row, Scalar };

Bcast broadcast_kind(const char* op, const TensorImpl& a, const TensorImpl& b) {
  if (a.rows == b.rows && a.cols == b.cols) return Bcast::Same;
  if (b.rows == 1 && b.cols == a.cols) return Bcast::Row;
  if (b.rows == 1 && b.cols == 1) return Bcast::Scalar;
  shape_fail(op, a, b);
}

// Reduce an output-shaped gradient onto a broadcast operand.
void reduce_into(const std::vector<double>& g, std::size_t rows, std::size_t cols, Bcast kind,
                 std::vector<double>& dst) {
  switch (kind) {
    case Bcast::Same:
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
      break;
    case Bcast::Row:
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) dst[c] += g[r * cols + c];
      break;
    case Bcast::Scalar: {
      double s = 0;
      for (double v : g) s += v;
      dst[0] += s;
      break;
    }
  }
}

inline double bvalue(const TensorImpl& b, Bcast kind, std::size_t r, std::size_t c,
                     std::size_t cols) {
  switch (kind) {
    case Bcast::Same: return b.data[r * cols + c];
    case Bcast::Row: return b.data[c];
    default: return b.data[0];
  }
}

template <typename Fwd, typename Bwd>
Tensor elementwise(const Tensor& a, Fwd fwd, Bwd bwd) {
  // bwd(x, y, g) -> contribution to dx given input x, output y, upstream g.
  auto* ai = a.impl();
  Tensor out = make_op_output(ai->rows, ai->cols, {&a}, [bwd](TensorImpl& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < self.data.size(); ++i)
      p.grad[i] += bwd(p.data[i], self.data[i], self.grad[i]);
  });
  auto& o = out.impl()->data;
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = fwd(ai->data[i]);
  return out;
}

}  // namespace

// --- Tensor basics -----------------------------------------------------------

Tensor Tensor::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
  auto impl = new_impl(rows, cols);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::constant(std::size_t rows, std::size_t cols, double value) {
  auto impl = new_impl(rows, cols);
  std::fill(impl->data.begin(), impl->data.end(), value);
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value) { return constant(1, 1, value); }

Tensor Tensor::from_data(std::size_t rows, std::size_t cols, std::vector<double> data,
                         bool requires_grad) {
  if (data.size() != rows * cols)
    throw ShapeError("from_data: " + std::to_string(data.size()) + " values for shape " +
                     shape_of(rows, cols));
  auto impl = std::make_shared<TensorImpl>();
  impl->rows = rows;
  impl->cols = cols;
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

std::size_t Tensor::rows() const { return impl_->rows; }
std::size_t Tensor::cols() const { return impl_->cols; }
std::size_t Tensor::size() const { return impl_->data.size(); }
std::string Tensor::shape_str() const { return shape_of(impl_->rows, impl_->cols); }

const std::vector<double>& Tensor::data() const { return impl_->data; }
std::vector<double>& Tensor::mutable_data() { return impl_->data; }
bool Tensor::requires_grad() const { return impl_->requires_grad; }
bool Tensor::has_grad() const { return impl_->grad.size() == impl_->data.size(); }

const std::vector<double>& Tensor::grad() const {
  const_cast<TensorImpl*>(impl_.get())->ensure_grad();
  return impl_->grad;
}

double Tensor::value() const {
  if (impl_->rows != 1 || impl_->cols != 1)
    throw ShapeError("value(): tensor is " + shape_str() + ", expected (1 x 1)");
  return impl_->data[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return impl_->data[r * impl_->cols + c];
}

Tensor Tensor::detach() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->rows = impl_->rows;
  impl->cols = impl_->cols;
  impl->data = impl_->data;
  impl->requires_grad = false;
  return Tensor(std::move(impl));
}

void Tensor::zero_grad() const {
  impl_->grad.assign(impl_->data.size(), 0.0);
}

void Tensor::backward() const {
  if (impl_->rows != 1 || impl_->cols != 1)
    throw ShapeError("backward(): loss must be scalar, got " + shape_str());

  // Post-order DFS over parents, then walk in reverse. Iterative to keep the
  // stack bounded on long chains.
  std::vector<TensorImpl*> topo;
  std::unordered_set<TensorImpl*> seen;
  std::vector<std::pair<TensorImpl*, std::size_t>> stack;
  stack.emplace_back(impl_.get(), 0);
  seen.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorImpl* p = node->parents[next++].get();
      if (p->backward_fn && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }

  impl_->ensure_grad();
  impl_->grad[0] += 1.0;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    if ((*it)->backward_fn) {
      (*it)->ensure_grad();
      (*it)->backward_fn(**it);
    }
  }
}

Tensor make_op_output(std::size_t rows, std::size_t cols, std::vector<const Tensor*> inputs,
                      std::function<void(TensorImpl&)> backward_fn) {
  auto impl = new_impl(rows, cols);
  bool any_grad = false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) any_grad = true;
  if (any_grad) {
    impl->requires_grad = true;
    for (const Tensor* t : inputs) impl->parents.push_back(t->impl_);
    impl->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(impl));
}

// --- ops ---------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  auto *ai = a.impl(), *bi = b.impl();
  if (ai->cols != bi->rows) shape_fail("matmul", *ai, *bi);
  const std::size_t n = ai->rows, k = ai->cols, m = bi->cols;
  Tensor out = make_op_output(n, m, {&a, &b}, [n, k, m](TensorImpl& self) {
    auto& A = *self.parents[0];
    auto& B = *self.parents[1];
    MapConstMat G(self.grad.data(), n, m);
    if (A.requires_grad) {
      A.ensure_grad();
      MapMat dA(A.grad.data(), n, k);
      MapConstMat Bm(B.data.data(), k, m);
      dA.noalias() += G * Bm.transpose();
    }
    if (B.requires_grad) {
      B.ensure_grad();
      MapMat dB(B.grad.data(), k, m);
      MapConstMat Am(A.data.data(), n, k);
      dB.noalias() += Am.transpose() * G;
    }
  });
  MapMat C(out.impl()->data.data(), n, m);
  MapConstMat A(ai->data.data(), n, k);
  MapConstMat B(bi->data.data(), k, m);
  C.noalias() = A * B;
  return out;
}

namespace {

template <typename Combine, typename DA, typename DB>
Tensor binary_broadcast(const char* name, const Tensor& a, const Tensor& b, Combine combine,
                        DA da, DB db) {
  auto *ai = a.impl(), *bi = b.impl();
  const Bcast kind = broadcast_kind(name, *ai, *bi);
  const std::size_t rows = ai->rows, cols = ai->cols;
  Tensor out = make_op_output(rows, cols, {&a, &b}, [kind, rows, cols, da, db](TensorImpl& self) {
    auto& A = *self.parents[0];
    auto& B = *self.parents[1];
    if (A.requires_grad) {
      A.ensure_grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
          const std::size_t i = r * cols + c;
          A.grad[i] += da(A.data[i], bvalue(B, kind, r, c, cols)) * self.grad[i];
        }
    }
    if (B.requires_grad) {
      B.ensure_grad();
      std::vector<double> gb(self.grad.size());
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
          const std::size_t i = r * cols + c;
          gb[i] = db(A.data[i], bvalue(B, kind, r, c, cols)) * self.grad[i];
        }
      reduce_into(gb, rows, cols, kind, B.grad);
    }
  });
  auto& o = out.impl()->data;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t i = r * cols + c;
      o[i] = combine(ai->data[i], bvalue(*bi, kind, r, c, cols));
    }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  // Symmetric broadcasting: the smaller operand may come first.
  if ((a.impl()->rows == 1 && b.impl()->rows > 1)) return add(b, a);
  return binary_broadcast(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if ((a.impl()->rows == 1 && b.impl()->rows > 1)) return add(neg(b), a);
  return binary_broadcast(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if ((a.impl()->rows == 1 && b.impl()->rows > 1)) return mul(b, a);
  return binary_broadcast(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor neg(const Tensor& a) {
  return elementwise(
      a, [](double x) { return -x; }, [](double, double, double g) { return -g; });
}

Tensor scale(const Tensor& a, double c) {
  return elementwise(
      a, [c](double x) { return c * x; }, [c](double, double, double g) { return c * g; });
}

Tensor add_scalar(const Tensor& a, double c) {
  return elementwise(
      a, [c](double x) { return x + c; }, [](double, double, double g) { return g; });
}

Tensor relu(const Tensor& a) {
  // Subgradient at 0 is 0.
  return elementwise(
      a, [](double x) { return x > 0 ? x : 0.0; },
      [](double x, double, double g) { return x > 0 ? g : 0.0; });
}

Tensor elu(const Tensor& a) {
  return elementwise(
      a, [](double x) { return x > 0 ? x : std::expm1(x); },
      [](double x, double y, double g) { return x > 0 ? g : (y + 1.0) * g; });
}

Tensor sigmoid(const Tensor& a) {
  return elementwise(
      a,
      [](double x) {
        return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      },
      [](double, double y, double g) { return y * (1.0 - y) * g; });
}

Tensor softplus(const Tensor& a) {
  return elementwise(
      a,
      [](double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](double x, double, double g) {
        const double s = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        return s * g;
      });
}

Tensor log(const Tensor& a) {
  for (double v : a.data())
    if (!(v > 0))
      throw std::domain_error("log: non-positive input " + std::to_string(v));
  return elementwise(
      a, [](double x) { return std::log(x); },
      [](double x, double, double g) { return g / x; });
}

Tensor exp(const Tensor& a) {
  return elementwise(
      a, [](double x) { return std::exp(x); },
      [](double, double y, double g) { return y * g; });
}

Tensor sqrt(const Tensor& a) {
  for (double v : a.data())
    if (!(v > 0))
      throw std::domain_error("sqrt: non-positive input " + std::to_string(v));
  return elementwise(
      a, [](double x) { return std::sqrt(x); },
      [](double, double y, double g) { return g / (2.0 * y); });
}

Tensor square(const Tensor& a) {
  return elementwise(
      a, [](double x) { return x * x; },
      [](double x, double, double g) { return 2.0 * x * g; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  return elementwise(
      a, [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](double x, double, double g) { return (x >= lo && x <= hi) ? g : 0.0; });
}

Tensor sum(const Tensor& a) {
  Tensor out = make_op_output(1, 1, {&a}, [](TensorImpl& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    const double g = self.grad[0];
    for (double& d : p.grad) d += g;
  });
  double s = 0;
  for (double v : a.data()) s += v;
  out.impl()->data[0] = s;
  return out;
}

Tensor mean(const Tensor& a) {
  const double inv_n = 1.0 / static_cast<double>(a.size());
  Tensor out = make_op_output(1, 1, {&a}, [inv_n](TensorImpl& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    const double g = self.grad[0] * inv_n;
    for (double& d : p.grad) d += g;
  });
  double s = 0;
  for (double v : a.data()) s += v;
  out.impl()->data[0] = s * inv_n;
  return out;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  auto *ai = a.impl(), *bi = b.impl();
  if (ai->rows != bi->rows) shape_fail("concat_cols", *ai, *bi);
  const std::size_t n = ai->rows, pa = ai->cols, pb = bi->cols;
  Tensor out = make_op_output(n, pa + pb, {&a, &b}, [n, pa, pb](TensorImpl& self) {
    auto& A = *self.parents[0];
    auto& B = *self.parents[1];
    if (A.requires_grad) {
      A.ensure_grad();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < pa; ++c)
          A.grad[r * pa + c] += self.grad[r * (pa + pb) + c];
    }
    if (B.requires_grad) {
      B.ensure_grad();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < pb; ++c)
          B.grad[r * pb + c] += self.grad[r * (pa + pb) + pa + c];
    }
  });
  auto& o = out.impl()->data;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < pa; ++c) o[r * (pa + pb) + c] = ai->data[r * pa + c];
    for (std::size_t c = 0; c < pb; ++c) o[r * (pa + pb) + pa + c] = bi->data[r * pb + c];
  }
  return out;
}

Tensor row_select(const Tensor& a, const std::vector<std::size_t>& idx) {
  auto* ai = a.impl();
  for (std::size_t i : idx)
    if (i >= ai->rows)
      throw ShapeError("row_select: index " + std::to_string(i) + " out of range for " +
                       a.shape_str());
  const std::size_t cols = ai->cols;
  Tensor out = make_op_output(idx.size(), cols, {&a}, [idx, cols](TensorImpl& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t c = 0; c < cols; ++c)
        p.grad[idx[r] * cols + c] += self.grad[r * cols + c];
  });
  auto& o = out.impl()->data;
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (std::size_t c = 0; c < cols; ++c) o[r * cols + c] = ai->data[idx[r] * cols + c];
  return out;
}

bool all_finite(const Tensor& a) {
  for (double v : a.data())
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace pipcfr
