#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace pipcfr {

struct TensorImpl;

// Dense 2-D row-major tensor with define-by-run reverse-mode autodiff.
//
// Every op output keeps shared ownership of its inputs, so the graph for a
// minibatch lives exactly as long as a handle to its outputs and is freed
// when the loss tensor goes out of scope. Parameters are long-lived leaf
// tensors with requires_grad set; backward() accumulates into their grad
// buffers (additive across calls until zero_grad()).
//
// Shapes are [rows, cols]; a scalar is [1, 1]. Broadcasting is supported for
// a [1, cols] or [1, 1] operand against the leading batch dimension.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false);
  static Tensor constant(std::size_t rows, std::size_t cols, double value);
  static Tensor scalar(double value);
  static Tensor from_data(std::size_t rows, std::size_t cols, std::vector<double> data,
                          bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  std::size_t rows() const;
  std::size_t cols() const;
  std::size_t size() const;
  std::string shape_str() const;

  const std::vector<double>& data() const;
  std::vector<double>& mutable_data();  // in-place parameter updates; leaf tensors only
  bool requires_grad() const;
  bool has_grad() const;
  const std::vector<double>& grad() const;

  double value() const;        // [1,1] only
  double at(std::size_t r, std::size_t c) const;

  // Same data, no graph, requires_grad off.
  Tensor detach() const;

  void zero_grad() const;
  // Reverse pass from a scalar; grads accumulate into requires_grad leaves.
  void backward() const;

  TensorImpl* impl() const { return impl_.get(); }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;

  friend Tensor make_op_output(std::size_t rows, std::size_t cols,
                               std::vector<const Tensor*> inputs,
                               std::function<void(TensorImpl&)> backward_fn);
};

struct TensorImpl {
  std::size_t rows = 0, cols = 0;
  std::vector<double> data;
  std::vector<double> grad;  // allocated lazily during backward
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void(TensorImpl&)> backward_fn;  // reads this->grad, writes parents' grads

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

// Creates an op output wired into the graph iff any input requires grad.
Tensor make_op_output(std::size_t rows, std::size_t cols, std::vector<const Tensor*> inputs,
                      std::function<void(TensorImpl&)> backward_fn);

// --- forward ops ------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);

Tensor relu(const Tensor& a);
Tensor elu(const Tensor& a);  // alpha = 1
Tensor sigmoid(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor log(const Tensor& a);   // domain: strictly positive entries
Tensor exp(const Tensor& a);
Tensor sqrt(const Tensor& a);  // domain: strictly positive entries
Tensor square(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);  // zero grad outside [lo, hi]

Tensor sum(const Tensor& a);   // -> [1,1]
Tensor mean(const Tensor& a);  // -> [1,1]

Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor row_select(const Tensor& a, const std::vector<std::size_t>& idx);

bool all_finite(const Tensor& a);

}  // namespace pipcfr
