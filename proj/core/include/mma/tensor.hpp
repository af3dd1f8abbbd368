#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

namespace mma {

namespace detail {
struct TensorNode;
}

/// Dense row-major tensor of doubles with reverse-mode automatic
/// differentiation. Copying a Tensor copies a handle; the underlying buffer
/// is immutable after creation except for the grad slot (and leaf values,
/// which an optimizer may update between forward passes).
///
/// Every op validates its result for NaN/Inf and throws mma::Error on
/// overflow instead of propagating silent non-finite values. Reductions use
/// a fixed ascending-index summation order, so forward results are
/// bit-identical across runs for identical inputs.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<std::size_t> shape, double value,
                     bool requires_grad = false);
  static Tensor from_values(std::vector<std::size_t> shape,
                            std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<std::size_t>& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  bool requires_grad() const;
  bool is_leaf() const;

  const std::vector<double>& values() const;
  /// Leaf tensors only; used by optimizers to update parameters in place.
  std::vector<double>& mutable_values();

  /// Accumulated gradient. For a requires_grad tensor that has not received
  /// any gradient yet this is a zero vector of matching size.
  std::vector<double> grad() const;
  bool has_grad() const;
  void zero_grad();

  /// Value of a single-element tensor.
  double item() const;
  double at(const std::vector<std::size_t>& index) const;

  detail::TensorNode* node() const { return node_.get(); }

 private:
  friend struct OpAccess;
  explicit Tensor(std::shared_ptr<detail::TensorNode> node);
  std::shared_ptr<detail::TensorNode> node_;
};

/// While alive, newly built ops do not record the tape (forward only).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Elementwise ops. Binary kinds broadcast numpy-style: shapes are
// right-aligned and a size-1 axis stretches; gradients sum over stretched
// axes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);  // subgradient at 0 is 0
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sigmoid(const Tensor& a);

/// Batched matrix product: (.., m, k) x (.., k, n) -> (.., m, n); batch axes
/// broadcast like elementwise ops.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Swap the last two axes (rank >= 2).
Tensor transpose_last2(const Tensor& a);

/// Numerically stable softmax over the last axis; each slice sums to 1.
Tensor softmax_lastdim(const Tensor& a);

Tensor reshape(const Tensor& a, std::vector<std::size_t> shape);

/// out[q] = a[rows[q]] over axis 0. Gradient scatters additively back, so a
/// row repeated r times accumulates r gradients.
Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& rows);

Tensor reduce_sum_all(const Tensor& a);   // -> shape {1}
Tensor reduce_mean_all(const Tensor& a);  // -> shape {1}
Tensor reduce_sum_axis(const Tensor& a, std::size_t axis);
/// Max over one axis; gradient flows to the first (smallest-index) argmax.
Tensor reduce_max_axis(const Tensor& a, std::size_t axis);

/// Mean cross-entropy of rows of `logits` (shape (B, K), or (K,) for B=1)
/// against integer labels in [0, K).
Tensor cross_entropy_with_logits(const Tensor& logits,
                                 const std::vector<int>& labels);

/// Mean binary cross-entropy with logits, computed in the stable
/// max(l,0) - l*t + log1p(exp(-|l|)) form. `targets` is constant data.
Tensor bce_with_logits(const Tensor& logits, const std::vector<double>& targets);

/// Mean smooth-L1 (Huber) distance between `pred` and constant `targets`.
Tensor smooth_l1(const Tensor& pred, const std::vector<double>& targets,
                 double beta = 1.0);

/// Reverse pass from a scalar loss. Populates grads on every reachable
/// requires_grad leaf and consumes the tape: running it again over the same
/// graph throws; rebuild the graph (re-run forward) to reset.
void backward(const Tensor& loss);

/// Compares the analytic gradient of a scalar-valued function against
/// central finite differences. Returns
///   max_i |analytic_i - numeric_i| / max(1, |analytic_i|, |numeric_i|).
double grad_check(const std::function<Tensor(const Tensor&)>& fn,
                  const Tensor& x, double eps = 1e-5);

}  // namespace mma
