#pragma once

// Dense fp64 tensors with tape-free reverse-mode differentiation.
//
// A Tensor is a shared handle: copies alias the same storage. Every op that
// sees an input with requires_grad records a backward closure on its output;
// backward() walks the resulting DAG in reverse topological order exactly
// once per node. Leaves keep accumulating into grad() until zero_grad().

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace coadapt::autograd {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

struct TensorImpl;

struct GradFn {
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  // Receives the gradient w.r.t. the op output and accumulates into inputs.
  std::function<void(std::span<const double>)> apply;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient arrives
  bool requires_grad = false;
  std::shared_ptr<GradFn> grad_fn;

  void accumulate_grad(std::span<const double> g);
  std::span<double> ensure_grad();
};

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const;
  std::size_t dim(std::size_t i) const { return shape().at(i); }
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<const double> data() const;
  /// Mutable view for optimizers and initializers; never use on graph nodes.
  std::span<double> mutable_data();
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  bool is_leaf() const;
  /// Value copy with fresh storage and no history.
  Tensor clone() const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Disables graph recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Populates grad() of every reachable leaf with d(loss)/d(leaf).
/// Throws std::invalid_argument unless `loss` holds exactly one element.
void backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Ops. Shapes must match exactly; there is no broadcasting.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor exp(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Value-identical tensor through which no gradient flows.
Tensor detach(const Tensor& a);

/// Log-softmax over axis 0 of a [C,H,W] tensor, computed with the per-pixel
/// max subtracted. Throws std::domain_error on non-finite input.
Tensor log_softmax_channels(const Tensor& x);

/// -(1/n) * sum over pixels with label != ignore_id of logp[label, pixel],
/// n = number of such pixels. Returns 0 (zero gradient) when n == 0.
/// `logp` is [C,H,W]; `labels` has H*W entries.
Tensor masked_nll(const Tensor& logp, std::span<const int> labels, int ignore_id);

/// Same-size cross-correlation of x [Cin,H,W] with w [Cout,Cin,k,k] plus
/// bias b [Cout]. k must be odd and padding == (k-1)/2.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int padding);

}  // namespace coadapt::autograd
