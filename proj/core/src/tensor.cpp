#include "coadapt/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace coadapt::autograd {
namespace {

thread_local bool g_grad_enabled = true;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

bool needs_graph(std::initializer_list<const Tensor*> inputs) {
  if (!g_grad_enabled) {
    return false;
  }
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

// Builds the output tensor and, when any input tracks gradients, attaches the
// backward closure. `make_apply` receives a weak handle to the output so the
// closure can read output values without keeping the output alive.
template <typename MakeApply>
Tensor make_result(Shape shape, std::vector<double> data,
                   std::initializer_list<const Tensor*> inputs, MakeApply&& make_apply) {
  Tensor out(std::move(shape), std::move(data));
  if (needs_graph(inputs)) {
    auto fn = std::make_shared<GradFn>();
    for (const Tensor* t : inputs) {
      fn->inputs.push_back(t->impl());
    }
    std::weak_ptr<TensorImpl> weak_out = out.impl();
    fn->apply = make_apply(std::move(weak_out));
    out.impl()->requires_grad = true;
    out.impl()->grad_fn = std::move(fn);
  }
  return out;
}

void accumulate_if(const Tensor& t, std::span<const double> g) {
  if (t.requires_grad()) {
    t.impl()->accumulate_grad(g);
  }
}

void check_finite(std::span<const double> values, const char* op) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      std::ostringstream msg;
      msg << op << ": non-finite input " << values[i] << " at flat index " << i;
      throw std::domain_error(msg.str());
    }
  }
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (const auto d : shape) {
    n *= d;
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    s += (i ? "," : "") + std::to_string(shape[i]);
  }
  return s + "]";
}

void TensorImpl::accumulate_grad(std::span<const double> g) {
  auto dst = ensure_grad();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] += g[i];
  }
}

std::span<double> TensorImpl::ensure_grad() {
  if (grad.empty()) {
    grad.assign(data.size(), 0.0);
  }
  return grad;
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : impl_(std::make_shared<TensorImpl>()) {
  if (data.size() != shape_numel(shape)) {
    throw std::invalid_argument("Tensor: data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_string(shape));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

const Shape& Tensor::shape() const { return impl_->shape; }
std::size_t Tensor::numel() const { return impl_->data.size(); }
std::span<const double> Tensor::data() const { return impl_->data; }
std::span<double> Tensor::mutable_data() { return impl_->data; }

double Tensor::item() const {
  if (numel() != 1) {
    throw std::invalid_argument("item(): tensor has " + std::to_string(numel()) + " elements");
  }
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { impl_->requires_grad = flag; }
bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }
std::span<const double> Tensor::grad() const { return impl_->grad; }
void Tensor::zero_grad() { impl_->grad.clear(); }
bool Tensor::is_leaf() const { return !impl_->grad_fn; }

Tensor Tensor::clone() const { return Tensor(impl_->shape, impl_->data, impl_->requires_grad); }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar");
  }
  if (!loss.requires_grad()) {
    return;
  }
  // Iterative post-order DFS yields a topological order.
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> visited;
  std::vector<std::pair<TensorImpl*, std::size_t>> stack;
  stack.emplace_back(loss.impl().get(), 0);
  visited.insert(loss.impl().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (node->grad_fn && next < node->grad_fn->inputs.size()) {
      TensorImpl* child = node->grad_fn->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  loss.impl()->accumulate_grad(std::vector<double>{1.0});
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* node = *it;
    if (!node->grad_fn || node->grad.empty()) {
      continue;
    }
    node->grad_fn->apply(node->grad);
    // Interior gradients are not retained.
    node->grad.clear();
    node->grad.shrink_to_fit();
  }
}

// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = x[i] + y[i];
  }
  return make_result(a.shape(), std::move(out), {&a, &b}, [a, b](auto) {
    return [a, b](std::span<const double> g) {
      accumulate_if(a, g);
      accumulate_if(b, g);
    };
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = x[i] - y[i];
  }
  return make_result(a.shape(), std::move(out), {&a, &b}, [a, b](auto) {
    return [a, b](std::span<const double> g) {
      accumulate_if(a, g);
      if (b.requires_grad()) {
        std::vector<double> neg(g.size());
        std::transform(g.begin(), g.end(), neg.begin(), [](double v) { return -v; });
        b.impl()->accumulate_grad(neg);
      }
    };
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = x[i] * y[i];
  }
  return make_result(a.shape(), std::move(out), {&a, &b}, [a, b](auto) {
    return [a, b](std::span<const double> g) {
      std::vector<double> tmp(g.size());
      if (a.requires_grad()) {
        const auto y = b.data();
        for (std::size_t i = 0; i < g.size(); ++i) tmp[i] = g[i] * y[i];
        a.impl()->accumulate_grad(tmp);
      }
      if (b.requires_grad()) {
        const auto x = a.data();
        for (std::size_t i = 0; i < g.size(); ++i) tmp[i] = g[i] * x[i];
        b.impl()->accumulate_grad(tmp);
      }
    };
  });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.numel());
  const auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = x[i] * s;
  }
  return make_result(a.shape(), std::move(out), {&a}, [a, s](auto) {
    return [a, s](std::span<const double> g) {
      std::vector<double> tmp(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) tmp[i] = g[i] * s;
      a.impl()->accumulate_grad(tmp);
    };
  });
}

Tensor exp(const Tensor& a) {
  std::vector<double> out(a.numel());
  const auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::exp(x[i]);
  }
  return make_result(a.shape(), std::move(out), {&a}, [a](std::weak_ptr<TensorImpl> self) {
    return [a, self](std::span<const double> g) {
      const auto out = self.lock();
      const auto& y = out->data;
      std::vector<double> tmp(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) tmp[i] = g[i] * y[i];
      a.impl()->accumulate_grad(tmp);
    };
  });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.numel());
  const auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = x[i] > 0.0 ? x[i] : 0.0;
  }
  return make_result(a.shape(), std::move(out), {&a}, [a](auto) {
    return [a](std::span<const double> g) {
      const auto x = a.data();
      std::vector<double> tmp(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) tmp[i] = x[i] > 0.0 ? g[i] : 0.0;
      a.impl()->accumulate_grad(tmp);
    };
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (const double v : a.data()) {
    s += v;
  }
  return make_result(Shape{}, {s}, {&a}, [a](auto) {
    return [a](std::span<const double> g) {
      a.impl()->accumulate_grad(std::vector<double>(a.numel(), g[0]));
    };
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) {
    throw std::invalid_argument("mean: empty tensor");
  }
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor detach(const Tensor& a) { return Tensor(a.shape(), std::vector<double>(a.data().begin(), a.data().end())); }

Tensor log_softmax_channels(const Tensor& x) {
  if (x.rank() != 3) {
    throw std::invalid_argument("log_softmax_channels: expected [C,H,W], got " +
                                shape_string(x.shape()));
  }
  check_finite(x.data(), "log_softmax_channels");
  const std::size_t classes = x.dim(0);
  const std::size_t plane = x.dim(1) * x.dim(2);
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t p = 0; p < plane; ++p) {
    double mx = in[p];
    for (std::size_t c = 1; c < classes; ++c) {
      mx = std::max(mx, in[c * plane + p]);
    }
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      z += std::exp(in[c * plane + p] - mx);
    }
    const double log_z = mx + std::log(z);
    for (std::size_t c = 0; c < classes; ++c) {
      out[c * plane + p] = in[c * plane + p] - log_z;
    }
  }
  return make_result(x.shape(), std::move(out), {&x},
                     [x, classes, plane](std::weak_ptr<TensorImpl> self) {
                       return [x, classes, plane, self](std::span<const double> g) {
                         const auto out = self.lock();
                         const auto& y = out->data;
                         std::vector<double> dx(g.size());
                         for (std::size_t p = 0; p < plane; ++p) {
                           double gs = 0.0;
                           for (std::size_t c = 0; c < classes; ++c) gs += g[c * plane + p];
                           for (std::size_t c = 0; c < classes; ++c) {
                             const std::size_t i = c * plane + p;
                             dx[i] = g[i] - std::exp(y[i]) * gs;
                           }
                         }
                         x.impl()->accumulate_grad(dx);
                       };
                     });
}

Tensor masked_nll(const Tensor& logp, std::span<const int> labels, int ignore_id) {
  if (logp.rank() != 3) {
    throw std::invalid_argument("masked_nll: expected [C,H,W], got " +
                                shape_string(logp.shape()));
  }
  const std::size_t classes = logp.dim(0);
  const std::size_t plane = logp.dim(1) * logp.dim(2);
  if (labels.size() != plane) {
    throw std::invalid_argument("masked_nll: " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(plane) + " pixels");
  }
  const auto lp = logp.data();
  double total = 0.0;
  std::size_t valid = 0;
  for (std::size_t p = 0; p < plane; ++p) {
    const int id = labels[p];
    if (id == ignore_id) {
      continue;
    }
    if (id < 0 || static_cast<std::size_t>(id) >= classes) {
      throw std::invalid_argument("masked_nll: label " + std::to_string(id) +
                                  " out of range for " + std::to_string(classes) + " classes");
    }
    total += lp[static_cast<std::size_t>(id) * plane + p];
    ++valid;
  }
  const double value = valid ? -total / static_cast<double>(valid) : 0.0;
  std::vector<int> kept(labels.begin(), labels.end());
  return make_result(Shape{}, {value}, {&logp},
                     [logp, kept = std::move(kept), valid, plane, ignore_id](auto) {
                       return [logp, kept, valid, plane, ignore_id](std::span<const double> g) {
                         if (valid == 0) {
                           return;
                         }
                         std::vector<double> dx(logp.numel(), 0.0);
                         const double w = -g[0] / static_cast<double>(valid);
                         for (std::size_t p = 0; p < plane; ++p) {
                           if (kept[p] != ignore_id) {
                             dx[static_cast<std::size_t>(kept[p]) * plane + p] = w;
                           }
                         }
                         logp.impl()->accumulate_grad(dx);
                       };
                     });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int padding) {
  if (x.rank() != 3 || w.rank() != 4 || b.rank() != 1) {
    throw std::invalid_argument("conv2d: expected x [Cin,H,W], w [Cout,Cin,k,k], b [Cout]");
  }
  const std::size_t cin = x.dim(0);
  const std::size_t h = x.dim(1);
  const std::size_t wd = x.dim(2);
  const std::size_t cout = w.dim(0);
  const std::size_t k = w.dim(2);
  if (w.dim(1) != cin || w.dim(3) != k || b.dim(0) != cout) {
    throw std::invalid_argument("conv2d: inconsistent shapes x" + shape_string(x.shape()) +
                                " w" + shape_string(w.shape()) + " b" +
                                shape_string(b.shape()));
  }
  if (k % 2 == 0 || padding < 0 || static_cast<std::size_t>(padding) * 2 + 1 != k) {
    throw std::invalid_argument("conv2d: kernel must be odd with padding (k-1)/2");
  }
  const std::size_t plane = h * wd;
  const std::size_t patch = cin * k * k;
  const auto pad = static_cast<std::ptrdiff_t>(padding);

  // im2col: row (ci, ky, kx), column (y, x).
  auto col = std::make_shared<RowMat>();
  if (k == 1) {
    *col = ConstMapMat(x.data().data(), static_cast<Eigen::Index>(cin),
                       static_cast<Eigen::Index>(plane));
  } else {
    col->setZero(static_cast<Eigen::Index>(patch), static_cast<Eigen::Index>(plane));
    const auto in = x.data();
    for (std::size_t ci = 0; ci < cin; ++ci) {
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          double* row = col->row(static_cast<Eigen::Index>((ci * k + ky) * k + kx)).data();
          const auto dy = static_cast<std::ptrdiff_t>(ky) - pad;
          const auto dx = static_cast<std::ptrdiff_t>(kx) - pad;
          for (std::size_t y = 0; y < h; ++y) {
            const auto sy = static_cast<std::ptrdiff_t>(y) + dy;
            if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
            const std::size_t x0 = dx < 0 ? static_cast<std::size_t>(-dx) : 0;
            const std::size_t x1 = dx > 0 ? wd - static_cast<std::size_t>(dx) : wd;
            const double* src = in.data() + ci * plane + static_cast<std::size_t>(sy) * wd;
            for (std::size_t xx = x0; xx < x1; ++xx) {
              row[y * wd + xx] = src[static_cast<std::ptrdiff_t>(xx) + dx];
            }
          }
        }
      }
    }
  }

  std::vector<double> out(cout * plane);
  MapMat out_m(out.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(plane));
  ConstMapMat w_m(w.data().data(), static_cast<Eigen::Index>(cout),
                  static_cast<Eigen::Index>(patch));
  out_m.noalias() = w_m * (*col);
  const auto bias = b.data();
  for (std::size_t co = 0; co < cout; ++co) {
    out_m.row(static_cast<Eigen::Index>(co)).array() += bias[co];
  }

  return make_result(
      Shape{cout, h, wd}, std::move(out), {&x, &w, &b},
      [x, w, b, col, cin, h, wd, cout, k, plane, patch, pad](auto) {
        return [x, w, b, col, cin, h, wd, cout, k, plane, patch,
                pad](std::span<const double> g) {
          ConstMapMat g_m(g.data(), static_cast<Eigen::Index>(cout),
                          static_cast<Eigen::Index>(plane));
          if (w.requires_grad()) {
            RowMat dw = g_m * col->transpose();
            w.impl()->accumulate_grad(std::span<const double>(dw.data(), patch * cout));
          }
          if (b.requires_grad()) {
            // Plain loop: Eigen's vectorized reduction depends on buffer alignment.
            std::vector<double> db(cout, 0.0);
            for (std::size_t co = 0; co < cout; ++co) {
              const double* row = g.data() + co * plane;
              for (std::size_t i = 0; i < plane; ++i) db[co] += row[i];
            }
            b.impl()->accumulate_grad(db);
          }
          if (x.requires_grad()) {
            ConstMapMat w_m(w.data().data(), static_cast<Eigen::Index>(cout),
                            static_cast<Eigen::Index>(patch));
            RowMat dcol = w_m.transpose() * g_m;
            if (k == 1) {
              x.impl()->accumulate_grad(std::span<const double>(dcol.data(), cin * plane));
              return;
            }
            std::vector<double> dx(cin * plane, 0.0);
            for (std::size_t ci = 0; ci < cin; ++ci) {
              for (std::size_t ky = 0; ky < k; ++ky) {
                for (std::size_t kx = 0; kx < k; ++kx) {
                  const double* row =
                      dcol.row(static_cast<Eigen::Index>((ci * k + ky) * k + kx)).data();
                  const auto dy = static_cast<std::ptrdiff_t>(ky) - pad;
                  const auto dxo = static_cast<std::ptrdiff_t>(kx) - pad;
                  for (std::size_t y = 0; y < h; ++y) {
                    const auto sy = static_cast<std::ptrdiff_t>(y) + dy;
                    if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
                    const std::size_t x0 = dxo < 0 ? static_cast<std::size_t>(-dxo) : 0;
                    const std::size_t x1 = dxo > 0 ? wd - static_cast<std::size_t>(dxo) : wd;
                    double* dst = dx.data() + ci * plane + static_cast<std::size_t>(sy) * wd;
                    for (std::size_t xx = x0; xx < x1; ++xx) {
                      dst[static_cast<std::ptrdiff_t>(xx) + dxo] += row[y * wd + xx];
                    }
                  }
                }
              }
            }
            x.impl()->accumulate_grad(dx);
          }
        };
      });
}

}  // namespace coadapt::autograd
