#include "ldgan/graph.hpp"

#include <algorithm>
#include <cmath>

#include "ldgan/kernels.hpp"

namespace ldgan {

template <typename T>
void Parameter<T>::zero_grad() {
  if (grad.shape() != value.shape()) grad = Tensor<T>(value.shape());
  grad.fill(T{0});
}

template <typename T>
void zero_grads(std::span<Parameter<T>* const> params) {
  for (auto* p : params) p->zero_grad();
}

template <typename T>
Var Graph<T>::push(Tensor<T> value, bool needs_grad) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename T>
Tensor<T>& Graph<T>::grad_buffer(Var v) {
  auto& n = nodes_[v.id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Tensor<T>(n.value.shape());
  return n.grad;
}

template <typename T>
Var Graph<T>::constant(Tensor<T> value) {
  return push(std::move(value), false);
}

template <typename T>
Var Graph<T>::param(Parameter<T>& p) {
  if (auto it = bound_.find(&p); it != bound_.end()) return Var{it->second};
  Var v = push(p.value, true);
  nodes_[v.id].param = &p;
  bound_.emplace(&p, v.id);
  return v;
}

template <typename T>
void Graph<T>::backward(Var loss) {
  if (nodes_.at(loss.id).value.size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + shape_str(nodes_[loss.id].value.shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor<T>();
  grad_buffer(loss)[0] = T{1};
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.backward) nodes_[i].backward();
  }
  for (auto& n : nodes_) {
    if (!n.param || n.grad.empty()) continue;
    auto& pg = n.param->grad;
    if (pg.shape() != n.param->value.shape()) pg = Tensor<T>(n.param->value.shape());
    for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
  }
}

// --- convolutions -----------------------------------------------------------

namespace {

void require_rank4(const Shape& s, const char* what) {
  if (s.size() != 4) throw DimensionError(std::string(what) + ": expected a 4-D tensor, got " + shape_str(s));
}

}  // namespace

template <typename T>
Var Graph<T>::conv2d(Var x, Var w, std::size_t stride, std::size_t pad) {
  const auto& xs = value(x).shape();
  const auto& ws = value(w).shape();
  require_rank4(xs, "conv2d input");
  require_rank4(ws, "conv2d kernel");
  if (ws[1] != xs[1]) {
    throw DimensionError("conv2d: kernel " + shape_str(ws) + " does not match input " + shape_str(xs));
  }
  if (stride == 0) throw ConfigError("conv2d: stride must be >= 1");
  ConvGeometry g{xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], ws[3], stride, pad};
  g.validate();
  Tensor<T> out({g.batch, g.out_channels, g.out_h(), g.out_w()});
  kernels::parallel::conv2d<T>(g, value(x).data(), value(w).data(), out.data());
  Var y = push(std::move(out), needs(x) || needs(w));
  nodes_[y.id].backward = [this, x, w, y, g] {
    const auto& dy = out_grad(y);
    if (needs(x)) {
      Tensor<T> dx(value(x).shape());
      kernels::parallel::conv2d_grad_input<T>(g, dy.data(), value(w).data(), dx.data());
      auto& gx = grad_buffer(x);
      for (std::size_t i = 0; i < dx.size(); ++i) gx[i] += dx[i];
    }
    if (needs(w)) {
      Tensor<T> dw(value(w).shape());
      kernels::parallel::conv2d_grad_weight<T>(g, value(x).data(), dy.data(), dw.data());
      auto& gw = grad_buffer(w);
      for (std::size_t i = 0; i < dw.size(); ++i) gw[i] += dw[i];
    }
  };
  return y;
}

template <typename T>
Var Graph<T>::conv_transpose2d(Var x, Var w, std::size_t stride, std::size_t pad) {
  const auto& xs = value(x).shape();
  const auto& ws = value(w).shape();
  require_rank4(xs, "conv_transpose2d input");
  require_rank4(ws, "conv_transpose2d kernel");
  if (ws[0] != xs[1]) {
    throw DimensionError("conv_transpose2d: kernel " + shape_str(ws) + " does not match input " + shape_str(xs));
  }
  if (stride == 0) throw ConfigError("conv_transpose2d: stride must be >= 1");
  const auto out_extent = [&](std::size_t in, std::size_t k) -> std::size_t {
    const auto v = static_cast<std::ptrdiff_t>((in - 1) * stride + k) - static_cast<std::ptrdiff_t>(2 * pad);
    if (v <= 0) throw ConfigError("conv_transpose2d: padding leaves an empty output");
    return static_cast<std::size_t>(v);
  };
  // Geometry of the conv2d whose adjoint this is.
  ConvGeometry g{xs[0], ws[1], out_extent(xs[2], ws[2]), out_extent(xs[3], ws[3]), ws[0], ws[2], ws[3], stride, pad};
  g.validate();
  Tensor<T> out({g.batch, g.in_channels, g.in_h, g.in_w});
  kernels::parallel::conv2d_grad_input<T>(g, value(x).data(), value(w).data(), out.data());
  Var y = push(std::move(out), needs(x) || needs(w));
  nodes_[y.id].backward = [this, x, w, y, g] {
    const auto& dy = out_grad(y);
    if (needs(x)) {
      Tensor<T> dx(value(x).shape());
      kernels::parallel::conv2d<T>(g, dy.data(), value(w).data(), dx.data());
      auto& gx = grad_buffer(x);
      for (std::size_t i = 0; i < dx.size(); ++i) gx[i] += dx[i];
    }
    if (needs(w)) {
      Tensor<T> dw(value(w).shape());
      kernels::parallel::conv2d_grad_weight<T>(g, dy.data(), value(x).data(), dw.data());
      auto& gw = grad_buffer(w);
      for (std::size_t i = 0; i < dw.size(); ++i) gw[i] += dw[i];
    }
  };
  return y;
}

template <typename T>
Var Graph<T>::bias_add(Var x, Var bias) {
  const auto& xs = value(x).shape();
  require_rank4(xs, "bias_add input");
  if (value(bias).size() != xs[1]) {
    throw DimensionError("bias_add: bias " + shape_str(value(bias).shape()) + " vs input " + shape_str(xs));
  }
  const std::size_t plane = xs[2] * xs[3];
  Tensor<T> out = value(x);
  const auto& b = value(bias);
  for (std::size_t n = 0; n < xs[0]; ++n)
    for (std::size_t c = 0; c < xs[1]; ++c) {
      T* p = out.ptr() + (n * xs[1] + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) p[i] += b[c];
    }
  Var y = push(std::move(out), needs(x) || needs(bias));
  nodes_[y.id].backward = [this, x, bias, y, plane] {
    const auto& dy = out_grad(y);
    const auto& s = dy.shape();
    if (needs(x)) {
      auto& gx = grad_buffer(x);
      for (std::size_t i = 0; i < dy.size(); ++i) gx[i] += dy[i];
    }
    if (needs(bias)) {
      auto& gb = grad_buffer(bias);
      for (std::size_t n = 0; n < s[0]; ++n)
        for (std::size_t c = 0; c < s[1]; ++c) {
          const T* p = dy.ptr() + (n * s[1] + c) * plane;
          T acc{0};
          for (std::size_t i = 0; i < plane; ++i) acc += p[i];
          gb[c] += acc;
        }
    }
  };
  return y;
}

template <typename T>
Var Graph<T>::batch_norm2d(Var x, Var gamma, Var beta, BatchNormState<T>& state, Mode mode) {
  const auto& xs = value(x).shape();
  require_rank4(xs, "batch_norm2d input");
  const std::size_t B = xs[0], C = xs[1], plane = xs[2] * xs[3];
  if (value(gamma).size() != C || value(beta).size() != C) {
    throw DimensionError("batch_norm2d: gamma/beta length does not match " + std::to_string(C) + " channels");
  }
  if (state.running_mean.size() != C) state = BatchNormState<T>(C);
  if (mode == Mode::train && B < 2) throw ConfigError("batch_norm2d: batch size must be >= 2 in train mode");

  const std::size_t count = B * plane;
  Tensor<T> xhat(xs);
  std::vector<T> inv_std(C);
  const auto& xv = value(x);
  const auto eps = static_cast<T>(kBatchNormEps);
  const auto momentum = static_cast<T>(kBatchNormMomentum);
  const auto channels = static_cast<std::ptrdiff_t>(C);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ci = 0; ci < channels; ++ci) {
    const auto c = static_cast<std::size_t>(ci);
    T mean, var;
    if (mode == Mode::train) {
      double s = 0;
      for (std::size_t n = 0; n < B; ++n) {
        const T* p = xv.ptr() + (n * C + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
      }
      const double m = s / static_cast<double>(count);
      double ss = 0;
      for (std::size_t n = 0; n < B; ++n) {
        const T* p = xv.ptr() + (n * C + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) ss += (p[i] - m) * (p[i] - m);
      }
      mean = static_cast<T>(m);
      var = static_cast<T>(ss / static_cast<double>(count));
      const auto unbiased = static_cast<T>(ss / static_cast<double>(count - 1));
      state.running_mean[c] = (T{1} - momentum) * state.running_mean[c] + momentum * mean;
      state.running_var[c] = (T{1} - momentum) * state.running_var[c] + momentum * unbiased;
    } else {
      mean = state.running_mean[c];
      var = state.running_var[c];
    }
    inv_std[c] = T{1} / std::sqrt(var + eps);
    for (std::size_t n = 0; n < B; ++n) {
      const T* p = xv.ptr() + (n * C + c) * plane;
      T* q = xhat.ptr() + (n * C + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) q[i] = (p[i] - mean) * inv_std[c];
    }
  }
  Tensor<T> out(xs);
  const auto& gm = value(gamma);
  const auto& bt = value(beta);
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const T* q = xhat.ptr() + (n * C + c) * plane;
      T* o = out.ptr() + (n * C + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) o[i] = gm[c] * q[i] + bt[c];
    }
  Var y = push(std::move(out), needs(x) || needs(gamma) || needs(beta));
  nodes_[y.id].backward = [this, x, gamma, beta, y, mode, B, C, plane, count, xhat = std::move(xhat),
                           inv_std = std::move(inv_std)] {
    const auto& dy = out_grad(y);
    const auto& gm = value(gamma);
    std::vector<T> sum_dy(C, T{0}), sum_dy_xhat(C, T{0});
    for (std::size_t n = 0; n < B; ++n)
      for (std::size_t c = 0; c < C; ++c) {
        const T* d = dy.ptr() + (n * C + c) * plane;
        const T* q = xhat.ptr() + (n * C + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          sum_dy[c] += d[i];
          sum_dy_xhat[c] += d[i] * q[i];
        }
      }
    if (needs(gamma)) {
      auto& gg = grad_buffer(gamma);
      for (std::size_t c = 0; c < C; ++c) gg[c] += sum_dy_xhat[c];
    }
    if (needs(beta)) {
      auto& gb = grad_buffer(beta);
      for (std::size_t c = 0; c < C; ++c) gb[c] += sum_dy[c];
    }
    if (!needs(x)) return;
    auto& gx = grad_buffer(x);
    const auto inv_n = T{1} / static_cast<T>(count);
    for (std::size_t n = 0; n < B; ++n)
      for (std::size_t c = 0; c < C; ++c) {
        const T* d = dy.ptr() + (n * C + c) * plane;
        const T* q = xhat.ptr() + (n * C + c) * plane;
        T* o = gx.ptr() + (n * C + c) * plane;
        const T k = gm[c] * inv_std[c];
        if (mode == Mode::train) {
          for (std::size_t i = 0; i < plane; ++i)
            o[i] += k * (d[i] - inv_n * sum_dy[c] - q[i] * inv_n * sum_dy_xhat[c]);
        } else {
          for (std::size_t i = 0; i < plane; ++i) o[i] += k * d[i];
        }
      }
  };
  return y;
}

// --- elementwise --------------------------------------------------------------

template <typename T>
template <typename F, typename DF>
Var Graph<T>::unary(Var x, F f, DF df_from_out) {
  Tensor<T> out = value(x);
  for (auto& v : out.storage()) v = f(v);
  Var y = push(std::move(out), needs(x));
  nodes_[y.id].backward = [this, x, y, df_from_out] {
    const auto& dy = out_grad(y);
    const auto& o = value(y);
    auto& gx = grad_buffer(x);
    for (std::size_t i = 0; i < dy.size(); ++i) gx[i] += dy[i] * df_from_out(o[i]);
  };
  return y;
}

template <typename T>
void Graph<T>::track_kinks(Var x) {
  for (T v : nodes_[x.id].value.storage()) pattern_ = (pattern_ ^ (v > T{0} ? 1u : 0u)) * 1099511628211ull;
}

template <typename T>
Var Graph<T>::relu(Var x) {
  track_kinks(x);
  return unary(x, [](T v) { return v > T{0} ? v : T{0}; }, [](T o) { return o > T{0} ? T{1} : T{0}; });
}

template <typename T>
Var Graph<T>::leaky_relu(Var x, T alpha) {
  if (!(alpha > T{0} && alpha < T{1})) throw ConfigError("leaky_relu: alpha must lie in (0, 1)");
  track_kinks(x);
  return unary(
      x, [alpha](T v) { return v > T{0} ? v : alpha * v; }, [alpha](T o) { return o > T{0} ? T{1} : alpha; });
}

template <typename T>
Var Graph<T>::sigmoid(Var x) {
  return unary(
      x,
      [](T v) {
        if (v >= T{0}) return T{1} / (T{1} + std::exp(-v));
        const T e = std::exp(v);
        return e / (T{1} + e);
      },
      [](T o) { return o * (T{1} - o); });
}

template <typename T>
Var Graph<T>::tanh(Var x) {
  return unary(x, [](T v) { return std::tanh(v); }, [](T o) { return T{1} - o * o; });
}

template <typename T>
Var Graph<T>::add(Var a, Var b) {
  require_same_shape(value(a), value(b), "add");
  Tensor<T> out = value(a);
  const auto& bv = value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  Var y = push(std::move(out), needs(a) || needs(b));
  nodes_[y.id].backward = [this, a, b, y] {
    const auto& dy = out_grad(y);
    for (Var v : {a, b}) {
      if (!needs(v)) continue;
      auto& g = grad_buffer(v);
      for (std::size_t i = 0; i < dy.size(); ++i) g[i] += dy[i];
    }
  };
  return y;
}

template <typename T>
Var Graph<T>::sub(Var a, Var b) {
  require_same_shape(value(a), value(b), "sub");
  Tensor<T> out = value(a);
  const auto& bv = value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  Var y = push(std::move(out), needs(a) || needs(b));
  nodes_[y.id].backward = [this, a, b, y] {
    const auto& dy = out_grad(y);
    if (needs(a)) {
      auto& g = grad_buffer(a);
      for (std::size_t i = 0; i < dy.size(); ++i) g[i] += dy[i];
    }
    if (needs(b)) {
      auto& g = grad_buffer(b);
      for (std::size_t i = 0; i < dy.size(); ++i) g[i] -= dy[i];
    }
  };
  return y;
}

template <typename T>
Var Graph<T>::mul(Var a, Var b) {
  require_same_shape(value(a), value(b), "mul");
  Tensor<T> out = value(a);
  const auto& bv = value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  Var y = push(std::move(out), needs(a) || needs(b));
  nodes_[y.id].backward = [this, a, b, y] {
    const auto& dy = out_grad(y);
    if (needs(a)) {
      auto& g = grad_buffer(a);
      const auto& bv = value(b);
      for (std::size_t i = 0; i < dy.size(); ++i) g[i] += dy[i] * bv[i];
    }
    if (needs(b)) {
      auto& g = grad_buffer(b);
      const auto& av = value(a);
      for (std::size_t i = 0; i < dy.size(); ++i) g[i] += dy[i] * av[i];
    }
  };
  return y;
}

template <typename T>
Var Graph<T>::scale(Var x, T factor) {
  Tensor<T> out = value(x);
  for (auto& v : out.storage()) v *= factor;
  Var y = push(std::move(out), needs(x));
  nodes_[y.id].backward = [this, x, y, factor] {
    const auto& dy = out_grad(y);
    auto& g = grad_buffer(x);
    for (std::size_t i = 0; i < dy.size(); ++i) g[i] += dy[i] * factor;
  };
  return y;
}

template <typename T>
Var Graph<T>::scale_by(Var x, Var factor) {
  if (value(factor).size() != 1) {
    throw DimensionError("scale_by: factor must have one element, got " + shape_str(value(factor).shape()));
  }
  const T f = value(factor)[0];
  Tensor<T> out = value(x);
  for (auto& v : out.storage()) v *= f;
  Var y = push(std::move(out), needs(x) || needs(factor));
  nodes_[y.id].backward = [this, x, factor, y] {
    const auto& dy = out_grad(y);
    if (needs(x)) {
      const T f = value(factor)[0];
      auto& g = grad_buffer(x);
      for (std::size_t i = 0; i < dy.size(); ++i) g[i] += dy[i] * f;
    }
    if (needs(factor)) grad_buffer(factor)[0] += dot(dy, value(x));
  };
  return y;
}

template <typename T>
Var Graph<T>::concat_channels(Var a, Var b) {
  const auto& as = value(a).shape();
  const auto& bs = value(b).shape();
  require_rank4(as, "concat_channels");
  require_rank4(bs, "concat_channels");
  if (as[0] != bs[0] || as[2] != bs[2] || as[3] != bs[3]) {
    throw DimensionError("concat_channels: " + shape_str(as) + " vs " + shape_str(bs));
  }
  const std::size_t B = as[0], Ca = as[1], Cb = bs[1], plane = as[2] * as[3];
  Tensor<T> out({B, Ca + Cb, as[2], as[3]});
  for (std::size_t n = 0; n < B; ++n) {
    std::copy_n(value(a).ptr() + n * Ca * plane, Ca * plane, out.ptr() + n * (Ca + Cb) * plane);
    std::copy_n(value(b).ptr() + n * Cb * plane, Cb * plane, out.ptr() + (n * (Ca + Cb) + Ca) * plane);
  }
  Var y = push(std::move(out), needs(a) || needs(b));
  nodes_[y.id].backward = [this, a, b, y, B, Ca, Cb, plane] {
    const auto& dy = out_grad(y);
    for (std::size_t n = 0; n < B; ++n) {
      if (needs(a)) {
        auto& g = grad_buffer(a);
        const T* src = dy.ptr() + n * (Ca + Cb) * plane;
        T* dst = g.ptr() + n * Ca * plane;
        for (std::size_t i = 0; i < Ca * plane; ++i) dst[i] += src[i];
      }
      if (needs(b)) {
        auto& g = grad_buffer(b);
        const T* src = dy.ptr() + (n * (Ca + Cb) + Ca) * plane;
        T* dst = g.ptr() + n * Cb * plane;
        for (std::size_t i = 0; i < Cb * plane; ++i) dst[i] += src[i];
      }
    }
  };
  return y;
}

template <typename T>
Var Graph<T>::reshape(Var x, Shape shape) {
  Var y = push(value(x).reshaped(std::move(shape)), needs(x));
  nodes_[y.id].backward = [this, x, y] {
    const auto& dy = out_grad(y);
    auto& g = grad_buffer(x);
    for (std::size_t i = 0; i < dy.size(); ++i) g[i] += dy[i];
  };
  return y;
}

template <typename T>
Var Graph<T>::apply_linear(Var x, Shape sample_out_shape, SampleMap<T> forward, SampleMap<T> adjoint) {
  const auto& xs = value(x).shape();
  if (xs.empty()) throw DimensionError("apply_linear: input needs a batch axis");
  const std::size_t B = xs[0];
  const std::size_t in_stride = B ? value(x).size() / B : 0;
  const std::size_t out_stride = shape_numel(sample_out_shape);
  Shape os{B};
  os.insert(os.end(), sample_out_shape.begin(), sample_out_shape.end());
  Tensor<T> out(os);
  const auto batch = static_cast<std::ptrdiff_t>(B);
  const auto& xv = value(x);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t n = 0; n < batch; ++n) {
    const auto k = static_cast<std::size_t>(n);
    forward(xv.data().subspan(k * in_stride, in_stride), out.data().subspan(k * out_stride, out_stride));
  }
  Var y = push(std::move(out), needs(x));
  nodes_[y.id].backward = [this, x, y, B, in_stride, out_stride, adjoint = std::move(adjoint)] {
    const auto& dy = out_grad(y);
    auto& g = grad_buffer(x);
    const auto batch = static_cast<std::ptrdiff_t>(B);
#pragma omp parallel
    {
      std::vector<T> tmp(in_stride);
#pragma omp for schedule(static)
      for (std::ptrdiff_t n = 0; n < batch; ++n) {
        const auto k = static_cast<std::size_t>(n);
        adjoint(dy.data().subspan(k * out_stride, out_stride), tmp);
        T* dst = g.ptr() + k * in_stride;
        for (std::size_t i = 0; i < in_stride; ++i) dst[i] += tmp[i];
      }
    }
  };
  return y;
}

// --- reductions and losses ----------------------------------------------------

template <typename T>
Var Graph<T>::sum(Var x) {
  T acc{0};
  for (T v : value(x).storage()) acc += v;
  Var y = push(Tensor<T>({1}, std::vector<T>{acc}), needs(x));
  nodes_[y.id].backward = [this, x, y] {
    const T d = out_grad(y)[0];
    auto& g = grad_buffer(x);
    for (auto& v : g.storage()) v += d;
  };
  return y;
}

template <typename T>
Var Graph<T>::mse(Var pred, Var target) {
  require_same_shape(value(pred), value(target), "mse");
  const auto& p = value(pred);
  const auto& t = value(target);
  T acc{0};
  for (std::size_t i = 0; i < p.size(); ++i) acc += (p[i] - t[i]) * (p[i] - t[i]);
  const T n = static_cast<T>(p.size());
  Var y = push(Tensor<T>({1}, std::vector<T>{acc / n}), needs(pred) || needs(target));
  nodes_[y.id].backward = [this, pred, target, y, n] {
    const T d = out_grad(y)[0] * T{2} / n;
    const auto& p = value(pred);
    const auto& t = value(target);
    if (needs(pred)) {
      auto& g = grad_buffer(pred);
      for (std::size_t i = 0; i < p.size(); ++i) g[i] += d * (p[i] - t[i]);
    }
    if (needs(target)) {
      auto& g = grad_buffer(target);
      for (std::size_t i = 0; i < p.size(); ++i) g[i] -= d * (p[i] - t[i]);
    }
  };
  return y;
}

template <typename T>
Var Graph<T>::batch_sse(Var pred, Var target) {
  require_same_shape(value(pred), value(target), "batch_sse");
  const auto& p = value(pred);
  const auto& t = value(target);
  if (p.rank() == 0 || p.dim(0) == 0) throw DimensionError("batch_sse: empty batch");
  T acc{0};
  for (std::size_t i = 0; i < p.size(); ++i) acc += (p[i] - t[i]) * (p[i] - t[i]);
  const T b = static_cast<T>(p.dim(0));
  Var y = push(Tensor<T>({1}, std::vector<T>{acc / b}), needs(pred) || needs(target));
  nodes_[y.id].backward = [this, pred, target, y, b] {
    const T d = out_grad(y)[0] * T{2} / b;
    const auto& p = value(pred);
    const auto& t = value(target);
    if (needs(pred)) {
      auto& g = grad_buffer(pred);
      for (std::size_t i = 0; i < p.size(); ++i) g[i] += d * (p[i] - t[i]);
    }
    if (needs(target)) {
      auto& g = grad_buffer(target);
      for (std::size_t i = 0; i < p.size(); ++i) g[i] -= d * (p[i] - t[i]);
    }
  };
  return y;
}

template <typename T>
Var Graph<T>::bce(Var pred, Var target) {
  require_same_shape(value(pred), value(target), "bce");
  const auto lo = static_cast<T>(kBceClamp);
  const auto hi = T{1} - lo;
  const auto& p = value(pred);
  const auto& t = value(target);
  T acc{0};
  for (std::size_t i = 0; i < p.size(); ++i) {
    const T q = std::clamp(p[i], lo, hi);
    acc -= t[i] * std::log(q) + (T{1} - t[i]) * std::log(T{1} - q);
  }
  const T n = static_cast<T>(p.size());
  Var y = push(Tensor<T>({1}, std::vector<T>{acc / n}), needs(pred));
  nodes_[y.id].backward = [this, pred, target, y, n, lo, hi] {
    const T d = out_grad(y)[0] / n;
    const auto& p = value(pred);
    const auto& t = value(target);
    auto& g = grad_buffer(pred);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const T q = std::clamp(p[i], lo, hi);
      g[i] += d * ((T{1} - t[i]) / (T{1} - q) - t[i] / q);
    }
  };
  return y;
}

template <typename T>
Var Graph<T>::variance_norm(Var x) {
  const auto& xv = value(x);
  if (xv.rank() == 0 || xv.dim(0) < 2) {
    throw ConfigError("variance regularizer needs a batch of at least 2, got shape " + shape_str(xv.shape()));
  }
  const std::size_t B = xv.dim(0);
  const std::size_t d = xv.size() / B;
  // Deviations are taken relative to sample 0 first, so identical samples give exactly zero.
  std::vector<T> mean(d, T{0}), var(d, T{0});
  for (std::size_t n = 1; n < B; ++n)
    for (std::size_t j = 0; j < d; ++j) mean[j] += xv[n * d + j] - xv[j];
  for (auto& m : mean) m /= static_cast<T>(B);
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t j = 0; j < d; ++j) {
      const T e = (xv[n * d + j] - xv[j]) - mean[j];
      var[j] += e * e;
    }
  T norm2{0};
  for (auto& v : var) {
    v /= static_cast<T>(B);
    norm2 += v * v;
  }
  const T r = std::sqrt(norm2);
  Var y = push(Tensor<T>({1}, std::vector<T>{r}), needs(x));
  nodes_[y.id].backward = [this, x, y, B, d, r, mean = std::move(mean), var = std::move(var)] {
    // At r = 0 every variance is zero; the zero subgradient is used.
    if (r == T{0}) return;
    const T dr = out_grad(y)[0];
    const auto& xv = value(x);
    auto& g = grad_buffer(x);
    const T k = dr * T{2} / (static_cast<T>(B) * r);
    for (std::size_t n = 0; n < B; ++n)
      for (std::size_t j = 0; j < d; ++j) g[n * d + j] += k * var[j] * ((xv[n * d + j] - xv[j]) - mean[j]);
  };
  return y;
}

template struct Parameter<float>;
template struct Parameter<double>;
template void zero_grads(std::span<Parameter<float>* const>);
template void zero_grads(std::span<Parameter<double>* const>);
template class Graph<float>;
template class Graph<double>;

}  // namespace ldgan
