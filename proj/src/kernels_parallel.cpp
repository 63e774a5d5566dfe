#include <algorithm>
#include <cstdlib>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <omp.h>

#include "ldgan/errors.hpp"
#include "ldgan/kernels.hpp"

namespace ldgan {

int configure_threads_from_env() {
  if (const char* env = std::getenv("LDGAN_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) omp_set_num_threads(n);
  }
  omp_set_dynamic(0);
  return omp_get_max_threads();
}

namespace kernels::parallel {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

bool is_pointwise(const ConvGeometry& g) {
  return g.kernel_h == 1 && g.kernel_w == 1 && g.stride == 1 && g.pad == 0;
}

// col is (in_channels * kernel_h * kernel_w) x (out_h * out_w), row-major.
template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* col) {
  const std::size_t oh_n = g.out_h();
  const std::size_t ow_n = g.out_w();
  const std::size_t plane = oh_n * ow_n;
  for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
    const T* xc = x + ci * g.in_h * g.in_w;
    for (std::size_t kh = 0; kh < g.kernel_h; ++kh) {
      for (std::size_t kw = 0; kw < g.kernel_w; ++kw) {
        T* row = col + ((ci * g.kernel_h + kh) * g.kernel_w + kw) * plane;
        for (std::size_t oh = 0; oh < oh_n; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + kh) - static_cast<std::ptrdiff_t>(g.pad);
          T* out = row + oh * ow_n;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.in_h)) {
            std::fill(out, out + ow_n, T{0});
            continue;
          }
          const T* xr = xc + static_cast<std::size_t>(ih) * g.in_w;
          for (std::size_t ow = 0; ow < ow_n; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kw) - static_cast<std::ptrdiff_t>(g.pad);
            out[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.in_w)) ? T{0} : xr[iw];
          }
        }
      }
    }
  }
}

// Accumulates col back into x (x must be zeroed by the caller).
template <typename T>
void col2im(const ConvGeometry& g, const T* col, T* x) {
  const std::size_t oh_n = g.out_h();
  const std::size_t ow_n = g.out_w();
  const std::size_t plane = oh_n * ow_n;
  for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
    T* xc = x + ci * g.in_h * g.in_w;
    for (std::size_t kh = 0; kh < g.kernel_h; ++kh) {
      for (std::size_t kw = 0; kw < g.kernel_w; ++kw) {
        const T* row = col + ((ci * g.kernel_h + kh) * g.kernel_w + kw) * plane;
        for (std::size_t oh = 0; oh < oh_n; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + kh) - static_cast<std::ptrdiff_t>(g.pad);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
          T* xr = xc + static_cast<std::size_t>(ih) * g.in_w;
          const T* in = row + oh * ow_n;
          for (std::size_t ow = 0; ow < ow_n; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kw) - static_cast<std::ptrdiff_t>(g.pad);
            if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.in_w)) xr[iw] += in[ow];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
void conv2d(const ConvGeometry& g, std::span<const T> x, std::span<const T> w, std::span<T> y) {
  g.validate();
  const auto K = static_cast<Eigen::Index>(g.in_channels * g.kernel_h * g.kernel_w);
  const auto P = static_cast<Eigen::Index>(g.out_h() * g.out_w());
  const auto Co = static_cast<Eigen::Index>(g.out_channels);
  const std::size_t x_stride = g.in_channels * g.in_h * g.in_w;
  Eigen::Map<const RowMat<T>> W(w.data(), Co, K);
  const bool pointwise = is_pointwise(g);
  const auto batch = static_cast<std::ptrdiff_t>(g.batch);
#pragma omp parallel
  {
    std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(K * P));
#pragma omp for schedule(static)
    for (std::ptrdiff_t n = 0; n < batch; ++n) {
      const T* xn = x.data() + static_cast<std::size_t>(n) * x_stride;
      const T* src = xn;
      if (!pointwise) {
        im2col(g, xn, col.data());
        src = col.data();
      }
      Eigen::Map<const RowMat<T>> C(src, K, P);
      Eigen::Map<RowMat<T>> Y(y.data() + static_cast<std::size_t>(n * Co * P), Co, P);
      Y.noalias() = W * C;
    }
  }
}

template <typename T>
void conv2d_grad_input(const ConvGeometry& g, std::span<const T> dy, std::span<const T> w, std::span<T> dx) {
  g.validate();
  const auto K = static_cast<Eigen::Index>(g.in_channels * g.kernel_h * g.kernel_w);
  const auto P = static_cast<Eigen::Index>(g.out_h() * g.out_w());
  const auto Co = static_cast<Eigen::Index>(g.out_channels);
  const std::size_t x_stride = g.in_channels * g.in_h * g.in_w;
  Eigen::Map<const RowMat<T>> W(w.data(), Co, K);
  const bool pointwise = is_pointwise(g);
  const auto batch = static_cast<std::ptrdiff_t>(g.batch);
#pragma omp parallel
  {
    std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(K * P));
#pragma omp for schedule(static)
    for (std::ptrdiff_t n = 0; n < batch; ++n) {
      Eigen::Map<const RowMat<T>> DY(dy.data() + static_cast<std::size_t>(n * Co * P), Co, P);
      T* dxn = dx.data() + static_cast<std::size_t>(n) * x_stride;
      if (pointwise) {
        Eigen::Map<RowMat<T>> DX(dxn, K, P);
        DX.noalias() = W.transpose() * DY;
        continue;
      }
      Eigen::Map<RowMat<T>> C(col.data(), K, P);
      C.noalias() = W.transpose() * DY;
      std::fill(dxn, dxn + x_stride, T{0});
      col2im(g, col.data(), dxn);
    }
  }
}

template <typename T>
void conv2d_grad_weight(const ConvGeometry& g, std::span<const T> x, std::span<const T> dy, std::span<T> dw) {
  g.validate();
  const auto K = static_cast<Eigen::Index>(g.in_channels * g.kernel_h * g.kernel_w);
  const auto P = static_cast<Eigen::Index>(g.out_h() * g.out_w());
  const auto Co = static_cast<Eigen::Index>(g.out_channels);
  const auto B = static_cast<Eigen::Index>(g.batch);
  const std::size_t x_stride = g.in_channels * g.in_h * g.in_w;
  // Lay all samples side by side so a single GEMM performs the batch reduction.
  RowMat<T> cols(K, B * P);
  RowMat<T> dys(Co, B * P);
  const auto batch = static_cast<std::ptrdiff_t>(g.batch);
  const bool pointwise = is_pointwise(g);
#pragma omp parallel
  {
    std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(K * P));
#pragma omp for schedule(static)
    for (std::ptrdiff_t n = 0; n < batch; ++n) {
      const T* xn = x.data() + static_cast<std::size_t>(n) * x_stride;
      const T* src = xn;
      if (!pointwise) {
        im2col(g, xn, col.data());
        src = col.data();
      }
      cols.block(0, n * P, K, P) = Eigen::Map<const RowMat<T>>(src, K, P);
      dys.block(0, n * P, Co, P) = Eigen::Map<const RowMat<T>>(dy.data() + static_cast<std::size_t>(n * Co * P), Co, P);
    }
  }
  Eigen::Map<RowMat<T>> DW(dw.data(), Co, K);
  DW.noalias() = dys * cols.transpose();
}

template void conv2d<float>(const ConvGeometry&, std::span<const float>, std::span<const float>, std::span<float>);
template void conv2d<double>(const ConvGeometry&, std::span<const double>, std::span<const double>, std::span<double>);
template void conv2d_grad_input<float>(const ConvGeometry&, std::span<const float>, std::span<const float>,
                                       std::span<float>);
template void conv2d_grad_input<double>(const ConvGeometry&, std::span<const double>, std::span<const double>,
                                        std::span<double>);
template void conv2d_grad_weight<float>(const ConvGeometry&, std::span<const float>, std::span<const float>,
                                        std::span<float>);
template void conv2d_grad_weight<double>(const ConvGeometry&, std::span<const double>, std::span<const double>,
                                         std::span<double>);

}  // namespace kernels::parallel
}  // namespace ldgan
