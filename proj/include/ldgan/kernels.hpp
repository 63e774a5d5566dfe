#pragma once

#include <cstddef>
#include <span>

namespace ldgan {

/// Extents of one 2-D convolution. `in_*` is the conv2d input side, `out_*` the
/// output side; a transposed convolution uses the same geometry with roles swapped.
struct ConvGeometry {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t in_h = 1;
  std::size_t in_w = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;

  std::size_t out_h() const { return (in_h + 2 * pad - kernel_h) / stride + 1; }
  std::size_t out_w() const { return (in_w + 2 * pad - kernel_w) / stride + 1; }
  std::size_t input_size() const { return batch * in_channels * in_h * in_w; }
  std::size_t output_size() const { return batch * out_channels * out_h() * out_w(); }
  std::size_t weight_size() const { return out_channels * in_channels * kernel_h * kernel_w; }

  /// Throws ConfigError for stride 0 or a kernel larger than the padded input.
  void validate() const;
};

// Three primitives cover conv2d and conv_transpose2d forward and backward:
//   conv2d            y  = C(w) x
//   conv2d_grad_input dx = C(w)^T dy   (also the transposed-convolution forward)
//   conv2d_grad_weight dw = d<C(w) x, dy>/dw
// All outputs are overwritten, not accumulated. Weight layout is
// (out_channels, in_channels, kernel_h, kernel_w).

namespace kernels::serial {

// Direct sliding-window loops. Kept as the oracle for the parallel versions.
template <typename T>
void conv2d(const ConvGeometry& g, std::span<const T> x, std::span<const T> w, std::span<T> y);
template <typename T>
void conv2d_grad_input(const ConvGeometry& g, std::span<const T> dy, std::span<const T> w, std::span<T> dx);
template <typename T>
void conv2d_grad_weight(const ConvGeometry& g, std::span<const T> x, std::span<const T> dy, std::span<T> dw);

}  // namespace kernels::serial

namespace kernels::parallel {

// im2col + GEMM, OpenMP over the batch. Reductions run in a fixed order so
// results do not depend on the thread count.
template <typename T>
void conv2d(const ConvGeometry& g, std::span<const T> x, std::span<const T> w, std::span<T> y);
template <typename T>
void conv2d_grad_input(const ConvGeometry& g, std::span<const T> dy, std::span<const T> w, std::span<T> dx);
template <typename T>
void conv2d_grad_weight(const ConvGeometry& g, std::span<const T> x, std::span<const T> dy, std::span<T> dw);

}  // namespace kernels::parallel

/// Applies LDGAN_THREADS (if set) to the OpenMP runtime. Returns the thread count in use.
int configure_threads_from_env();

}  // namespace ldgan
