#include <algorithm>

#include "ldgan/errors.hpp"
#include "ldgan/kernels.hpp"

namespace ldgan {

void ConvGeometry::validate() const {
  if (stride == 0) throw ConfigError("convolution stride must be >= 1");
  if (kernel_h == 0 || kernel_w == 0) throw ConfigError("convolution kernel must be non-empty");
  if (in_h + 2 * pad < kernel_h || in_w + 2 * pad < kernel_w) {
    throw ConfigError("convolution kernel larger than padded input");
  }
}

namespace kernels::serial {

namespace {

// Visits every (output pixel, kernel tap) pair that lands inside the input.
template <typename F>
void for_each_tap(const ConvGeometry& g, F&& f) {
  const std::size_t oh_n = g.out_h();
  const std::size_t ow_n = g.out_w();
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t co = 0; co < g.out_channels; ++co) {
      for (std::size_t oh = 0; oh < oh_n; ++oh) {
        for (std::size_t ow = 0; ow < ow_n; ++ow) {
          const std::size_t yi = ((n * g.out_channels + co) * oh_n + oh) * ow_n + ow;
          for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
            for (std::size_t kh = 0; kh < g.kernel_h; ++kh) {
              const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + kh) - static_cast<std::ptrdiff_t>(g.pad);
              if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
              for (std::size_t kw = 0; kw < g.kernel_w; ++kw) {
                const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kw) - static_cast<std::ptrdiff_t>(g.pad);
                if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
                const std::size_t xi = ((n * g.in_channels + ci) * g.in_h + static_cast<std::size_t>(ih)) * g.in_w +
                                       static_cast<std::size_t>(iw);
                const std::size_t wi = ((co * g.in_channels + ci) * g.kernel_h + kh) * g.kernel_w + kw;
                f(xi, wi, yi);
              }
            }
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
  std::fill(y.begin(), y.end(), T{0});
  for_each_tap(g, [&](std::size_t xi, std::size_t wi, std::size_t yi) { y[yi] += x[xi] * w[wi]; });
}

template <typename T>
void conv2d_grad_input(const ConvGeometry& g, std::span<const T> dy, std::span<const T> w, std::span<T> dx) {
  g.validate();
  std::fill(dx.begin(), dx.end(), T{0});
  for_each_tap(g, [&](std::size_t xi, std::size_t wi, std::size_t yi) { dx[xi] += w[wi] * dy[yi]; });
}

template <typename T>
void conv2d_grad_weight(const ConvGeometry& g, std::span<const T> x, std::span<const T> dy, std::span<T> dw) {
  g.validate();
  std::fill(dw.begin(), dw.end(), T{0});
  for_each_tap(g, [&](std::size_t xi, std::size_t wi, std::size_t yi) { dw[wi] += x[xi] * dy[yi]; });
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

}  // namespace kernels::serial
}  // namespace ldgan
