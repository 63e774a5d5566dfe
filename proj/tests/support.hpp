#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "ldgan/dataio.hpp"
#include "ldgan/optim.hpp"
#include "ldgan/rng.hpp"
#include "ldgan/tensor.hpp"

namespace testsupport {

template <typename T>
ldgan::Tensor<T> random_tensor(ldgan::Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  ldgan::Rng rng(seed);
  ldgan::Tensor<T> t(std::move(shape));
  for (auto& v : t.storage()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

/// Moves entries away from zero so kinked activations stay differentiable under finite differences.
inline void nudge_from_zero(ldgan::Tensor<double>& t, double margin = 0.05) {
  for (auto& v : t.storage())
    if (std::abs(v) < margin) v = v < 0 ? v - margin : v + margin;
}

inline double inner(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(const std::vector<double>& a) { return std::sqrt(inner(a, a)); }

/// Direct definition of a strided, zero-padded cross-correlation. Independent of the library kernels.
inline ldgan::Tensor<double> conv_oracle(const ldgan::Tensor<double>& x, const ldgan::Tensor<double>& w,
                                         std::size_t stride, std::size_t pad) {
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = w.dim(0), KH = w.dim(2), KW = w.dim(3);
  const std::size_t OH = (H + 2 * pad - KH) / stride + 1, OW = (W + 2 * pad - KW) / stride + 1;
  ldgan::Tensor<double> y({B, O, OH, OW});
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t i = 0; i < OH; ++i)
        for (std::size_t j = 0; j < OW; ++j) {
          double acc = 0;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t a = 0; a < KH; ++a)
              for (std::size_t b = 0; b < KW; ++b) {
                const long r = static_cast<long>(i * stride + a) - static_cast<long>(pad);
                const long q = static_cast<long>(j * stride + b) - static_cast<long>(pad);
                if (r < 0 || q < 0 || r >= static_cast<long>(H) || q >= static_cast<long>(W)) continue;
                acc += x.at(n, c, static_cast<std::size_t>(r), static_cast<std::size_t>(q)) * w.at(o, c, a, b);
              }
          y.at(n, o, i, j) = acc;
        }
  return y;
}

inline ldgan::SpectralCube random_cube(std::size_t m, std::size_t n, std::size_t l, std::uint64_t seed) {
  ldgan::Rng rng(seed);
  ldgan::SpectralCube c(m, n, l);
  for (auto& v : c.values()) v = rng.uniform();
  return c;
}

/// Settings for whole-network checks. Ridders extrapolation from eps 1e-2 copes with both large
/// losses over tiny gradient coordinates and the strong curvature of two-sample batch norm;
/// steps that cross a relu kink are dropped.
inline ldgan::GradCheckOptions network_check_options(std::uint64_t seed, std::size_t coords = 16) {
  ldgan::GradCheckOptions o;
  o.eps = 1e-2;
  o.ridders = true;
  o.min_eps = 1e-6;
  o.max_coords_per_param = coords;
  o.seed = seed;
  return o;
}

}  // namespace testsupport
