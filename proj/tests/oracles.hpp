#pragma once

#include <cstdint>
#include <vector>

#include "ldgan/operators.hpp"
#include "ldgan/rng.hpp"

namespace testsupport {

using ldgan::CodedAperture;
using ldgan::CubeDims;
using ldgan::DenseMatrix;
using ldgan::Rng;
using ldgan::SpectralResponse;

inline std::size_t vidx(const CubeDims& d, std::size_t l, std::size_t i, std::size_t j) {
  return (l * d.height + i) * d.width + j;
}

// Independent explicit matrices built from the operator definitions.
inline DenseMatrix cassi_matrix(const CubeDims& d, const CodedAperture& ca) {
  const std::size_t cols = d.width + d.bands - 1;
  DenseMatrix m{d.height * cols, d.size(), {}};
  m.data.assign(m.rows * m.cols, 0.0);
  for (std::size_t i = 0; i < d.height; ++i)
    for (std::size_t jo = 0; jo < cols; ++jo)
      for (std::size_t l = 0; l < d.bands; ++l) {
        if (jo < l || jo - l >= d.width) continue;
        const std::size_t j = jo - l;
        m.data[(i * cols + jo) * m.cols + vidx(d, l, i, j)] = ca.mask[i * d.width + j];
      }
  return m;
}

inline DenseMatrix decimation_matrix(const CubeDims& d, std::size_t s, std::size_t kl) {
  const std::size_t R = d.height / s, C = d.width / s, G = d.bands / kl;
  DenseMatrix m{G * R * C, d.size(), {}};
  m.data.assign(m.rows * m.cols, 0.0);
  const double w = 1.0 / static_cast<double>(s * s * kl);
  for (std::size_t g = 0; g < G; ++g)
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t l = g * kl; l < (g + 1) * kl; ++l)
          for (std::size_t i = r * s; i < (r + 1) * s; ++i)
            for (std::size_t j = c * s; j < (c + 1) * s; ++j) m.data[((g * R + r) * C + c) * m.cols + vidx(d, l, i, j)] = w;
  return m;
}

inline DenseMatrix rgb_matrix(const CubeDims& d, const SpectralResponse& r) {
  DenseMatrix m{3 * d.height * d.width, d.size(), {}};
  m.data.assign(m.rows * m.cols, 0.0);
  for (std::size_t ch = 0; ch < 3; ++ch)
    for (std::size_t i = 0; i < d.height; ++i)
      for (std::size_t j = 0; j < d.width; ++j)
        for (std::size_t l = 0; l < d.bands; ++l)
          m.data[((ch * d.height + i) * d.width + j) * m.cols + vidx(d, l, i, j)] = r.at(ch, l);
  return m;
}

inline std::vector<double> matvec(const DenseMatrix& m, const std::vector<double>& x) {
  std::vector<double> y(m.rows, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) y[r] += m.at(r, c) * x[c];
  return y;
}

inline std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

}  // namespace testsupport
