#include "ldgan/operators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ldgan/rng.hpp"

namespace ldgan {

std::string to_string(OperatorKind k) {
  switch (k) {
    case OperatorKind::cassi:
      return "cassi";
    case OperatorKind::decimation:
      return "decimation";
    case OperatorKind::rgb:
      return "rgb";
  }
  return "?";
}

double CodedAperture::transmittance() const {
  if (mask.empty()) return 0.0;
  return std::accumulate(mask.begin(), mask.end(), 0.0) / static_cast<double>(mask.size());
}

CodedAperture random_coded_aperture(std::size_t height, std::size_t width, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("coded aperture transmittance must lie in [0, 1]");
  if (height == 0 || width == 0) throw ConfigError("coded aperture must be non-empty");
  CodedAperture ca{height, width, std::vector<double>(height * width, 0.0)};
  const auto open = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ca.mask.size())));
  std::fill_n(ca.mask.begin(), open, 1.0);
  Rng rng(seed);
  std::shuffle(ca.mask.begin(), ca.mask.end(), rng.engine());
  return ca;
}

SpectralResponse default_spectral_response(std::size_t bands) {
  if (bands == 0) throw ConfigError("spectral response needs at least one band");
  SpectralResponse r{bands, std::vector<double>(3 * bands)};
  const double span = bands > 1 ? static_cast<double>(bands - 1) : 1.0;
  const double fwhm = 0.3 * span;
  const double sigma = fwhm / (2.0 * std::sqrt(2.0 * std::log(2.0)));
  const double centers[3] = {0.2 * span, 0.5 * span, 0.8 * span};
  for (std::size_t c = 0; c < 3; ++c) {
    double total = 0;
    for (std::size_t l = 0; l < bands; ++l) {
      const double d = static_cast<double>(l) - centers[c];
      r.weights[c * bands + l] = std::exp(-d * d / (2.0 * sigma * sigma));
      total += r.weights[c * bands + l];
    }
    for (std::size_t l = 0; l < bands; ++l) r.weights[c * bands + l] /= total;
  }
  return r;
}

// --- base -------------------------------------------------------------------------

void ForwardOperator::check_input(const SpectralCube& cube) const {
  if (cube.dims() != dims_) {
    throw DimensionError(to_string(kind()) + " operator expects a " + dims_str(dims_) + " cube, got " +
                         dims_str(cube.dims()));
  }
}

Measurement ForwardOperator::measure(const SpectralCube& cube) const {
  check_input(cube);
  Measurement m{kind(), output_shape(), std::vector<double>(output_shape().size())};
  apply(std::span<const double>(cube.values()), std::span<double>(m.values));
  return m;
}

SpectralCube ForwardOperator::adjoint(const Measurement& m) const {
  if (m.shape != output_shape() || m.values.size() != output_shape().size()) {
    throw DimensionError(to_string(kind()) + " adjoint: measurement shape does not match the operator");
  }
  SpectralCube cube(dims_.height, dims_.width, dims_.bands);
  adjoint(std::span<const double>(m.values), std::span<double>(cube.values()));
  return cube;
}

SpectralCube ForwardOperator::normalized_adjoint(const Measurement& m) const {
  SpectralCube num = adjoint(m);
  SpectralCube ones(dims_.height, dims_.width, dims_.bands, 1.0);
  const Measurement a1 = measure(ones);
  const SpectralCube den = adjoint(a1);
  for (std::size_t i = 0; i < num.values().size(); ++i) {
    num.values()[i] = den.values()[i] > 0 ? num.values()[i] / den.values()[i] : 0.0;
  }
  return num;
}

double ForwardOperator::lipschitz(int iterations) const {
  std::vector<double> x(dims_.size()), y(output_shape().size());
  Rng rng(12345);
  for (auto& v : x) v = rng.normal();
  double lambda = 0;
  for (int it = 0; it < iterations; ++it) {
    double n = std::sqrt(std::inner_product(x.begin(), x.end(), x.begin(), 0.0));
    if (n == 0) return 0;
    for (auto& v : x) v /= n;
    apply(std::span<const double>(x), std::span<double>(y));
    adjoint(std::span<const double>(y), std::span<double>(x));
    lambda = std::sqrt(std::inner_product(x.begin(), x.end(), x.begin(), 0.0));
  }
  return lambda;
}

// --- CASSI ----------------------------------------------------------------------------

CassiOperator::CassiOperator(CubeDims dims, CodedAperture ca) : ForwardOperator(dims), ca_(std::move(ca)) {
  if (ca_.height != dims.height || ca_.width != dims.width || ca_.mask.size() != dims.height * dims.width) {
    throw DimensionError("coded aperture " + std::to_string(ca_.height) + "x" + std::to_string(ca_.width) +
                         " does not match cube " + dims_str(dims));
  }
}

MeasurementShape CassiOperator::output_shape() const {
  const auto& d = input_dims();
  return {1, d.height, d.width + d.bands - 1};
}

template <typename T>
void CassiOperator::forward_impl(std::span<const T> x, std::span<T> y) const {
  const auto& d = input_dims();
  const std::size_t M = d.height, N = d.width, L = d.bands, W = N + L - 1;
  std::fill(y.begin(), y.end(), T{0});
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t i = 0; i < M; ++i) {
      const T* xr = x.data() + (l * M + i) * N;
      const double* cr = ca_.mask.data() + i * N;
      T* yr = y.data() + i * W + l;
      for (std::size_t j = 0; j < N; ++j) yr[j] += static_cast<T>(cr[j]) * xr[j];
    }
}

template <typename T>
void CassiOperator::adjoint_impl(std::span<const T> y, std::span<T> x) const {
  const auto& d = input_dims();
  const std::size_t M = d.height, N = d.width, L = d.bands, W = N + L - 1;
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t i = 0; i < M; ++i) {
      T* xr = x.data() + (l * M + i) * N;
      const double* cr = ca_.mask.data() + i * N;
      const T* yr = y.data() + i * W + l;
      for (std::size_t j = 0; j < N; ++j) xr[j] = static_cast<T>(cr[j]) * yr[j];
    }
}

void CassiOperator::apply(std::span<const double> x, std::span<double> y) const { forward_impl(x, y); }
void CassiOperator::apply(std::span<const float> x, std::span<float> y) const { forward_impl(x, y); }
void CassiOperator::adjoint(std::span<const double> y, std::span<double> x) const { adjoint_impl(y, x); }
void CassiOperator::adjoint(std::span<const float> y, std::span<float> x) const { adjoint_impl(y, x); }

// --- decimation -------------------------------------------------------------------------

DecimationOperator::DecimationOperator(CubeDims dims, std::size_t spatial_factor, std::size_t spectral_factor)
    : ForwardOperator(dims), s_(spatial_factor), kl_(spectral_factor) {
  if (s_ == 0 || kl_ == 0) throw ConfigError("decimation factors must be >= 1");
  if (dims.height % s_ || dims.width % s_) {
    throw ConfigError("spatial decimation factor " + std::to_string(s_) + " does not divide " + dims_str(dims));
  }
  if (dims.bands % kl_) {
    throw ConfigError("spectral decimation factor k_l=" + std::to_string(kl_) + " does not divide " +
                      std::to_string(dims.bands) + " bands");
  }
}

DecimationOperator DecimationOperator::from_ks(CubeDims dims, std::size_t k_s, std::size_t k_l) {
  const auto s = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(k_s))));
  if (s * s != k_s) throw ConfigError("k_s=" + std::to_string(k_s) + " is not a perfect square");
  return DecimationOperator(dims, s, k_l);
}

MeasurementShape DecimationOperator::output_shape() const {
  const auto& d = input_dims();
  return {d.bands / kl_, d.height / s_, d.width / s_};
}

template <typename T>
void DecimationOperator::forward_impl(std::span<const T> x, std::span<T> y) const {
  const auto& d = input_dims();
  const std::size_t M = d.height, N = d.width, L = d.bands;
  const std::size_t Mo = M / s_, No = N / s_;
  const T w = T{1} / static_cast<T>(kl_ * s_ * s_);
  std::fill(y.begin(), y.end(), T{0});
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t i = 0; i < M; ++i)
      for (std::size_t j = 0; j < N; ++j) y[((l / kl_) * Mo + i / s_) * No + j / s_] += w * x[(l * M + i) * N + j];
}

template <typename T>
void DecimationOperator::adjoint_impl(std::span<const T> y, std::span<T> x) const {
  const auto& d = input_dims();
  const std::size_t M = d.height, N = d.width, L = d.bands;
  const std::size_t Mo = M / s_, No = N / s_;
  const T w = T{1} / static_cast<T>(kl_ * s_ * s_);
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t i = 0; i < M; ++i)
      for (std::size_t j = 0; j < N; ++j) x[(l * M + i) * N + j] = w * y[((l / kl_) * Mo + i / s_) * No + j / s_];
}

void DecimationOperator::apply(std::span<const double> x, std::span<double> y) const { forward_impl(x, y); }
void DecimationOperator::apply(std::span<const float> x, std::span<float> y) const { forward_impl(x, y); }
void DecimationOperator::adjoint(std::span<const double> y, std::span<double> x) const { adjoint_impl(y, x); }
void DecimationOperator::adjoint(std::span<const float> y, std::span<float> x) const { adjoint_impl(y, x); }

// --- RGB --------------------------------------------------------------------------------

RgbOperator::RgbOperator(CubeDims dims, SpectralResponse response) : ForwardOperator(dims), r_(std::move(response)) {
  if (r_.bands != dims.bands || r_.weights.size() != 3 * dims.bands) {
    throw DimensionError("spectral response has " + std::to_string(r_.bands) + " columns, cube has " +
                         std::to_string(dims.bands) + " bands");
  }
}

MeasurementShape RgbOperator::output_shape() const {
  const auto& d = input_dims();
  return {3, d.height, d.width};
}

template <typename T>
void RgbOperator::forward_impl(std::span<const T> x, std::span<T> y) const {
  const auto& d = input_dims();
  const std::size_t P = d.height * d.width, L = d.bands;
  std::fill(y.begin(), y.end(), T{0});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t l = 0; l < L; ++l) {
      const T w = static_cast<T>(r_.at(c, l));
      for (std::size_t p = 0; p < P; ++p) y[c * P + p] += w * x[l * P + p];
    }
}

template <typename T>
void RgbOperator::adjoint_impl(std::span<const T> y, std::span<T> x) const {
  const auto& d = input_dims();
  const std::size_t P = d.height * d.width, L = d.bands;
  std::fill(x.begin(), x.end(), T{0});
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t c = 0; c < 3; ++c) {
      const T w = static_cast<T>(r_.at(c, l));
      for (std::size_t p = 0; p < P; ++p) x[l * P + p] += w * y[c * P + p];
    }
}

void RgbOperator::apply(std::span<const double> x, std::span<double> y) const { forward_impl(x, y); }
void RgbOperator::apply(std::span<const float> x, std::span<float> y) const { forward_impl(x, y); }
void RgbOperator::adjoint(std::span<const double> y, std::span<double> x) const { adjoint_impl(y, x); }
void RgbOperator::adjoint(std::span<const float> y, std::span<float> x) const { adjoint_impl(y, x); }

// --- free functions ------------------------------------------------------------------------

Measurement cassi_forward(const SpectralCube& x, const CodedAperture& ca) {
  return CassiOperator(x.dims(), ca).measure(x);
}

SpectralCube cassi_adjoint(const Measurement& y, const CodedAperture& ca) {
  if (y.shape.rows != ca.height || y.shape.channels != 1 || y.shape.cols < ca.width) {
    throw DimensionError("cassi_adjoint: measurement does not match the coded aperture");
  }
  const CubeDims dims{ca.height, ca.width, y.shape.cols - ca.width + 1};
  return CassiOperator(dims, ca).adjoint(y);
}

Measurement decimate(const SpectralCube& x, std::size_t k_s, std::size_t k_l) {
  return DecimationOperator::from_ks(x.dims(), k_s, k_l).measure(x);
}

Measurement rgb_project(const SpectralCube& x, const SpectralResponse& r) { return RgbOperator(x.dims(), r).measure(x); }

Measurement add_noise(const Measurement& y, double snr_db, std::uint64_t seed) {
  if (std::isinf(snr_db) && snr_db > 0) return y;
  if (!std::isfinite(snr_db)) throw ConfigError("add_noise: SNR must be finite or +infinity");
  Measurement out = y;
  double power = 0;
  for (double v : y.values) power += v * v;
  power /= static_cast<double>(std::max<std::size_t>(1, y.values.size()));
  const double sigma = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
  Rng rng(seed);
  for (auto& v : out.values) v += rng.normal(0.0, sigma);
  out.snr_db = snr_db;
  return out;
}

DenseMatrix as_dense(const ForwardOperator& op) {
  const std::size_t n = op.input_dims().size();
  if (n > kDenseInputLimit) {
    throw ConfigError("as_dense: input size " + std::to_string(n) + " exceeds " + std::to_string(kDenseInputLimit));
  }
  const std::size_t m = op.output_shape().size();
  DenseMatrix A{m, n, std::vector<double>(m * n)};
  std::vector<double> e(n, 0.0), col(m);
  for (std::size_t k = 0; k < n; ++k) {
    e[k] = 1.0;
    op.apply(std::span<const double>(e), std::span<double>(col));
    e[k] = 0.0;
    for (std::size_t r = 0; r < m; ++r) A.data[r * n + k] = col[r];
  }
  return A;
}

SpectralCube aperture_to_cube(const CodedAperture& ca) {
  return SpectralCube(CubeDims{ca.height, ca.width, 1}, ca.mask);
}

CodedAperture aperture_from_cube(const SpectralCube& cube) {
  if (cube.bands() != 1) throw FormatError("coded aperture cube must have exactly one band");
  for (double v : cube.values())
    if (v != 0.0 && v != 1.0) throw FormatError("coded aperture entries must be 0 or 1");
  return CodedAperture{cube.height(), cube.width(), cube.values()};
}

SpectralCube response_to_cube(const SpectralResponse& r) { return SpectralCube(CubeDims{1, 3, r.bands}, [&] {
  // band-planar layout of a 1 x 3 x L cube: value(l, 0, c)
  std::vector<double> v(3 * r.bands);
  for (std::size_t l = 0; l < r.bands; ++l)
    for (std::size_t c = 0; c < 3; ++c) v[l * 3 + c] = r.at(c, l);
  return v;
}()); }

SpectralResponse response_from_cube(const SpectralCube& cube) {
  if (cube.height() != 1 || cube.width() != 3) throw FormatError("spectral response cube must be 1 x 3 x L");
  SpectralResponse r{cube.bands(), std::vector<double>(3 * cube.bands())};
  for (std::size_t l = 0; l < cube.bands(); ++l)
    for (std::size_t c = 0; c < 3; ++c) r.weights[c * cube.bands() + l] = cube.at(l, 0, c);
  return r;
}

}  // namespace ldgan
