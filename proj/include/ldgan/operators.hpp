#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ldgan/dataio.hpp"

namespace ldgan {

enum class OperatorKind { cassi, decimation, rgb };
std::string to_string(OperatorKind k);

/// Channel-planar measurement extents: value(c, r, q) at (c * rows + r) * cols + q.
struct MeasurementShape {
  std::size_t channels = 1;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const { return channels * rows * cols; }
  bool operator==(const MeasurementShape&) const = default;
};

struct Measurement {
  OperatorKind kind = OperatorKind::cassi;
  MeasurementShape shape;
  std::vector<double> values;
  /// Infinity for a noiseless measurement.
  double snr_db = std::numeric_limits<double>::infinity();
};

/// Binary M x N mask.
struct CodedAperture {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> mask;

  double transmittance() const;
};

/// Exactly round(fraction * M * N) open entries at seeded random positions.
CodedAperture random_coded_aperture(std::size_t height, std::size_t width, double fraction, std::uint64_t seed);

/// 3 x L row-major, rows nonnegative and summing to one.
struct SpectralResponse {
  std::size_t bands = 0;
  std::vector<double> weights;

  double at(std::size_t channel, std::size_t band) const { return weights[channel * bands + band]; }
};

/// Gaussian sensitivities centred at 20/50/80% of the band axis, FWHM 30% of the axis.
SpectralResponse default_spectral_response(std::size_t bands);

/// A linear map from a cube (vectorized band-major, then row-major) to a measurement.
class ForwardOperator {
 public:
  virtual ~ForwardOperator() = default;

  virtual OperatorKind kind() const = 0;
  const CubeDims& input_dims() const { return dims_; }
  virtual MeasurementShape output_shape() const = 0;

  virtual void apply(std::span<const double> x, std::span<double> y) const = 0;
  virtual void apply(std::span<const float> x, std::span<float> y) const = 0;
  virtual void adjoint(std::span<const double> y, std::span<double> x) const = 0;
  virtual void adjoint(std::span<const float> y, std::span<float> x) const = 0;

  Measurement measure(const SpectralCube& cube) const;
  SpectralCube adjoint(const Measurement& m) const;
  /// A^T y divided elementwise by A^T A 1 (zero where that is zero). Cheap initial estimate.
  SpectralCube normalized_adjoint(const Measurement& m) const;
  /// Largest eigenvalue of A^T A by power iteration.
  double lipschitz(int iterations = 100) const;

 protected:
  explicit ForwardOperator(CubeDims dims) : dims_(dims) {}
  void check_input(const SpectralCube& cube) const;

 private:
  CubeDims dims_;
};

class CassiOperator final : public ForwardOperator {
 public:
  CassiOperator(CubeDims dims, CodedAperture ca);
  OperatorKind kind() const override { return OperatorKind::cassi; }
  MeasurementShape output_shape() const override;
  void apply(std::span<const double> x, std::span<double> y) const override;
  void apply(std::span<const float> x, std::span<float> y) const override;
  void adjoint(std::span<const double> y, std::span<double> x) const override;
  void adjoint(std::span<const float> y, std::span<float> x) const override;
  using ForwardOperator::adjoint;
  const CodedAperture& aperture() const { return ca_; }

 private:
  template <typename T>
  void forward_impl(std::span<const T> x, std::span<T> y) const;
  template <typename T>
  void adjoint_impl(std::span<const T> y, std::span<T> x) const;
  CodedAperture ca_;
};

/// Box average over s x s spatial blocks and groups of k_l bands.
class DecimationOperator final : public ForwardOperator {
 public:
  DecimationOperator(CubeDims dims, std::size_t spatial_factor, std::size_t spectral_factor);
  /// k_s is the joint spatial factor (s^2) and must be a perfect square.
  static DecimationOperator from_ks(CubeDims dims, std::size_t k_s, std::size_t k_l);
  OperatorKind kind() const override { return OperatorKind::decimation; }
  MeasurementShape output_shape() const override;
  void apply(std::span<const double> x, std::span<double> y) const override;
  void apply(std::span<const float> x, std::span<float> y) const override;
  void adjoint(std::span<const double> y, std::span<double> x) const override;
  void adjoint(std::span<const float> y, std::span<float> x) const override;
  using ForwardOperator::adjoint;
  std::size_t spatial_factor() const { return s_; }
  std::size_t spectral_factor() const { return kl_; }

 private:
  template <typename T>
  void forward_impl(std::span<const T> x, std::span<T> y) const;
  template <typename T>
  void adjoint_impl(std::span<const T> y, std::span<T> x) const;
  std::size_t s_;
  std::size_t kl_;
};

class RgbOperator final : public ForwardOperator {
 public:
  RgbOperator(CubeDims dims, SpectralResponse response);
  OperatorKind kind() const override { return OperatorKind::rgb; }
  MeasurementShape output_shape() const override;
  void apply(std::span<const double> x, std::span<double> y) const override;
  void apply(std::span<const float> x, std::span<float> y) const override;
  void adjoint(std::span<const double> y, std::span<double> x) const override;
  void adjoint(std::span<const float> y, std::span<float> x) const override;
  using ForwardOperator::adjoint;
  const SpectralResponse& response() const { return r_; }

 private:
  template <typename T>
  void forward_impl(std::span<const T> x, std::span<T> y) const;
  template <typename T>
  void adjoint_impl(std::span<const T> y, std::span<T> x) const;
  SpectralResponse r_;
};

// Cube-level entry points.
Measurement cassi_forward(const SpectralCube& x, const CodedAperture& ca);
SpectralCube cassi_adjoint(const Measurement& y, const CodedAperture& ca);
Measurement decimate(const SpectralCube& x, std::size_t k_s, std::size_t k_l);
Measurement rgb_project(const SpectralCube& x, const SpectralResponse& r);

/// Additive white Gaussian noise at the requested SNR (signal power = mean square of y).
Measurement add_noise(const Measurement& y, double snr_db, std::uint64_t seed);

/// Row-major explicit matrix.
struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

inline constexpr std::size_t kDenseInputLimit = 4096;

/// Column k is the operator applied to basis vector e_k. Input size must be <= kDenseInputLimit.
DenseMatrix as_dense(const ForwardOperator& op);

// Coded apertures and spectral responses are stored as .scub cubes:
// a CA as M x N x 1, a response as 1 x 3 x L.
SpectralCube aperture_to_cube(const CodedAperture& ca);
CodedAperture aperture_from_cube(const SpectralCube& cube);
SpectralCube response_to_cube(const SpectralResponse& r);
SpectralResponse response_from_cube(const SpectralCube& cube);

}  // namespace ldgan
