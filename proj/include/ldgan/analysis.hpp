#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ldgan/dataio.hpp"

namespace ldgan {

using Spectrum = std::vector<double>;

/// PSNR in dB; +infinity for identical cubes.
double psnr(const SpectralCube& x, const SpectralCube& y, double peak = 1.0);
inline constexpr double kPsnrCsvCap = 99.0;
/// PSNR clamped for CSV output.
double psnr_capped(double db);

struct SsimOptions {
  enum class Window { gaussian, full_image };
  Window window = Window::gaussian;
  std::size_t size = 7;
  double sigma = 1.5;
  double peak = 1.0;
};

/// Mean over bands of the mean SSIM map. The Gaussian window slides over the valid
/// region only; an image smaller than the window falls back to full-image statistics.
double ssim(const SpectralCube& x, const SpectralCube& y, const SsimOptions& opts = {});

/// Every pixel spectrum of every cube, cube by cube in row-major pixel order.
std::vector<Spectrum> collect_pixels(std::span<const SpectralCube> cubes);

struct EndmemberSet {
  std::vector<Spectrum> spectra;
  /// Index into the pixel list each endmember was taken from.
  std::vector<std::size_t> pixel_indices;
};

/// Vertex component analysis with a fixed q-dimensional SVD projection.
EndmemberSet vca_endmembers(std::span<const Spectrum> pixels, std::size_t q, std::uint64_t seed);

struct AbundanceResult {
  std::vector<std::vector<double>> coefficients;
  std::vector<double> residuals;
};

/// Nonnegative least squares per pixel by projected gradient.
AbundanceResult abundances(std::span<const Spectrum> pixels, std::span<const Spectrum> endmembers,
                           int iterations = 500, double tolerance = 1e-10);

double spectral_angle(std::span<const double> a, std::span<const double> b);

struct EndmemberMatch {
  /// found[permutation[j]] is paired with reference[j].
  std::vector<std::size_t> permutation;
  std::vector<double> angles;
  double max_angle = 0.0;
};

/// Pairing of two equally sized endmember sets that minimizes the largest spectral angle.
EndmemberMatch match_endmembers(std::span<const Spectrum> found, std::span<const Spectrum> reference);

/// Elementwise mean of several equally sized endmember sets, after matching each to the first.
std::vector<Spectrum> mean_endmembers(std::span<const EndmemberSet> sets);

struct PcaReport {
  std::vector<std::vector<double>> components;
  /// Sample variances along each component, nonincreasing.
  std::vector<double> variances;
  /// projections[i][k] = coordinate of sample i on component k.
  std::vector<std::vector<double>> projections;
  double total_variance = 0.0;
  /// Set when fewer than k components carry nonzero variance.
  bool rank_deficient = false;
};

PcaReport pca_report(std::span<const std::vector<double>> samples, std::size_t k);

}  // namespace ldgan
