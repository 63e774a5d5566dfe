#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ldgan/rng.hpp"
#include "ldgan/tensor.hpp"

namespace ldgan {

struct CubeDims {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t bands = 0;

  std::size_t size() const { return height * width * bands; }
  bool operator==(const CubeDims&) const = default;
};

std::string dims_str(const CubeDims& d);

/// M x N x L cube stored band-planar: value(l, i, j) at (l * M + i) * N + j.
/// The same layout serves latent cubes (bands = latent channels).
class SpectralCube {
 public:
  SpectralCube() = default;
  SpectralCube(std::size_t height, std::size_t width, std::size_t bands, double fill = 0.0);
  SpectralCube(CubeDims dims, std::vector<double> values);

  const CubeDims& dims() const { return dims_; }
  std::size_t height() const { return dims_.height; }
  std::size_t width() const { return dims_.width; }
  std::size_t bands() const { return dims_.bands; }

  double& at(std::size_t band, std::size_t row, std::size_t col) {
    return values_[(band * dims_.height + row) * dims_.width + col];
  }
  double at(std::size_t band, std::size_t row, std::size_t col) const {
    return values_[(band * dims_.height + row) * dims_.width + col];
  }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  std::vector<double> spectrum(std::size_t row, std::size_t col) const;
  bool within_unit_range() const;

  bool operator==(const SpectralCube&) const = default;

 private:
  CubeDims dims_;
  std::vector<double> values_;
};

enum class Split { train, test };
enum class Provenance { original, geometric, gan_generated };

std::string to_string(Split s);
std::string to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

/// Cubes of one split, all with identical dims, each tagged with its origin.
struct Dataset {
  Split split = Split::train;
  std::vector<SpectralCube> cubes;
  std::vector<Provenance> provenance;

  std::size_t size() const { return cubes.size(); }
  bool empty() const { return cubes.empty(); }
  CubeDims dims() const;
  /// Throws DimensionError when the cube's dims differ from the cubes already present.
  void add(SpectralCube cube, Provenance tag = Provenance::original);
  std::size_t count(Provenance tag) const;
};

struct SynthConfig {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t bands = 8;
  std::size_t count = 400;
  std::size_t materials = 4;
  /// Std-dev (pixels) of the Gaussian blur that shapes the abundance fields.
  double smoothness = 4.0;
  std::uint64_t seed = 0;
};

void validate(const SynthConfig& cfg);

/// The q material signatures (each length L) shared by every cube drawn from `cfg`.
std::vector<std::vector<double>> synth_signatures(const SynthConfig& cfg);

/// Linear-mixture cubes: x(i, j, l) = sum_j a_j(i, j) s_j(l) with smooth
/// abundances summing to one and one pure pixel per material in every cube.
/// Train and test splits share signatures but draw independent abundances.
Dataset synth_dataset(const SynthConfig& cfg, Split split = Split::train);

/// Non-overlapping tiles in row-major tile order.
std::vector<SpectralCube> extract_patches(const SpectralCube& cube, std::size_t size);
SpectralCube reassemble_patches(std::span<const SpectralCube> patches, std::size_t height, std::size_t width);
Dataset patchify(const Dataset& data, std::size_t size);

enum class GeometricTransform { rot90, rot180, rot270, hflip, vflip };
std::string to_string(GeometricTransform t);
inline constexpr GeometricTransform kAllTransforms[] = {GeometricTransform::rot90, GeometricTransform::rot180,
                                                        GeometricTransform::rot270, GeometricTransform::hflip,
                                                        GeometricTransform::vflip};

/// rot90 is counter-clockwise. Rotations need a square cube.
SpectralCube geometric_augment(const SpectralCube& cube, GeometricTransform t);

/// Pool of transformed copies: cube k gets a seeded random transform.
std::vector<SpectralCube> geometric_pool(const Dataset& base, std::size_t n, Rng& rng);

/// Appends round(fraction * |base|) cubes from the front of `extra`, tagged `tag`.
Dataset assemble_augmented(const Dataset& base, std::span<const SpectralCube> extra, double fraction,
                           Provenance tag);

// .scub container: 32-byte header (magic "SCUB", u32 version, u32 M, u32 N, u32 L,
// 12 reserved bytes) then band-planar float32 samples, all little-endian.
void save_cube(const std::string& path, const SpectralCube& cube);
SpectralCube load_cube(const std::string& path);
std::vector<unsigned char> encode_cube(const SpectralCube& cube);
SpectralCube decode_cube(const std::vector<unsigned char>& bytes, const std::string& context = "cube");

/// <dir>/<split>/<index>.scub plus <dir>/<split>/manifest.json with provenance tags.
void save_dataset(const std::string& dir, const Dataset& data);
Dataset load_dataset(const std::string& dir, Split split);

/// (B, L, M, N) tensor holding the cubes in order.
template <typename T>
Tensor<T> to_batch(std::span<const SpectralCube> cubes);
template <typename T>
std::vector<SpectralCube> from_batch(const Tensor<T>& batch);

}  // namespace ldgan
