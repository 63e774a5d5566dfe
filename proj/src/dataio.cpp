#include "ldgan/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "binio.hpp"

namespace ldgan {

namespace fs = std::filesystem;

std::string dims_str(const CubeDims& d) {
  return std::to_string(d.height) + "x" + std::to_string(d.width) + "x" + std::to_string(d.bands);
}

SpectralCube::SpectralCube(std::size_t height, std::size_t width, std::size_t bands, double fill)
    : dims_{height, width, bands}, values_(height * width * bands, fill) {}

SpectralCube::SpectralCube(CubeDims dims, std::vector<double> values) : dims_(dims), values_(std::move(values)) {
  if (dims_.size() != values_.size()) {
    throw DimensionError("cube " + dims_str(dims_) + " does not match " + std::to_string(values_.size()) + " values");
  }
}

std::vector<double> SpectralCube::spectrum(std::size_t row, std::size_t col) const {
  std::vector<double> s(dims_.bands);
  for (std::size_t l = 0; l < dims_.bands; ++l) s[l] = at(l, row, col);
  return s;
}

bool SpectralCube::within_unit_range() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return v >= 0.0 && v <= 1.0; });
}

std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::original:
      return "original";
    case Provenance::geometric:
      return "geometric";
    case Provenance::gan_generated:
      return "gan-generated";
  }
  return "original";
}

Provenance provenance_from_string(const std::string& s) {
  if (s == "original") return Provenance::original;
  if (s == "geometric") return Provenance::geometric;
  if (s == "gan-generated") return Provenance::gan_generated;
  throw FormatError("unknown provenance tag '" + s + "'");
}

CubeDims Dataset::dims() const { return cubes.empty() ? CubeDims{} : cubes.front().dims(); }

void Dataset::add(SpectralCube cube, Provenance tag) {
  if (!cubes.empty() && cube.dims() != dims()) {
    throw DimensionError("dataset holds " + dims_str(dims()) + " cubes, got " + dims_str(cube.dims()));
  }
  cubes.push_back(std::move(cube));
  provenance.push_back(tag);
}

std::size_t Dataset::count(Provenance tag) const {
  return static_cast<std::size_t>(std::count(provenance.begin(), provenance.end(), tag));
}

// --- synthetic data -------------------------------------------------------------

void validate(const SynthConfig& cfg) {
  if (cfg.height == 0 || cfg.width == 0 || cfg.bands == 0) throw ConfigError("synth: height, width, bands must be >= 1");
  if (cfg.count == 0) throw ConfigError("synth: count must be >= 1");
  if (cfg.materials == 0) throw ConfigError("synth: materials must be >= 1");
  if (cfg.materials > cfg.bands) {
    throw ConfigError("synth: materials (" + std::to_string(cfg.materials) + ") must not exceed bands (" +
                      std::to_string(cfg.bands) + ")");
  }
  if (cfg.materials > cfg.height * cfg.width) throw ConfigError("synth: materials exceed pixel count");
  if (!(cfg.smoothness >= 0.0)) throw ConfigError("synth: smoothness must be >= 0");
}

std::vector<std::vector<double>> synth_signatures(const SynthConfig& cfg) {
  validate(cfg);
  Rng rng = Rng(cfg.seed).split(0);
  const double L = static_cast<double>(cfg.bands);
  const double q = static_cast<double>(cfg.materials);
  std::vector<std::vector<double>> sigs;
  for (std::size_t j = 0; j < cfg.materials; ++j) {
    // Stratified centers keep the bumps apart, so the signatures stay well conditioned.
    const double center = (static_cast<double>(j) + rng.uniform(0.2, 0.8)) / q * (L - 1.0);
    const double width = rng.uniform(0.12, 0.3) * L;
    std::vector<double> s(cfg.bands);
    for (std::size_t l = 0; l < cfg.bands; ++l) {
      const double d = static_cast<double>(l) - center;
      s[l] = 0.05 + 0.9 * std::exp(-d * d / (2.0 * width * width));
    }
    sigs.push_back(std::move(s));
  }
  return sigs;
}

namespace {

std::vector<double> gaussian_kernel1d(double sigma) {
  if (sigma <= 0.0) return {1.0};
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> k;
  double total = 0;
  for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
    k.push_back(std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma)));
    total += k.back();
  }
  for (auto& v : k) v /= total;
  return k;
}

std::ptrdiff_t reflect(std::ptrdiff_t i, std::ptrdiff_t n) {
  if (n == 1) return 0;
  const std::ptrdiff_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

// Separable blur with reflected borders, then standardized to zero mean, unit std.
std::vector<double> smooth_field(std::size_t h, std::size_t w, double sigma, Rng& rng) {
  std::vector<double> f(h * w);
  for (auto& v : f) v = rng.normal();
  const auto k = gaussian_kernel1d(sigma);
  const auto r = static_cast<std::ptrdiff_t>(k.size() / 2);
  std::vector<double> tmp(h * w, 0.0);
  const auto H = static_cast<std::ptrdiff_t>(h), W = static_cast<std::ptrdiff_t>(w);
  for (std::ptrdiff_t i = 0; i < H; ++i)
    for (std::ptrdiff_t j = 0; j < W; ++j) {
      double acc = 0;
      for (std::ptrdiff_t t = -r; t <= r; ++t) acc += k[t + r] * f[i * W + reflect(j + t, W)];
      tmp[i * W + j] = acc;
    }
  for (std::ptrdiff_t i = 0; i < H; ++i)
    for (std::ptrdiff_t j = 0; j < W; ++j) {
      double acc = 0;
      for (std::ptrdiff_t t = -r; t <= r; ++t) acc += k[t + r] * tmp[reflect(i + t, H) * W + j];
      f[i * W + j] = acc;
    }
  double mean = 0, var = 0;
  for (double v : f) mean += v;
  mean /= static_cast<double>(f.size());
  for (double v : f) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(f.size()));
  for (auto& v : f) v = sd > 0 ? (v - mean) / sd : 0.0;
  return f;
}

constexpr double kAbundanceSharpness = 2.5;

}  // namespace

Dataset synth_dataset(const SynthConfig& cfg, Split split) {
  const auto sigs = synth_signatures(cfg);
  const std::size_t M = cfg.height, N = cfg.width, L = cfg.bands, q = cfg.materials, P = M * N;
  const std::uint64_t split_base = split == Split::train ? 1'000'000ULL : 2'000'000ULL;
  Dataset data;
  data.split = split;
  const Rng root(cfg.seed);
  for (std::size_t k = 0; k < cfg.count; ++k) {
    Rng rng = root.split(split_base + k);
    std::vector<std::vector<double>> logits;
    for (std::size_t j = 0; j < q; ++j) logits.push_back(smooth_field(M, N, cfg.smoothness, rng));
    std::vector<double> abund(q * P);
    for (std::size_t p = 0; p < P; ++p) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < q; ++j) mx = std::max(mx, kAbundanceSharpness * logits[j][p]);
      double total = 0;
      for (std::size_t j = 0; j < q; ++j) {
        abund[j * P + p] = std::exp(kAbundanceSharpness * logits[j][p] - mx);
        total += abund[j * P + p];
      }
      for (std::size_t j = 0; j < q; ++j) abund[j * P + p] /= total;
    }
    // One pure pixel per material at distinct random locations.
    std::vector<std::size_t> pixels(P);
    for (std::size_t p = 0; p < P; ++p) pixels[p] = p;
    for (std::size_t j = 0; j < q; ++j) {
      const std::size_t pick = j + rng.index(P - j);
      std::swap(pixels[j], pixels[pick]);
      for (std::size_t m = 0; m < q; ++m) abund[m * P + pixels[j]] = (m == j) ? 1.0 : 0.0;
    }
    SpectralCube cube(M, N, L);
    for (std::size_t l = 0; l < L; ++l)
      for (std::size_t p = 0; p < P; ++p) {
        double v = 0;
        for (std::size_t j = 0; j < q; ++j) v += abund[j * P + p] * sigs[j][l];
        cube.values()[l * P + p] = v;
      }
    data.add(std::move(cube), Provenance::original);
  }
  return data;
}

// --- patches and geometric transforms --------------------------------------------

std::vector<SpectralCube> extract_patches(const SpectralCube& cube, std::size_t size) {
  if (size == 0 || cube.height() % size != 0 || cube.width() % size != 0) {
    throw ConfigError("patch size " + std::to_string(size) + " does not tile a " + dims_str(cube.dims()) + " cube");
  }
  std::vector<SpectralCube> out;
  for (std::size_t pi = 0; pi < cube.height() / size; ++pi)
    for (std::size_t pj = 0; pj < cube.width() / size; ++pj) {
      SpectralCube p(size, size, cube.bands());
      for (std::size_t l = 0; l < cube.bands(); ++l)
        for (std::size_t i = 0; i < size; ++i)
          for (std::size_t j = 0; j < size; ++j) p.at(l, i, j) = cube.at(l, pi * size + i, pj * size + j);
      out.push_back(std::move(p));
    }
  return out;
}

SpectralCube reassemble_patches(std::span<const SpectralCube> patches, std::size_t height, std::size_t width) {
  if (patches.empty()) throw ConfigError("reassemble_patches: no patches");
  const std::size_t size = patches.front().height();
  if (size == 0 || height % size || width % size || patches.size() != (height / size) * (width / size)) {
    throw ConfigError("reassemble_patches: patch count does not tile the target");
  }
  SpectralCube cube(height, width, patches.front().bands());
  std::size_t k = 0;
  for (std::size_t pi = 0; pi < height / size; ++pi)
    for (std::size_t pj = 0; pj < width / size; ++pj, ++k) {
      const auto& p = patches[k];
      for (std::size_t l = 0; l < cube.bands(); ++l)
        for (std::size_t i = 0; i < size; ++i)
          for (std::size_t j = 0; j < size; ++j) cube.at(l, pi * size + i, pj * size + j) = p.at(l, i, j);
    }
  return cube;
}

Dataset patchify(const Dataset& data, std::size_t size) {
  Dataset out;
  out.split = data.split;
  for (std::size_t k = 0; k < data.size(); ++k)
    for (auto& p : extract_patches(data.cubes[k], size)) out.add(std::move(p), data.provenance[k]);
  return out;
}

std::string to_string(GeometricTransform t) {
  switch (t) {
    case GeometricTransform::rot90:
      return "rot90";
    case GeometricTransform::rot180:
      return "rot180";
    case GeometricTransform::rot270:
      return "rot270";
    case GeometricTransform::hflip:
      return "hflip";
    case GeometricTransform::vflip:
      return "vflip";
  }
  return "?";
}

SpectralCube geometric_augment(const SpectralCube& cube, GeometricTransform t) {
  const std::size_t M = cube.height(), N = cube.width();
  const bool rotation = t == GeometricTransform::rot90 || t == GeometricTransform::rot180 ||
                        t == GeometricTransform::rot270;
  if (rotation && M != N) throw ConfigError("rotation requires a square cube, got " + dims_str(cube.dims()));
  SpectralCube out(M, N, cube.bands());
  for (std::size_t l = 0; l < cube.bands(); ++l)
    for (std::size_t i = 0; i < M; ++i)
      for (std::size_t j = 0; j < N; ++j) {
        double v = 0;
        switch (t) {
          case GeometricTransform::rot90:
            v = cube.at(l, j, N - 1 - i);
            break;
          case GeometricTransform::rot180:
            v = cube.at(l, M - 1 - i, N - 1 - j);
            break;
          case GeometricTransform::rot270:
            v = cube.at(l, M - 1 - j, i);
            break;
          case GeometricTransform::hflip:
            v = cube.at(l, i, N - 1 - j);
            break;
          case GeometricTransform::vflip:
            v = cube.at(l, M - 1 - i, j);
            break;
        }
        out.at(l, i, j) = v;
      }
  return out;
}

std::vector<SpectralCube> geometric_pool(const Dataset& base, std::size_t n, Rng& rng) {
  if (base.empty() && n > 0) throw ConfigError("geometric pool needs a non-empty base dataset");
  const bool square = base.dims().height == base.dims().width;
  std::vector<SpectralCube> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto t = square ? kAllTransforms[rng.index(5)] : (rng.index(2) ? GeometricTransform::hflip
                                                                          : GeometricTransform::vflip);
    out.push_back(geometric_augment(base.cubes[k % base.size()], t));
  }
  return out;
}

Dataset assemble_augmented(const Dataset& base, std::span<const SpectralCube> extra, double fraction,
                           Provenance tag) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw ConfigError("augmentation fraction must lie in [0, 1], got " + std::to_string(fraction));
  }
  const auto want = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(base.size())));
  if (extra.size() < want) {
    throw ConfigError("augmentation pool holds " + std::to_string(extra.size()) + " cubes, need " +
                      std::to_string(want));
  }
  Dataset out = base;
  for (std::size_t k = 0; k < want; ++k) out.add(extra[k], tag);
  return out;
}

// --- .scub container ---------------------------------------------------------------

namespace {
constexpr char kCubeMagic[4] = {'S', 'C', 'U', 'B'};
constexpr std::uint32_t kCubeVersion = 1;
constexpr std::size_t kCubeHeader = 32;
}  // namespace

std::vector<unsigned char> encode_cube(const SpectralCube& cube) {
  std::vector<unsigned char> out;
  out.reserve(kCubeHeader + 4 * cube.values().size());
  out.insert(out.end(), kCubeMagic, kCubeMagic + 4);
  binio::put_u32(out, kCubeVersion);
  binio::put_u32(out, static_cast<std::uint32_t>(cube.height()));
  binio::put_u32(out, static_cast<std::uint32_t>(cube.width()));
  binio::put_u32(out, static_cast<std::uint32_t>(cube.bands()));
  out.resize(kCubeHeader, 0);
  for (double v : cube.values()) binio::put_f32(out, static_cast<float>(v));
  return out;
}

SpectralCube decode_cube(const std::vector<unsigned char>& bytes, const std::string& context) {
  binio::Reader r(bytes, context);
  if (r.bytes(4, "magic") != std::string(kCubeMagic, 4)) throw FormatError(context + ": bad magic (expected SCUB)");
  const auto version = r.u32("version");
  if (version != kCubeVersion) throw FormatError(context + ": unsupported version " + std::to_string(version));
  const std::uint64_t M = r.u32("height"), N = r.u32("width"), L = r.u32("bands");
  r.skip(12, "reserved header bytes");
  if (M == 0 || N == 0 || L == 0) throw FormatError(context + ": zero extent in header (height/width/bands)");
  const std::uint64_t count = M * N * L;
  if (count > (std::uint64_t{1} << 34)) throw FormatError(context + ": header shape overflows (height*width*bands)");
  if (r.remaining() != count * 4) {
    throw FormatError(context + ": payload length " + std::to_string(r.remaining()) +
                      " bytes does not match header size " + std::to_string(count * 4));
  }
  std::vector<double> values(count);
  for (auto& v : values) v = r.f32("samples");
  return SpectralCube(CubeDims{M, N, L}, std::move(values));
}

void save_cube(const std::string& path, const SpectralCube& cube) { binio::write_file(path, encode_cube(cube)); }

SpectralCube load_cube(const std::string& path) { return decode_cube(binio::read_file(path), path); }

namespace {
std::string cube_name(std::size_t k) {
  std::string s = std::to_string(k);
  return std::string(s.size() < 5 ? 5 - s.size() : 0, '0') + s + ".scub";
}
}  // namespace

void save_dataset(const std::string& dir, const Dataset& data) {
  const fs::path root = fs::path(dir) / to_string(data.split);
  fs::create_directories(root);
  nlohmann::json manifest;
  manifest["split"] = to_string(data.split);
  manifest["count"] = data.size();
  const auto d = data.dims();
  manifest["dims"] = {d.height, d.width, d.bands};
  manifest["files"] = nlohmann::json::array();
  manifest["provenance"] = nlohmann::json::array();
  for (std::size_t k = 0; k < data.size(); ++k) {
    save_cube((root / cube_name(k)).string(), data.cubes[k]);
    manifest["files"].push_back(cube_name(k));
    manifest["provenance"].push_back(to_string(data.provenance[k]));
  }
  std::ofstream((root / "manifest.json").string()) << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir, Split split) {
  const fs::path root = fs::path(dir) / to_string(split);
  const auto mpath = root / "manifest.json";
  std::ifstream in(mpath);
  if (!in) throw FormatError(mpath.string() + ": missing dataset manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(mpath.string() + ": " + e.what());
  }
  Dataset data;
  data.split = split;
  const auto& files = manifest.at("files");
  const auto& prov = manifest.at("provenance");
  if (files.size() != prov.size()) throw FormatError(mpath.string() + ": files/provenance length mismatch");
  for (std::size_t k = 0; k < files.size(); ++k) {
    data.add(load_cube((root / files[k].get<std::string>()).string()),
             provenance_from_string(prov[k].get<std::string>()));
  }
  return data;
}

template <typename T>
Tensor<T> to_batch(std::span<const SpectralCube> cubes) {
  if (cubes.empty()) throw DimensionError("to_batch: no cubes");
  const auto d = cubes.front().dims();
  Tensor<T> t({cubes.size(), d.bands, d.height, d.width});
  std::size_t k = 0;
  for (const auto& c : cubes) {
    if (c.dims() != d) throw DimensionError("to_batch: mixed cube dims " + dims_str(d) + " vs " + dims_str(c.dims()));
    for (double v : c.values()) t[k++] = static_cast<T>(v);
  }
  return t;
}

template <typename T>
std::vector<SpectralCube> from_batch(const Tensor<T>& batch) {
  if (batch.rank() != 4) throw DimensionError("from_batch: expected (B, L, M, N), got " + shape_str(batch.shape()));
  const CubeDims d{batch.dim(2), batch.dim(3), batch.dim(1)};
  std::vector<SpectralCube> out;
  for (std::size_t n = 0; n < batch.dim(0); ++n) {
    std::vector<double> v(batch.ptr() + n * d.size(), batch.ptr() + (n + 1) * d.size());
    out.emplace_back(d, std::move(v));
  }
  return out;
}

template Tensor<float> to_batch(std::span<const SpectralCube>);
template Tensor<double> to_batch(std::span<const SpectralCube>);
template std::vector<SpectralCube> from_batch(const Tensor<float>&);
template std::vector<SpectralCube> from_batch(const Tensor<double>&);

}  // namespace ldgan
