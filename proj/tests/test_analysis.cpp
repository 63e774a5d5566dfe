#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ldgan/analysis.hpp"
#include "support.hpp"

using namespace ldgan;

namespace {

SpectralCube add_gaussian(const SpectralCube& x, double sigma, std::uint64_t seed) {
  Rng rng(seed);
  SpectralCube y = x;
  for (auto& v : y.values()) v += sigma * rng.normal();
  return y;
}

// Single-window SSIM straight from the definition, one band at a time.
double ssim_full_oracle(const SpectralCube& x, const SpectralCube& y) {
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const std::size_t n = x.height() * x.width();
  double total = 0;
  for (std::size_t l = 0; l < x.bands(); ++l) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.height(); ++i)
      for (std::size_t j = 0; j < x.width(); ++j) {
        mx += x.at(l, i, j);
        my += y.at(l, i, j);
      }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double vx = 0, vy = 0, cxy = 0;
    for (std::size_t i = 0; i < x.height(); ++i)
      for (std::size_t j = 0; j < x.width(); ++j) {
        const double a = x.at(l, i, j) - mx, b = y.at(l, i, j) - my;
        vx += a * a;
        vy += b * b;
        cxy += a * b;
      }
    vx /= static_cast<double>(n);
    vy /= static_cast<double>(n);
    cxy /= static_cast<double>(n);
    total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(x.bands());
}

Spectrum one_hot(std::size_t l, std::size_t k) {
  Spectrum s(l, 0.0);
  s[k] = 1.0;
  return s;
}

bool contains(const std::vector<Spectrum>& set, const Spectrum& s) {
  return std::find(set.begin(), set.end(), s) != set.end();
}

}  // namespace

TEST_CASE("psnr") {
  SUBCASE("MSE 0.01 at peak 1 is 20 dB") {
    const SpectralCube a(4, 4, 2, 0.5), b(4, 4, 2, 0.6);
    CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-12));
  }
  SUBCASE("identical cubes give infinity, capped at 99 for CSV") {
    const auto x = testsupport::random_cube(4, 4, 2, 1);
    CHECK(std::isinf(psnr(x, x)));
    CHECK(psnr_capped(psnr(x, x)) == kPsnrCsvCap);
    CHECK(psnr_capped(30.0) == 30.0);
  }
  SUBCASE("symmetric") {
    const auto x = testsupport::random_cube(5, 5, 3, 1), y = testsupport::random_cube(5, 5, 3, 2);
    CHECK(psnr(x, y) == psnr(y, x));
  }
  SUBCASE("strictly decreasing over increasing noise") {
    const auto x = testsupport::random_cube(16, 16, 4, 3);
    double prev = std::numeric_limits<double>::infinity();
    for (double s : {0.01, 0.02, 0.05, 0.1, 0.2}) {
      const double p = psnr(x, add_gaussian(x, s, 9));
      CHECK(p < prev);
      prev = p;
    }
  }
  SUBCASE("shape mismatch") { CHECK_THROWS_AS(psnr(SpectralCube(2, 2, 1), SpectralCube(2, 3, 1)), DimensionError); }
}

TEST_CASE("ssim") {
  const auto x = testsupport::random_cube(16, 16, 3, 4);
  const auto y = add_gaussian(x, 0.1, 5);
  SUBCASE("ssim(x, x) is exactly 1") {
    CHECK(ssim(x, x) == 1.0);
    SsimOptions full;
    full.window = SsimOptions::Window::full_image;
    CHECK(ssim(x, x, full) == 1.0);
  }
  SUBCASE("symmetric") {
    CHECK(ssim(x, y) == ssim(y, x));
    const auto a = testsupport::random_cube(16, 16, 4, 3), b = testsupport::random_cube(16, 16, 4, 4);
    CHECK(ssim(a, b) == ssim(b, a));
  }
  SUBCASE("full-image window agrees with the direct formula") {
    const auto a = testsupport::random_cube(8, 8, 2, 6), b = testsupport::random_cube(8, 8, 2, 7);
    SsimOptions full;
    full.window = SsimOptions::Window::full_image;
    CHECK(std::abs(ssim(a, b, full) - ssim_full_oracle(a, b)) <= 1e-6);
    const auto c = add_gaussian(a, 0.05, 1);
    CHECK(std::abs(ssim(a, c, full) - ssim_full_oracle(a, c)) <= 1e-6);
  }
  SUBCASE("image smaller than the window falls back to full-image statistics") {
    const auto a = testsupport::random_cube(4, 4, 2, 6), b = testsupport::random_cube(4, 4, 2, 7);
    CHECK(std::abs(ssim(a, b) - ssim_full_oracle(a, b)) <= 1e-6);
  }
  SUBCASE("range and monotonicity") {
    double prev = 1.0;
    for (double s : {0.02, 0.05, 0.1, 0.3}) {
      const double v = ssim(x, add_gaussian(x, s, 2));
      CHECK(v < prev);
      CHECK(v >= -1.0);
      prev = v;
    }
  }
  SUBCASE("shape mismatch") { CHECK_THROWS_AS(ssim(SpectralCube(8, 8, 1), SpectralCube(8, 8, 2)), DimensionError); }
}

TEST_CASE("vca_endmembers") {
  SUBCASE("one-hot spectra with repeats are recovered exactly") {
    std::vector<Spectrum> pixels;
    for (int rep = 0; rep < 5; ++rep)
      for (std::size_t k : {1u, 3u, 6u}) pixels.push_back(one_hot(8, k));
    const auto e = vca_endmembers(pixels, 3, 4);
    REQUIRE(e.spectra.size() == 3);
    for (std::size_t k : {1u, 3u, 6u}) CHECK(contains(e.spectra, one_hot(8, k)));
  }
  SUBCASE("planted signatures in synthetic mixtures") {
    SynthConfig cfg;
    cfg.height = 16;
    cfg.width = 16;
    cfg.bands = 8;
    cfg.count = 4;
    cfg.materials = 4;
    cfg.seed = 21;
    const auto sigs = synth_signatures(cfg);
    const auto d = synth_dataset(cfg);
    const auto pixels = collect_pixels(d.cubes);
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      const auto e = vca_endmembers(pixels, 4, seed);
      const auto m = match_endmembers(e.spectra, sigs);
      CHECK(m.max_angle < 1e-6);
    }
  }
  SUBCASE("selected spectra are input pixels") {
    const auto x = testsupport::random_cube(6, 6, 5, 8);
    const auto pixels = collect_pixels(std::span<const SpectralCube>(&x, 1));
    const auto e = vca_endmembers(pixels, 3, 1);
    for (std::size_t k = 0; k < 3; ++k) CHECK(e.spectra[k] == pixels[e.pixel_indices[k]]);
  }
  SUBCASE("deterministic for a fixed seed") {
    const auto x = testsupport::random_cube(6, 6, 5, 8);
    const auto pixels = collect_pixels(std::span<const SpectralCube>(&x, 1));
    CHECK(vca_endmembers(pixels, 3, 5).pixel_indices == vca_endmembers(pixels, 3, 5).pixel_indices);
  }
  SUBCASE("data rank below q") {
    std::vector<Spectrum> pixels(10, one_hot(6, 2));
    pixels.push_back(one_hot(6, 4));
    CHECK_THROWS_AS(vca_endmembers(pixels, 3, 1), DegeneracyError);
  }
  SUBCASE("q above L") {
    std::vector<Spectrum> pixels(10, one_hot(3, 0));
    CHECK_THROWS_AS(vca_endmembers(pixels, 4, 1), ConfigError);
  }
}

TEST_CASE("abundances") {
  Rng rng(3);
  std::vector<Spectrum> ends(3, Spectrum(8));
  for (auto& s : ends)
    for (auto& v : s) v = rng.uniform(0.1, 1.0);
  SUBCASE("pixel equal to an endmember") {
    const auto r = abundances(std::vector<Spectrum>{ends[1]}, ends);
    CHECK(r.coefficients[0][0] == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(r.coefficients[0][1] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(r.coefficients[0][2] == doctest::Approx(0.0).epsilon(1e-9));
  }
  SUBCASE("half and half mixture") {
    Spectrum p(8);
    for (std::size_t l = 0; l < 8; ++l) p[l] = 0.5 * ends[0][l] + 0.5 * ends[1][l];
    const auto r = abundances(std::vector<Spectrum>{p}, ends);
    CHECK(r.coefficients[0][0] == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(r.coefficients[0][1] == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(std::abs(r.coefficients[0][2]) <= 1e-9);
    CHECK(r.residuals[0] <= 1e-9);
  }
  SUBCASE("exact mixtures: nonnegative coefficients and zero residual") {
    std::vector<Spectrum> pixels;
    for (int k = 0; k < 50; ++k) {
      double a[3] = {rng.uniform(), rng.uniform(), rng.uniform()};
      Spectrum p(8, 0.0);
      for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t l = 0; l < 8; ++l) p[l] += a[j] * ends[j][l];
      pixels.push_back(p);
    }
    const auto r = abundances(pixels, ends);
    for (std::size_t k = 0; k < pixels.size(); ++k) {
      for (double c : r.coefficients[k]) CHECK(c >= 0.0);
      CHECK(r.residuals[k] <= 1e-9);
    }
  }
  SUBCASE("pixels outside the cone stay nonnegative") {
    Spectrum p(8);
    for (std::size_t l = 0; l < 8; ++l) p[l] = ends[0][l] - 2.0 * ends[2][l];
    const auto r = abundances(std::vector<Spectrum>{p}, ends);
    for (double c : r.coefficients[0]) CHECK(c >= 0.0);
    CHECK(r.residuals[0] > 0.0);
  }
  SUBCASE("rank-deficient endmembers") {
    std::vector<Spectrum> bad{ends[0], ends[0]};
    CHECK_THROWS_AS(abundances(std::vector<Spectrum>{ends[0]}, bad), DegeneracyError);
  }
}

TEST_CASE("spectral_angle") {
  const Spectrum a{1, 0}, b{1, 1}, c{0, 1};
  CHECK(spectral_angle(a, a) == 0.0);
  CHECK(spectral_angle(a, c) == doctest::Approx(std::numbers::pi / 2).epsilon(1e-15));
  CHECK(spectral_angle(a, b) == doctest::Approx(std::numbers::pi / 4).epsilon(1e-15));
  CHECK(spectral_angle(a, Spectrum{-1, 0}) == doctest::Approx(std::numbers::pi).epsilon(1e-15));
  CHECK(spectral_angle(Spectrum{2, 0}, a) == 0.0);
  CHECK_THROWS_AS(spectral_angle(a, Spectrum{0, 0}), DomainError);
}

TEST_CASE("match_endmembers and mean_endmembers") {
  const std::vector<Spectrum> ref{one_hot(4, 0), one_hot(4, 1), one_hot(4, 2)};
  const std::vector<Spectrum> found{one_hot(4, 2), one_hot(4, 0), one_hot(4, 1)};
  const auto m = match_endmembers(found, ref);
  CHECK(m.permutation == std::vector<std::size_t>{1, 2, 0});
  CHECK(m.max_angle == 0.0);
  std::vector<EndmemberSet> sets{{ref, {}}, {found, {}}};
  const auto mean = mean_endmembers(sets);
  CHECK(mean == ref);
}

TEST_CASE("pca_report") {
  SUBCASE("rank-1 samples have one nonzero variance") {
    std::vector<std::vector<double>> s;
    for (int k = 0; k < 20; ++k) s.push_back({1.0 * k, 2.0 * k, -1.0 * k});
    const auto r = pca_report(s, 3);
    CHECK(r.rank_deficient);
    REQUIRE(r.variances.size() == 1);
    CHECK(r.variances[0] > 0.0);
  }
  SUBCASE("diag(4, 1) covariance within 5% at 10k samples") {
    Rng rng(17);
    std::vector<std::vector<double>> s;
    for (int k = 0; k < 10000; ++k) s.push_back({2.0 * rng.normal(), rng.normal()});
    const auto r = pca_report(s, 2);
    REQUIRE(r.variances.size() == 2);
    CHECK(std::abs(r.variances[0] - 4.0) <= 0.05 * 4.0);
    CHECK(std::abs(r.variances[1] - 1.0) <= 0.05 * 1.0);
    CHECK(std::abs(std::abs(r.components[0][0]) - 1.0) < 0.05);
  }
  SUBCASE("components orthonormal, variances sorted, total bounded") {
    Rng rng(2);
    std::vector<std::vector<double>> s;
    for (int k = 0; k < 300; ++k) {
      std::vector<double> v(6);
      for (std::size_t j = 0; j < 6; ++j) v[j] = rng.normal() * static_cast<double>(j + 1);
      s.push_back(v);
    }
    const auto r = pca_report(s, 3);
    REQUIRE(r.components.size() == 3);
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t b = 0; b < 3; ++b)
        CHECK(std::abs(testsupport::inner(r.components[a], r.components[b]) - (a == b ? 1.0 : 0.0)) <= 1e-10);
    CHECK(r.variances[0] >= r.variances[1]);
    CHECK(r.variances[1] >= r.variances[2]);
    const double reported = r.variances[0] + r.variances[1] + r.variances[2];
    CHECK(reported <= r.total_variance * (1 + 1e-12));
    CHECK(r.projections.size() == 300);
    CHECK(r.projections[0].size() == 3);
    // Projection variance matches the reported variance.
    double m = 0, v = 0;
    for (const auto& p : r.projections) m += p[0];
    m /= 300.0;
    for (const auto& p : r.projections) v += (p[0] - m) * (p[0] - m);
    CHECK(v / 299.0 == doctest::Approx(r.variances[0]).epsilon(1e-9));
  }
  SUBCASE("too few samples") { CHECK_THROWS(pca_report(std::vector<std::vector<double>>{{1.0, 2.0}}, 1)); }
}
