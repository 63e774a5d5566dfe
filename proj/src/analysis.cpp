#include "ldgan/analysis.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <tuple>

#include "ldgan/errors.hpp"

namespace ldgan {

namespace {

void require_same_dims(const SpectralCube& x, const SpectralCube& y, const char* what) {
  if (x.dims() != y.dims()) {
    throw DimensionError(std::string(what) + ": shapes differ, " + dims_str(x.dims()) + " vs " + dims_str(y.dims()));
  }
}

Eigen::MatrixXd rows_to_matrix(std::span<const Spectrum> rows, const char* what) {
  if (rows.empty()) throw DegeneracyError(std::string(what) + ": no input vectors");
  const std::size_t L = rows.front().size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(L));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != L) throw DimensionError(std::string(what) + ": vectors have different lengths");
    for (std::size_t l = 0; l < L; ++l) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l)) = rows[i][l];
  }
  return m;
}

std::vector<double> gaussian_window(std::size_t size, double sigma) {
  std::vector<double> w(size * size);
  const double c = (static_cast<double>(size) - 1.0) / 2.0;
  double total = 0;
  for (std::size_t i = 0; i < size; ++i)
    for (std::size_t j = 0; j < size; ++j) {
      const double di = static_cast<double>(i) - c, dj = static_cast<double>(j) - c;
      w[i * size + j] = std::exp(-(di * di + dj * dj) / (2 * sigma * sigma));
      total += w[i * size + j];
    }
  for (auto& v : w) v /= total;
  return w;
}

// Exactly 1 for x == y and symmetric in (x, y) bit for bit.
double ssim_term(double mx, double my, double sxx, double syy, double sxy, double c1, double c2) {
  // Canonical argument order keeps ssim(x, y) == ssim(y, x) bit-exact under FMA contraction.
  if (std::tie(mx, sxx) > std::tie(my, syy)) {
    std::swap(mx, my);
    std::swap(sxx, syy);
  }
  const double num = (2.0 * mx * my + c1) * (2.0 * sxy + c2);
  const double den = (mx * mx + my * my + c1) * (sxx + syy + c2);
  return num / den;
}

}  // namespace

double psnr(const SpectralCube& x, const SpectralCube& y, double peak) {
  require_same_dims(x, y, "psnr");
  if (!(peak > 0)) throw DomainError("psnr: peak must be positive");
  const auto& a = x.values();
  const auto& b = y.values();
  double se = 0;
  for (std::size_t i = 0; i < a.size(); ++i) se += (a[i] - b[i]) * (a[i] - b[i]);
  if (se == 0) return std::numeric_limits<double>::infinity();
  const double mse = se / static_cast<double>(a.size());
  return 10.0 * std::log10(peak * peak / mse);
}

double psnr_capped(double db) { return std::min(db, kPsnrCsvCap); }

double ssim(const SpectralCube& x, const SpectralCube& y, const SsimOptions& opts) {
  require_same_dims(x, y, "ssim");
  const std::size_t M = x.height(), N = x.width(), L = x.bands();
  const double c1 = (0.01 * opts.peak) * (0.01 * opts.peak);
  const double c2 = (0.03 * opts.peak) * (0.03 * opts.peak);
  const bool full = opts.window == SsimOptions::Window::full_image || M < opts.size || N < opts.size;

  double band_sum = 0;
  for (std::size_t l = 0; l < L; ++l) {
    const double* px = x.values().data() + l * M * N;
    const double* py = y.values().data() + l * M * N;
    if (full) {
      const double n = static_cast<double>(M * N);
      double mx = 0, my = 0;
      for (std::size_t p = 0; p < M * N; ++p) mx += px[p], my += py[p];
      mx /= n, my /= n;
      double sxx = 0, syy = 0, sxy = 0;
      for (std::size_t p = 0; p < M * N; ++p) {
        sxx += (px[p] - mx) * (px[p] - mx);
        syy += (py[p] - my) * (py[p] - my);
        sxy += (px[p] - mx) * (py[p] - my);
      }
      band_sum += ssim_term(mx, my, sxx / n, syy / n, sxy / n, c1, c2);
      continue;
    }
    const std::size_t k = opts.size;
    const auto w = gaussian_window(k, opts.sigma);
    double map_sum = 0;
    std::size_t count = 0;
    for (std::size_t i = 0; i + k <= M; ++i)
      for (std::size_t j = 0; j + k <= N; ++j) {
        double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
        for (std::size_t a = 0; a < k; ++a)
          for (std::size_t b = 0; b < k; ++b) {
            const double wt = w[a * k + b];
            const double vx = px[(i + a) * N + j + b], vy = py[(i + a) * N + j + b];
            mx += wt * vx;
            my += wt * vy;
            xx += wt * vx * vx;
            yy += wt * vy * vy;
            xy += wt * (vx * vy);
          }
        map_sum += ssim_term(mx, my, xx - mx * mx, yy - my * my, xy - mx * my, c1, c2);
        ++count;
      }
    band_sum += map_sum / static_cast<double>(count);
  }
  return band_sum / static_cast<double>(L);
}

std::vector<Spectrum> collect_pixels(std::span<const SpectralCube> cubes) {
  std::vector<Spectrum> out;
  for (const auto& c : cubes)
    for (std::size_t i = 0; i < c.height(); ++i)
      for (std::size_t j = 0; j < c.width(); ++j) out.push_back(c.spectrum(i, j));
  return out;
}

EndmemberSet vca_endmembers(std::span<const Spectrum> pixels, std::size_t q, std::uint64_t seed) {
  if (q == 0) throw ConfigError("vca: q must be >= 1");
  const Eigen::MatrixXd X = rows_to_matrix(pixels, "vca");
  if (q > static_cast<std::size_t>(X.cols())) {
    throw ConfigError("vca: q=" + std::to_string(q) + " exceeds the band count " + std::to_string(X.cols()));
  }
  if (pixels.size() < q) throw DegeneracyError("vca: fewer pixels than endmembers");

  // Projective subspace from the top-q right singular vectors of the raw data.
  const Eigen::BDCSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const double tol = s(0) * 1e-10;
  if (s(0) == 0 || s(static_cast<Eigen::Index>(q) - 1) <= tol) {
    throw DegeneracyError("vca: data rank is below q=" + std::to_string(q));
  }
  const Eigen::MatrixXd Y = X * svd.matrixV().leftCols(static_cast<Eigen::Index>(q));

  Rng rng(seed);
  const auto qi = static_cast<Eigen::Index>(q);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(qi, qi);
  EndmemberSet out;
  for (Eigen::Index k = 0; k < qi; ++k) {
    Eigen::VectorXd w(qi);
    for (Eigen::Index d = 0; d < qi; ++d) w(d) = rng.normal();
    Eigen::VectorXd f = w;
    if (k > 0) {
      const Eigen::MatrixXd Ak = A.leftCols(k);
      f = w - Ak * Ak.completeOrthogonalDecomposition().solve(w);
    }
    f.normalize();
    const Eigen::VectorXd v = Y * f;
    Eigen::Index best = 0;
    double best_val = -1;
    for (Eigen::Index p = 0; p < v.size(); ++p) {
      if (std::abs(v(p)) > best_val) best_val = std::abs(v(p)), best = p;
    }
    A.col(k) = Y.row(best).transpose();
    out.pixel_indices.push_back(static_cast<std::size_t>(best));
    out.spectra.push_back(pixels[static_cast<std::size_t>(best)]);
  }
  return out;
}

AbundanceResult abundances(std::span<const Spectrum> pixels, std::span<const Spectrum> endmembers, int iterations,
                           double tolerance) {
  const Eigen::MatrixXd E = rows_to_matrix(endmembers, "abundances").transpose();  // L x q
  const Eigen::Index q = E.cols();
  const Eigen::MatrixXd G = E.transpose() * E;
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(E);
  if (qr.rank() < q) throw DegeneracyError("abundances: endmember matrix is rank deficient");
  const double step = 1.0 / Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(G).eigenvalues().maxCoeff();

  AbundanceResult out;
  out.coefficients.reserve(pixels.size());
  out.residuals.reserve(pixels.size());
  for (const auto& px : pixels) {
    if (static_cast<Eigen::Index>(px.size()) != E.rows()) throw DimensionError("abundances: pixel length mismatch");
    const Eigen::Map<const Eigen::VectorXd> y(px.data(), E.rows());
    const Eigen::VectorXd Ety = E.transpose() * y;
    Eigen::VectorXd a = qr.solve(y).cwiseMax(0.0);
    for (int it = 0; it < iterations; ++it) {
      const Eigen::VectorXd next = (a - step * (G * a - Ety)).cwiseMax(0.0);
      const double change = (next - a).norm();
      a = next;
      if (change <= tolerance) break;
    }
    out.residuals.push_back((E * a - y).norm());
    out.coefficients.emplace_back(a.data(), a.data() + a.size());
  }
  return out;
}

double spectral_angle(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("spectral_angle: lengths differ");
  double na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) na += a[i] * a[i], nb += b[i] * b[i];
  na = std::sqrt(na), nb = std::sqrt(nb);
  if (na == 0 || nb == 0) throw DomainError("spectral_angle: zero vector");
  // 2 atan2(|u - v|, |u + v|) keeps precision for nearly parallel vectors.
  double dn = 0, sn = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double u = a[i] / na, v = b[i] / nb;
    dn += (u - v) * (u - v);
    sn += (u + v) * (u + v);
  }
  return 2.0 * std::atan2(std::sqrt(dn), std::sqrt(sn));
}

EndmemberMatch match_endmembers(std::span<const Spectrum> found, std::span<const Spectrum> reference) {
  if (found.size() != reference.size()) throw DimensionError("match_endmembers: set sizes differ");
  const std::size_t q = found.size();
  if (q > 9) throw ConfigError("match_endmembers: exhaustive matching supports at most 9 endmembers");
  std::vector<std::vector<double>> angle(q, std::vector<double>(q));
  for (std::size_t i = 0; i < q; ++i)
    for (std::size_t j = 0; j < q; ++j) angle[i][j] = spectral_angle(found[i], reference[j]);
  std::vector<std::size_t> perm(q);
  std::iota(perm.begin(), perm.end(), 0);
  EndmemberMatch best;
  best.max_angle = std::numeric_limits<double>::infinity();
  double best_sum = std::numeric_limits<double>::infinity();
  do {
    double mx = 0, sum = 0;
    for (std::size_t j = 0; j < q; ++j) mx = std::max(mx, angle[perm[j]][j]), sum += angle[perm[j]][j];
    if (mx < best.max_angle || (mx == best.max_angle && sum < best_sum)) {
      best.max_angle = mx;
      best_sum = sum;
      best.permutation = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  for (std::size_t j = 0; j < q; ++j) best.angles.push_back(angle[best.permutation[j]][j]);
  if (q == 0) best.max_angle = 0;
  return best;
}

std::vector<Spectrum> mean_endmembers(std::span<const EndmemberSet> sets) {
  if (sets.empty()) return {};
  const auto& ref = sets.front().spectra;
  std::vector<Spectrum> mean(ref.size(), Spectrum(ref.empty() ? 0 : ref.front().size(), 0.0));
  for (const auto& s : sets) {
    const auto m = match_endmembers(s.spectra, ref);
    for (std::size_t j = 0; j < ref.size(); ++j)
      for (std::size_t l = 0; l < mean[j].size(); ++l) mean[j][l] += s.spectra[m.permutation[j]][l];
  }
  for (auto& e : mean)
    for (auto& v : e) v /= static_cast<double>(sets.size());
  return mean;
}

PcaReport pca_report(std::span<const std::vector<double>> samples, std::size_t k) {
  if (samples.size() < 2) throw ConfigError("pca_report: needs at least 2 samples");
  Eigen::MatrixXd X = rows_to_matrix(samples, "pca_report");
  if (k == 0 || k > static_cast<std::size_t>(X.cols())) {
    throw ConfigError("pca_report: k=" + std::to_string(k) + " must lie in [1, " + std::to_string(X.cols()) + "]");
  }
  const Eigen::RowVectorXd mean = X.colwise().mean();
  X.rowwise() -= mean;
  const double denom = static_cast<double>(X.rows() - 1);

  const Eigen::BDCSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const double tol = std::max(X.rows(), X.cols()) * std::numeric_limits<double>::epsilon() * (s.size() ? s(0) : 0.0);
  std::size_t rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > tol) ++rank;

  PcaReport r;
  r.total_variance = X.squaredNorm() / denom;
  const std::size_t kept = std::min(k, rank);
  r.rank_deficient = kept < k;
  for (std::size_t c = 0; c < kept; ++c) {
    const Eigen::VectorXd v = svd.matrixV().col(static_cast<Eigen::Index>(c));
    r.components.emplace_back(v.data(), v.data() + v.size());
    r.variances.push_back(s(static_cast<Eigen::Index>(c)) * s(static_cast<Eigen::Index>(c)) / denom);
  }
  r.projections.assign(samples.size(), std::vector<double>(kept));
  for (std::size_t c = 0; c < kept; ++c) {
    const Eigen::VectorXd proj = X * svd.matrixV().col(static_cast<Eigen::Index>(c));
    for (std::size_t i = 0; i < samples.size(); ++i) r.projections[i][c] = proj(static_cast<Eigen::Index>(i));
  }
  return r;
}

}  // namespace ldgan
