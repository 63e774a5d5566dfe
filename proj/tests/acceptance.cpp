// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only when all pass.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "ldgan/analysis.hpp"
#include "ldgan/kernels.hpp"
#include "ldgan/optim.hpp"
#include "ldgan/pipeline.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace ldgan;
using namespace testsupport;
namespace fs = std::filesystem;

namespace {

// Desk scale for the GAN and augmentation trend checks.
constexpr std::size_t kSide = 16;
constexpr std::size_t kTrainCount = 128;
constexpr std::size_t kGanWidth = 16;
constexpr double kGanLr = 2e-4;
constexpr std::size_t kGanBatch = 16;
constexpr std::size_t kTaskEpochs = 100;
constexpr std::size_t kTaskWidth = 16;
constexpr std::size_t kTaskStages = 5;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double budget_s;
  std::function<Outcome()> run;
};

template <typename... A>
std::string fmt(const char* f, A... a) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

fs::path work_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / "ldgan_acceptance" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

double max_abs(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// --- 1 ------------------------------------------------------------------------

Outcome operator_oracle() {
  const CubeDims d{4, 4, 8};
  const auto ca = random_coded_aperture(4, 4, 0.5, 3);
  const auto resp = default_spectral_response(8);
  double worst = 0;
  const auto compare = [&](const DenseMatrix& mine, const DenseMatrix& oracle) {
    if (mine.rows != oracle.rows || mine.cols != oracle.cols) return false;
    worst = std::max(worst, max_abs(mine.data, oracle.data));
    return true;
  };
  bool shapes = compare(as_dense(CassiOperator(d, ca)), cassi_matrix(d, ca)) &&
                compare(as_dense(DecimationOperator(d, 2, 4)), decimation_matrix(d, 2, 4)) &&
                compare(as_dense(RgbOperator(d, resp)), rgb_matrix(d, resp));
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto x = random_cube(4, 4, 8, 100 + s);
    worst = std::max(worst, max_abs(cassi_forward(x, ca).values, matvec(cassi_matrix(d, ca), x.values())));
    worst = std::max(worst, max_abs(decimate(x, 4, 4).values, matvec(decimation_matrix(d, 2, 4), x.values())));
    worst = std::max(worst, max_abs(rgb_project(x, resp).values, matvec(rgb_matrix(d, resp), x.values())));
  }
  return {shapes && worst <= 1e-12, fmt("max abs diff %.3g (tol 1e-12)", worst)};
}

// --- 2 ------------------------------------------------------------------------

Outcome adjoint_identity() {
  double worst = 0;  // |<Ax, y> - <x, A^T y>| / (|x| |y|)
  const auto check = [&](std::size_t n, std::size_t m, const std::function<void(const std::vector<double>&, std::vector<double>&)>& fwd,
                         const std::function<void(const std::vector<double>&, std::vector<double>&)>& adj,
                         std::uint64_t seed) {
    for (std::uint64_t t = 0; t < 20; ++t) {
      const auto x = random_vec(n, seed * 1000 + t), y = random_vec(m, seed * 1000 + 500 + t);
      std::vector<double> ax(m), aty(n);
      fwd(x, ax);
      adj(y, aty);
      worst = std::max(worst, std::abs(inner(ax, y) - inner(x, aty)) / (norm(x) * norm(y)));
    }
  };
  const auto op_pair = [&](const ForwardOperator& op, std::uint64_t seed) {
    check(op.input_dims().size(), op.output_shape().size(),
          [&](const std::vector<double>& x, std::vector<double>& y) { op.apply(x, y); },
          [&](const std::vector<double>& y, std::vector<double>& x) { op.adjoint(y, x); }, seed);
  };
  op_pair(CassiOperator(CubeDims{8, 6, 5}, random_coded_aperture(8, 6, 0.5, 1)), 1);
  op_pair(CassiOperator(CubeDims{16, 16, 8}, random_coded_aperture(16, 16, 0.5, 2)), 2);
  op_pair(DecimationOperator(CubeDims{8, 8, 8}, 2, 4), 3);
  op_pair(RgbOperator(CubeDims{8, 6, 7}, default_spectral_response(7)), 4);
  const ConvGeometry geoms[] = {{2, 3, 7, 7, 4, 3, 3, 1, 1}, {2, 4, 8, 8, 3, 4, 4, 2, 1}, {1, 2, 5, 6, 5, 3, 3, 2, 0}};
  std::uint64_t seed = 10;
  for (const auto& g : geoms) {
    const auto w = random_vec(g.weight_size(), seed + 99);
    using Conv = void (*)(const ConvGeometry&, std::span<const double>, std::span<const double>, std::span<double>);
    for (auto [conv, conv_t] : {std::pair<Conv, Conv>{kernels::serial::conv2d<double>, kernels::serial::conv2d_grad_input<double>},
                                std::pair<Conv, Conv>{kernels::parallel::conv2d<double>,
                                                      kernels::parallel::conv2d_grad_input<double>}})
      check(g.input_size(), g.output_size(),
            [&](const std::vector<double>& x, std::vector<double>& y) { conv(g, x, w, y); },
            [&](const std::vector<double>& y, std::vector<double>& x) { conv_t(g, y, w, x); }, seed++);
  }
  return {worst <= 1e-10, fmt("max |<Ax,y>-<x,A'y>|/(|x||y|) %.3g over 20 trials x 10 pairs (tol 1e-10)", worst)};
}

// --- 3 ------------------------------------------------------------------------

Outcome gradient_oracle() {
  double worst = 0;
  std::string where;
  std::size_t checked = 0, skipped = 0;
  const auto record = [&](const GradCheckResult& r, const std::string& what, std::uint64_t seed) {
    checked += r.coords_checked;
    skipped += r.coords_skipped;
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      where = what + " seed " + std::to_string(seed) + " " + r.worst;
    }
  };
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto opts = network_check_options(seed);
    {
      auto p = init_ae<double>(AEArch{4, 2, 1}, seed);
      const auto x = random_tensor<double>({2, 4, 4, 4}, seed + 10, 0.0, 1.0);
      auto params = p.pointers();
      for (double mu : {0.0, 0.5})
        record(finite_diff_check([&](Graph<double>& g) { return ae_objective(g, p, g.constant(x), mu).total; }, params,
                                 opts),
               "autoencoder mu_ae=" + fmt("%g", mu), seed);
    }
    for (auto target : {GanTarget::latent, GanTarget::full}) {
      auto p = init_gan<double>(GanArch{2, 4, 4, 2, target}, seed);
      Rng rng(seed + 50);
      const auto z = noise_batch<double>(2, rng);
      auto gp = p.generator.pointers();
      for (double mu : {0.0, 0.5})
        record(finite_diff_check([&](Graph<double>& g) { return generator_objective(g, p, g.constant(z), mu); }, gp,
                                 opts),
               "generator(" + to_string(target) + ") mu_gan=" + fmt("%g", mu), seed);
      const auto real = random_tensor<double>({2, 2, 4, 4}, seed + 1, 0.0, 1.0);
      const auto fake = random_tensor<double>({2, 2, 4, 4}, seed + 2, 0.0, 1.0);
      auto dp = p.discriminator.pointers();
      record(finite_diff_check(
                 [&](Graph<double>& g) { return discriminator_objective(g, p, g.constant(real), g.constant(fake)); },
                 dp, opts),
             "discriminator(" + to_string(target) + ")", seed);
    }
    {
      auto net = init_recovery<double>(make_task(RecoveryTask::rgb, CubeDims{16, 16, 4}), RecoveryArch{2, 5, 0.5}, seed);
      std::vector<SpectralCube> cubes{random_cube(16, 16, 4, seed), random_cube(16, 16, 4, seed + 9)};
      const auto in = simulate_input(net, cubes);
      const auto truth = to_batch<double>(std::span<const SpectralCube>(cubes));
      auto params = net.params.pointers();
      auto o = network_check_options(seed, 8);
      o.abs_tol = 1e-9;  // loss ~ 1e2: round-off floor of the smallest steps
      record(finite_diff_check([&](Graph<double>& g) { return recovery_objective(g, net, in, truth); }, params, o),
             "unet", seed);
    }
    {
      auto net = init_recovery<double>(make_task(RecoveryTask::csi, CubeDims{4, 4, 4}), RecoveryArch{3, 2, 0.5}, seed);
      std::vector<SpectralCube> cubes{random_cube(4, 4, 4, seed), random_cube(4, 4, 4, seed + 9)};
      const auto in = simulate_input(net, cubes);
      const auto truth = to_batch<double>(std::span<const SpectralCube>(cubes));
      auto params = net.params.pointers();
      record(finite_diff_check([&](Graph<double>& g) { return recovery_objective(g, net, in, truth); }, params, opts),
             "unrolled-csi", seed);
    }
  }
  return {worst <= 1e-4 && checked > 0,
          fmt("max rel err %.3g at %s; %zu coords checked, %zu kink-skipped (tol 1e-4)", worst, where.c_str(), checked,
              skipped)};
}

// --- 4 ------------------------------------------------------------------------

Outcome variance_exactness() {
  const std::size_t M = 4, N = 5, c = 3;
  const auto one = random_tensor<double>({1, c, M, N}, 7);
  Tensor<double> same({4, c, M, N}), two({2, c, M, N});
  for (std::size_t b = 0; b < 4; ++b)
    std::copy(one.storage().begin(), one.storage().end(), same.storage().begin() + static_cast<long>(b * one.size()));
  for (std::size_t k = 0; k < one.size(); ++k) two.storage()[one.size() + k] = 2.0;
  const double target = std::sqrt(static_cast<double>(M * N * c));
  Graph<double> g;
  const double graph_same = g.value(g.variance_norm(g.constant(same)))[0];
  const double graph_two = g.value(g.variance_norm(g.constant(two)))[0];
  const double vals[] = {variance_reg(same), generated_variance_reg(same), graph_same};
  const double twos[] = {variance_reg(two), generated_variance_reg(two), graph_two};
  double zero_err = 0, two_err = 0;
  for (double v : vals) zero_err = std::max(zero_err, std::abs(v));
  for (double v : twos) two_err = std::max(two_err, std::abs(v - target));
  return {zero_err == 0.0 && two_err <= 1e-12,
          fmt("identical batch -> %.3g (want 0); {0,2} batch off sqrt(MNc)=%.6f by %.3g (tol 1e-12)", zero_err, target,
              two_err)};
}

// --- 5 ------------------------------------------------------------------------

Outcome ae_overfit() {
  SynthConfig sc;
  sc.height = 16;
  sc.width = 16;
  sc.bands = 8;
  sc.count = 1;
  sc.seed = 1;
  const auto one = synth_dataset(sc, Split::train);
  AETrainConfig cfg;
  cfg.lr = 1e-3;
  cfg.epochs = 2000;  // one cube, batch 2 of itself: one step per epoch
  cfg.batch = 2;
  cfg.seed = 1;
  auto st = train_ae(one, Dataset{}, AEArch{8, 3, 0}, cfg);
  const double p = ae_reconstruction_quality(st.params, one).first;
  return {p >= 40.0, fmt("reconstruction PSNR %.2f dB after 2000 steps (need >= 40)", p)};
}

// Desk-scale run shared by the GAN trend checks.
RunConfig gan_config(const fs::path& out) {
  RunConfig c;
  c.out = out.string();
  c.synth.height = kSide;
  c.synth.width = kSide;
  c.synth.train_count = kTrainCount;
  c.synth.test_count = 16;
  c.ae.eval_limit = 4;
  c.gan.base_width = kGanWidth;
  c.gan.lr = kGanLr;
  c.gan.batch = kGanBatch;
  c.gan.epochs = 50;
  c.experiment.seeds = {0, 1, 2};
  return c;
}

// --- 6 ------------------------------------------------------------------------

Outcome regularization_effects() {
  // (a) mu_ae: held-out latent variance.
  int wins_a = 0;
  std::string da;
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    SynthConfig sc;
    sc.height = 8;
    sc.width = 8;
    sc.bands = 8;
    sc.count = 16;
    sc.materials = 4;
    sc.seed = 1;
    const auto train = synth_dataset(sc, Split::train);
    sc.count = 8;
    const auto test = synth_dataset(sc, Split::test);
    const auto batch = to_batch<float>(std::span<const SpectralCube>(test.cubes));
    double reg[2];
    for (int k = 0; k < 2; ++k) {
      AETrainConfig cfg;
      cfg.lr = 2e-3;
      cfg.epochs = 300;
      cfg.batch = 4;
      cfg.seed = seed;
      cfg.mu_ae = k ? 1e-3 : 0.0;
      cfg.eval_limit = 2;
      auto st = train_ae(train, test, AEArch{8, 3, 0}, cfg);
      reg[k] = variance_reg(encode(st.params, batch));
    }
    wins_a += reg[1] < reg[0];
    da += fmt(" %.2f/%.2f", reg[1], reg[0]);
  }
  // (b) mu_gan: top-3 PCA variance of 512 generated latents, through the pca suite.
  auto cfg = gan_config(work_dir("pca"));
  cfg.experiment.pca_mu_gan = 1e-3;
  cfg.gan.samples = 512;
  cfg.analysis.pca_k = 3;
  std::map<std::uint64_t, std::pair<double, double>> top;  // seed -> (mu=0, mu=1e-3)
  for (const auto& r : run_experiment(Suite::pca, cfg))
    if (r.metric == "topk_variance") (r.param_value == 0.0 ? top[r.seed].first : top[r.seed].second) = r.value;
  int wins_b = 0;
  std::string db;
  for (const auto& [seed, v] : top) {
    wins_b += v.second > v.first;
    db += fmt(" %.3g/%.3g", v.second, v.first);
  }
  return {wins_a >= 2 && wins_b >= 2,
          fmt("(a) held-out reg mu=1e-3/mu=0:%s -> %d/3 lower; (b) top-3 PCA var mu=1e-3/mu=0:%s -> %d/3 larger",
              da.c_str(), wins_a, db.c_str(), wins_b)};
}

// --- 7 ------------------------------------------------------------------------

Outcome convergence_trend() {
  auto cfg = gan_config(work_dir("convergence"));
  cfg.experiment.channels = {3};
  // seed -> method -> mean |V + 2 ln 2| over epochs 40..49
  std::map<std::uint64_t, std::map<std::string, double>> gap;
  for (const auto& r : run_experiment(Suite::convergence, cfg))
    if (r.metric == "value_v" && r.step >= 40) gap[r.seed][r.method] += std::abs(r.value + 2 * std::log(2.0)) / 10;
  int wins = 0;
  std::string d;
  for (auto& [seed, m] : gap) {
    wins += m["ld-gan"] < m["s-gan"];
    d += fmt(" %.4f/%.4f", m["ld-gan"], m["s-gan"]);
  }
  return {wins >= 2 && gap.size() == 3,
          fmt("mean |V+2ln2| last 10 epochs, LD-GAN(c=3)/S-GAN(L=8):%s -> %d/3 smaller (need 2)", d.c_str(), wins)};
}

// --- 8 ------------------------------------------------------------------------

Outcome vca_planted() {
  SynthConfig cfg;
  cfg.height = 16;
  cfg.width = 16;
  cfg.bands = 8;
  cfg.count = 4;
  cfg.materials = 4;
  cfg.seed = 21;
  const auto sigs = synth_signatures(cfg);
  const auto d = synth_dataset(cfg, Split::train);
  const auto pixels = collect_pixels(d.cubes);
  double worst = 0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto e = vca_endmembers(pixels, 4, seed);
    worst = std::max(worst, match_endmembers(e.spectra, sigs).max_angle);
  }
  return {worst < 1e-6, fmt("max spectral angle %.3g rad after matching, 3 VCA seeds (need < 1e-6)", worst)};
}

// --- 9 ------------------------------------------------------------------------

Outcome metric_identities() {
  bool ok = true;
  std::string bad;
  const auto require = [&](bool c, const char* what) {
    if (!c) {
      ok = false;
      bad += std::string(" ") + what;
    }
  };
  const auto x = random_cube(16, 16, 4, 3), y = random_cube(16, 16, 4, 4);
  require(psnr(x, y) == psnr(y, x), "psnr-symmetry");
  require(ssim(x, y) == ssim(y, x), "ssim-symmetry");
  require(ssim(x, x) == 1.0, "ssim(x,x)=1");
  double prev = std::numeric_limits<double>::infinity();
  std::string trail;
  for (double s : {0.01, 0.02, 0.05, 0.1, 0.2}) {
    Rng rng(9);
    SpectralCube n = x;
    for (auto& v : n.values()) v += s * rng.normal();
    const double p = psnr(x, n);
    require(p < prev, "psnr-monotone");
    trail += fmt(" %.2f", p);
    prev = p;
  }
  return {ok, ok ? "symmetry, ssim(x,x)=1, psnr over 5 noise levels:" + trail : "violated:" + bad};
}

// --- 10 -----------------------------------------------------------------------

Outcome augmentation_trend() {
  auto cfg = gan_config(work_dir("da-sweep"));
  cfg.task.epochs = kTaskEpochs;
  cfg.task.base_width = kTaskWidth;
  cfg.task.stages = kTaskStages;
  cfg.task.batch = 8;
  cfg.experiment.fractions = {1.0};
  // task -> method -> best psnr per seed
  std::map<std::string, std::map<std::string, std::vector<double>>> best;
  for (const auto& r : run_experiment(Suite::da_sweep, cfg))
    if (r.metric == "best_psnr") best[r.task][r.method].push_back(r.value);
  bool ok = best.size() == 3;
  std::string d;
  for (auto& [task, m] : best) {
    const double base = median(m["baseline"]), ld = median(m["ld-gan"]), sg = median(m["s-gan"]);
    ok = ok && ld >= base && ld >= sg;
    d += fmt(" %s base %.2f ld %.2f s %.2f;", task.c_str(), base, ld, sg);
  }
  return {ok, "median best PSNR over 3 seeds:" + d};
}

// --- 11 -----------------------------------------------------------------------

int cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(LDGAN_CLI) + " " + args + " >>" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome determinism() {
  const auto root = work_dir("determinism");
  RunConfig c;
  c.synth = {16, 16, 8, 32, 8, 4, 3.0};
  c.ae.epochs = 3;
  c.gan.epochs = 3;
  c.gan.base_width = 8;
  c.gan.samples = 32;
  c.task.epochs = 2;
  c.task.base_width = 8;
  c.task.stages = 2;
  c.task.source = AugmentSource::ld_gan;
  c.task.fraction = 1.0;
  c.analysis.pixel_cubes = 8;
  {
    std::ofstream out(root / "config.json");
    out << config_to_json(c);
  }
  const std::vector<std::string> stages{"synth",
                                        "train-ae",
                                        "encode",
                                        "train-gan --target latent",
                                        "sample --target latent",
                                        "train-gan --target full",
                                        "sample --target full",
                                        "train-task --task csi",
                                        "evaluate --task csi",
                                        "train-task --task rgb",
                                        "train-task --task sisr",
                                        "analyze"};
  const auto log = root / "cli.log";
  const auto run_all = [&](const fs::path& dir, const std::string& extra) {
    for (const auto& s : stages) {
      const std::string args = "--config " + (root / "config.json").string() + " --deterministic --out " + dir.string() +
                               extra + " " + s;
      if (cli(args, log) != 0) return s;
    }
    return std::string();
  };
  // Every file except the run bookkeeping (config.json carries the out path, manifest.json timings).
  const auto artifacts = [](const fs::path& dir) {
    std::map<std::string, std::string> h;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
      if (!e.is_regular_file()) continue;
      const auto rel = fs::relative(e.path(), dir).string();
      if (rel == "config.json" || rel == "manifest.json") continue;
      h[rel] = file_sha256(e.path().string());
    }
    return h;
  };
  for (const auto& d : {"a", "b"})
    if (const auto failed = run_all(root / d, ""); !failed.empty())
      return {false, "stage '" + failed + "' failed, see " + log.string()};
  const auto a = artifacts(root / "a"), b = artifacts(root / "b");
  if (const auto failed = run_all(root / "a", " --force"); !failed.empty())
    return {false, "forced stage '" + failed + "' failed, see " + log.string()};
  const auto forced = artifacts(root / "a");
  std::size_t diff_ab = 0, diff_forced = 0;
  std::string first;
  for (const auto& [rel, h] : a) {
    const auto ib = b.find(rel), ifo = forced.find(rel);
    if (ib == b.end() || ib->second != h) {
      ++diff_ab;
      if (first.empty()) first = rel;
    }
    if (ifo == forced.end() || ifo->second != h) {
      ++diff_forced;
      if (first.empty()) first = rel;
    }
  }
  const bool ok = a.size() > 0 && a.size() == b.size() && a.size() == forced.size() && diff_ab == 0 && diff_forced == 0;
  return {ok, fmt("%zu artifacts over %zu CLI stages; %zu differ across run dirs, %zu after forced rerun%s", a.size(),
                  stages.size(), diff_ab, diff_forced, first.empty() ? "" : (" (first: " + first + ")").c_str())};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int k = 1; k < argc; ++k) only.insert(std::atoi(argv[k]));
  const std::vector<Criterion> criteria{
      {1, "operator oracle", 5, operator_oracle},
      {2, "adjoint identity", 5, adjoint_identity},
      {3, "gradient oracle", 60, gradient_oracle},
      {4, "variance regularizer exactness", 1, variance_exactness},
      {5, "autoencoder overfit", 300, ae_overfit},
      {6, "regularization effects", 1800, regularization_effects},
      {7, "convergence trend", 1800, convergence_trend},
      {8, "VCA planted recovery", 10, vca_planted},
      {9, "metric identities", 10, metric_identities},
      {10, "augmentation trend", 7200, augmentation_trend},
      {11, "determinism", 600, determinism},
  };
  configure_threads_from_env();
  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_budget = s < c.budget_s;
    const bool pass = o.pass && in_budget;
    failed += !pass;
    std::printf("%s %2d %s: %s [%.1f s, budget %.0f s%s]\n", pass ? "PASS" : "FAIL", c.id, c.name.c_str(),
                o.detail.c_str(), s, c.budget_s, in_budget ? "" : ", exceeded");
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
