#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "ldgan/analysis.hpp"
#include "ldgan/optim.hpp"
#include "ldgan/recovery.hpp"
#include "support.hpp"

using namespace ldgan;
using testsupport::random_tensor;
namespace fs = std::filesystem;

namespace {

Dataset synth(std::size_t hw, std::size_t bands, std::size_t count, Split split, std::uint64_t seed = 3) {
  SynthConfig cfg;
  cfg.height = hw;
  cfg.width = hw;
  cfg.bands = bands;
  cfg.count = count;
  cfg.materials = 3;
  cfg.seed = seed;
  return synth_dataset(cfg, split);
}

void zero_param(ParamSet<double>& set, const std::string& name) { set.param(name).value.fill(0.0); }

}  // namespace

TEST_CASE("task setup") {
  const CubeDims d{16, 16, 8};
  CHECK(make_task(RecoveryTask::csi, d).op->kind() == OperatorKind::cassi);
  CHECK(make_task(RecoveryTask::rgb, d).op->kind() == OperatorKind::rgb);
  const auto sisr = make_task(RecoveryTask::sisr, d);
  CHECK(sisr.op->output_shape() == MeasurementShape{2, 8, 8});
  CHECK(recovery_task_from_string("sisr") == RecoveryTask::sisr);
  CHECK(augment_source_from_string("ld-gan") == AugmentSource::ld_gan);
  CHECK(augment_source_from_string("s-gan") == AugmentSource::s_gan);
  CHECK_THROWS_AS(augment_source_from_string("vae"), ConfigError);
  SUBCASE("the UNET needs sides divisible by 16") {
    CHECK_THROWS_AS(init_recovery<float>(make_task(RecoveryTask::rgb, CubeDims{24, 24, 8}), RecoveryArch{4, 5, 0.5}, 1),
                    ConfigError);
    CHECK_NOTHROW(init_recovery<float>(make_task(RecoveryTask::csi, CubeDims{12, 12, 8}), RecoveryArch{4, 5, 0.5}, 1));
  }
}

TEST_CASE("recover") {
  const CubeDims d{16, 16, 8};
  const auto cube = testsupport::random_cube(16, 16, 8, 1);
  for (auto task : {RecoveryTask::csi, RecoveryTask::rgb, RecoveryTask::sisr}) {
    CAPTURE(to_string(task));
    auto net = init_recovery<float>(make_task(task, d), RecoveryArch{4, 2, 0.5}, 2);
    const auto y = net.setup.op->measure(cube);
    const auto x = recover(y, net);
    CHECK(x.dims() == d);
    CHECK(x.within_unit_range());
    CHECK(recover(y, net) == x);
  }
  SUBCASE("measurement kind mismatch") {
    auto net = init_recovery<float>(make_task(RecoveryTask::csi, d), RecoveryArch{4, 2, 0.5}, 2);
    const auto y = rgb_project(cube, default_spectral_response(8));
    CHECK_THROWS_AS(recover(y, net), ConfigError);
  }
}

TEST_CASE("unrolled CSI stage") {
  const CubeDims d{4, 4, 8};
  auto net = init_recovery<double>(make_task(RecoveryTask::csi, d), RecoveryArch{3, 2, 0.5}, 4);
  const auto& op = *net.setup.op;
  const auto x = random_tensor<double>({1, 8, 4, 4}, 5, 0.0, 1.0);
  const auto truth = random_tensor<double>({1, 8, 4, 4}, 6, 0.0, 1.0);
  Tensor<double> y({1, 1, 4, 11});
  op.apply(std::span<const double>(truth.storage()), std::span<double>(y.storage()));

  SUBCASE("alpha = 0 and a zero prior leave x unchanged") {
    zero_param(net.params, "stage0.alpha");
    zero_param(net.params, "stage0.p2.w");
    zero_param(net.params, "stage0.p2.b");
    Graph<double> g;
    const auto out = g.value(unrolled_csi_stage(g, net, 0, g.constant(x), g.constant(y)));
    CHECK(out == x);
  }
  SUBCASE("consistent measurements give a zero data step") {
    zero_param(net.params, "stage0.p2.w");
    zero_param(net.params, "stage0.p2.b");
    Tensor<double> yx({1, 1, 4, 11});
    op.apply(std::span<const double>(x.storage()), std::span<double>(yx.storage()));
    Graph<double> g;
    const auto out = g.value(unrolled_csi_stage(g, net, 0, g.constant(x), g.constant(yx)));
    CHECK(out == x);
  }
  SUBCASE("data step matches the dense A^T (A x - y)") {
    net.params.param("stage0.alpha").value.fill(1.0);
    zero_param(net.params, "stage0.p2.w");
    zero_param(net.params, "stage0.p2.b");
    const auto a = as_dense(op);
    std::vector<double> r(a.rows, 0.0), grad(a.cols, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
      for (std::size_t j = 0; j < a.cols; ++j) r[i] += a.at(i, j) * x[j];
      r[i] -= y[i];
    }
    for (std::size_t i = 0; i < a.rows; ++i)
      for (std::size_t j = 0; j < a.cols; ++j) grad[j] += a.at(i, j) * r[i];
    Graph<double> g;
    const auto out = g.value(unrolled_csi_stage(g, net, 0, g.constant(x), g.constant(y)));
    for (std::size_t j = 0; j < a.cols; ++j) CHECK(std::abs(out[j] - (x[j] - grad[j] / net.lipschitz)) <= 1e-12);
  }
  SUBCASE("stage index out of range") {
    Graph<double> g;
    CHECK_THROWS_AS(unrolled_csi_stage(g, net, 2, g.constant(x), g.constant(y)), ConfigError);
  }
}

TEST_CASE("objective gradients pass the finite-difference check") {
  SUBCASE("micro UNET") {
    for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
      auto net = init_recovery<double>(make_task(RecoveryTask::rgb, CubeDims{16, 16, 4}), RecoveryArch{2, 5, 0.5}, seed);
      std::vector<SpectralCube> cubes{testsupport::random_cube(16, 16, 4, seed), testsupport::random_cube(16, 16, 4, seed + 9)};
      const auto in = simulate_input(net, cubes);
      const auto truth = to_batch<double>(std::span<const SpectralCube>(cubes));
      auto params = net.params.pointers();
      const auto build = [&](Graph<double>& g) { return recovery_objective(g, net, in, truth); };
      // Loss ~ 1e2: differences at the smallest steps carry ~1e-9 of round-off.
      auto opts = testsupport::network_check_options(seed, 8);
      opts.abs_tol = 1e-9;
      const auto r = finite_diff_check(build, params, opts);
      CAPTURE(seed);
      CAPTURE(r.worst);
      CHECK(r.max_rel_error <= 1e-4);
      CHECK(r.coords_checked >= r.coords_skipped);
    }
  }
  SUBCASE("micro unrolled CSI") {
    for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
      auto net = init_recovery<double>(make_task(RecoveryTask::csi, CubeDims{4, 4, 4}), RecoveryArch{3, 2, 0.5}, seed);
      std::vector<SpectralCube> cubes{testsupport::random_cube(4, 4, 4, seed), testsupport::random_cube(4, 4, 4, seed + 9)};
      const auto in = simulate_input(net, cubes);
      const auto truth = to_batch<double>(std::span<const SpectralCube>(cubes));
      auto params = net.params.pointers();
      const auto build = [&](Graph<double>& g) { return recovery_objective(g, net, in, truth); };
      const auto r = finite_diff_check(build, params, testsupport::network_check_options(seed));
      CAPTURE(seed);
      CAPTURE(r.worst);
      CHECK(r.max_rel_error <= 1e-4);
    }
  }
}

TEST_CASE("SISR input is the nearest-neighbour upsampled decimation") {
  auto net = init_recovery<double>(make_task(RecoveryTask::sisr, CubeDims{16, 16, 8}), RecoveryArch{2, 5, 0.5}, 1);
  const auto cube = testsupport::random_cube(16, 16, 8, 2);
  const auto in = simulate_input(net, std::vector<SpectralCube>{cube});
  CHECK(in.start.shape() == Shape{1, 2, 16, 16});
  const auto y = decimate(cube, 4, 4);
  CHECK(in.start.at(0, 1, 5, 7) == doctest::Approx(y.values[(1 * 8 + 2) * 8 + 3]).epsilon(1e-12));
}

TEST_CASE("training") {
  const auto train = synth(16, 8, 12, Split::train);
  const auto test = synth(16, 8, 4, Split::test);
  TaskTrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch = 4;
  cfg.seed = 5;
  const RecoveryArch arch{4, 2, 0.5};

  SUBCASE("bit-reproducible and resumable") {
    const auto setup = make_task(RecoveryTask::sisr, CubeDims{16, 16, 8});
    const auto a = train_task(train, test, setup, arch, cfg);
    const auto b = train_task(train, test, setup, arch, cfg);
    REQUIRE(a.report.history.size() == 2);
    CHECK(a.report.history[1].loss == b.report.history[1].loss);
    CHECK(a.report.best_psnr == b.report.best_psnr);

    auto part = init_task_training(setup, arch, cfg);
    auto one = cfg;
    one.epochs = 1;
    train_task(part, train, test, one);
    const auto dir = fs::temp_directory_path() / "ldgan_test_recovery";
    fs::create_directories(dir);
    save_recovery((dir / "r.ckpt").string(), part);
    auto resumed = load_recovery((dir / "r.ckpt").string());
    train_task(resumed, train, test, cfg);
    CHECK(resumed.report.history[1].loss == a.report.history[1].loss);
    CHECK(resumed.report.best_psnr == a.report.best_psnr);
  }
  SUBCASE("report fields") {
    cfg.source = AugmentSource::geometric;
    cfg.fraction = 0.5;
    const auto st = train_task(train, test, make_task(RecoveryTask::csi, CubeDims{16, 16, 8}), arch, cfg);
    const auto& r = st.report;
    CHECK(r.task == RecoveryTask::csi);
    CHECK(r.source == AugmentSource::geometric);
    CHECK(r.best_psnr == doctest::Approx(std::max(r.history[0].psnr, r.history[1].psnr)));
    CHECK(r.epoch_of_best < 2);
    CHECK(std::isfinite(r.baseline_psnr));
    CHECK(task_report_header() == "task,source,fraction,seed,best_psnr,best_ssim,epoch_of_best");
    CHECK(task_report_row(r).rfind("csi,geometric,0.5,5,", 0) == 0);
  }
  SUBCASE("invalid configs") {
    cfg.fraction = 1.5;
    CHECK_THROWS_AS(validate(cfg), ConfigError);
  }
}

TEST_CASE("trained CSI network beats the adjoint baseline by 3 dB") {
  const auto train = synth(16, 8, 48, Split::train);
  const auto test = synth(16, 8, 8, Split::test);
  TaskTrainConfig cfg;
  cfg.epochs = 6;
  cfg.batch = 8;
  cfg.seed = 1;
  const auto st = train_task(train, test, make_task(RecoveryTask::csi, CubeDims{16, 16, 8}), RecoveryArch{8, 5, 0.5}, cfg);
  CHECK(st.report.best_psnr >= st.report.baseline_psnr + 3.0);
}
