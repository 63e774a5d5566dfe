#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "ldgan/autoencoder.hpp"
#include "ldgan/optim.hpp"
#include "support.hpp"

using namespace ldgan;
using testsupport::random_tensor;
namespace fs = std::filesystem;

namespace {

AEArch micro_arch() { return AEArch{4, 2, 1}; }

Dataset small_data(std::size_t count, std::uint64_t seed, Split split = Split::train) {
  SynthConfig cfg;
  cfg.height = 8;
  cfg.width = 8;
  cfg.bands = 8;
  cfg.count = count;
  cfg.materials = 3;
  cfg.seed = seed;
  return synth_dataset(cfg, split);
}

bool same_tensors(const ParamSet<float>& a, const ParamSet<float>& b) {
  const auto ta = a.named_tensors(), tb = b.named_tensors();
  if (ta.size() != tb.size()) return false;
  for (std::size_t k = 0; k < ta.size(); ++k)
    if (ta[k].first != tb[k].first || !(ta[k].second == tb[k].second)) return false;
  return true;
}

}  // namespace

TEST_CASE("architecture") {
  SUBCASE("width ladders") {
    const AEArch a{8, 3, 0};
    CHECK(encoder_widths(a) == std::vector<std::size_t>{48, 48, 24, 24, 12, 6, 3});
    CHECK(decoder_widths(a) == std::vector<std::size_t>{6, 12, 24, 24, 48, 48, 48});
  }
  SUBCASE("c must be below L") {
    CHECK_THROWS_AS(validate(AEArch{8, 8, 0}), ConfigError);
    CHECK_THROWS_AS(validate(AEArch{8, 0, 0}), ConfigError);
    CHECK_NOTHROW(validate(AEArch{31, 3, 0}));
  }
  SUBCASE("seeded init is deterministic") {
    auto a = init_ae<float>(micro_arch(), 3), b = init_ae<float>(micro_arch(), 3), c = init_ae<float>(micro_arch(), 4);
    CHECK(same_tensors(a.encoder, b.encoder));
    CHECK(same_tensors(a.decoder, b.decoder));
    CHECK_FALSE(same_tensors(a.encoder, c.encoder));
  }
}

TEST_CASE("encode and decode") {
  SUBCASE("c = 3 on L = 31 keeps the spatial size") {
    auto p = init_ae<double>(AEArch{31, 3, 1}, 1);
    const auto x = random_tensor<double>({2, 31, 6, 5}, 2, 0.0, 1.0);
    const auto b = encode(p, x);
    CHECK(b.shape() == Shape{2, 3, 6, 5});
    const auto y = decode(p, b);
    CHECK(y.shape() == x.shape());
    for (double v : y.storage()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  SUBCASE("deterministic") {
    auto p = init_ae<float>(micro_arch(), 1);
    const auto x = random_tensor<float>({2, 4, 4, 4}, 2, 0.0, 1.0);
    CHECK(encode(p, x) == encode(p, x));
  }
  SUBCASE("channel mismatch") {
    auto p = init_ae<double>(micro_arch(), 1);
    CHECK_THROWS_AS(encode(p, Tensor<double>({1, 5, 4, 4})), DimensionError);
    CHECK_THROWS_AS(decode(p, Tensor<double>({1, 3, 4, 4})), DimensionError);
  }
}

TEST_CASE("variance_reg") {
  SUBCASE("identical latents give 0") {
    const auto one = random_tensor<double>({1, 2, 3, 3}, 1);
    Tensor<double> batch({3, 2, 3, 3});
    for (std::size_t b = 0; b < 3; ++b)
      std::copy(one.storage().begin(), one.storage().end(), batch.storage().begin() + static_cast<long>(b * 18));
    CHECK(variance_reg(batch) == 0.0);
  }
  SUBCASE("B = 2 with values {0, 2} gives sqrt(M N c)") {
    Tensor<double> batch({2, 3, 4, 5});
    for (std::size_t k = 0; k < 60; ++k) batch.storage()[60 + k] = 2.0;
    CHECK(variance_reg(batch) == doctest::Approx(std::sqrt(60.0)).epsilon(1e-14));
  }
  SUBCASE("scaling by alpha scales by alpha squared") {
    const auto x = random_tensor<double>({4, 2, 3, 3}, 5);
    auto y = x;
    for (auto& v : y.storage()) v *= 3.0;
    CHECK(variance_reg(y) == doctest::Approx(9.0 * variance_reg(x)).epsilon(1e-12));
  }
  SUBCASE("invariant under batch permutation") {
    const auto x = random_tensor<double>({3, 2, 2, 2}, 6);
    Tensor<double> y(x.shape());
    const std::size_t perm[3] = {2, 0, 1};
    for (std::size_t b = 0; b < 3; ++b)
      std::copy(x.storage().begin() + static_cast<long>(perm[b] * 8),
                x.storage().begin() + static_cast<long>(perm[b] * 8 + 8), y.storage().begin() + static_cast<long>(b * 8));
    CHECK(variance_reg(y) == doctest::Approx(variance_reg(x)).epsilon(1e-14));
  }
  SUBCASE("B < 2") { CHECK_THROWS_AS(variance_reg(Tensor<double>({1, 2, 2, 2})), ConfigError); }
}

TEST_CASE("objective gradient passes the finite-difference check") {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
    auto p = init_ae<double>(micro_arch(), seed);
    const auto x = random_tensor<double>({2, 4, 4, 4}, seed + 10, 0.0, 1.0);
    auto params = p.pointers();
    for (double mu : {0.0, 0.5}) {
      const auto build = [&](Graph<double>& g) { return ae_objective(g, p, g.constant(x), mu).total; };
      const auto r = finite_diff_check(build, params, testsupport::network_check_options(seed));
      CAPTURE(seed);
      CAPTURE(mu);
      CAPTURE(r.worst);
      CHECK(r.max_rel_error <= 1e-4);
      CHECK(r.coords_checked >= r.coords_skipped);
    }
  }
}

TEST_CASE("objective parts") {
  auto p = init_ae<double>(micro_arch(), 1);
  const auto x = random_tensor<double>({3, 4, 4, 4}, 2, 0.0, 1.0);
  Graph<double> g;
  const auto obj = ae_objective(g, p, g.constant(x), 0.25);
  const auto xhat = decode(p, encode(p, x));
  double sse = 0;
  for (std::size_t k = 0; k < x.size(); ++k) sse += (x.storage()[k] - xhat.storage()[k]) * (x.storage()[k] - xhat.storage()[k]);
  CHECK(g.value(obj.recon).storage()[0] == doctest::Approx(sse / 3.0).epsilon(1e-12));
  CHECK(g.value(obj.reg).storage()[0] == doctest::Approx(variance_reg(encode(p, x))).epsilon(1e-12));
  CHECK(g.value(obj.total).storage()[0] ==
        doctest::Approx(sse / 3.0 + 0.25 * variance_reg(encode(p, x))).epsilon(1e-12));
}

TEST_CASE("training") {
  const auto train = small_data(8, 1);
  const auto test = small_data(4, 1, Split::test);
  AETrainConfig cfg;
  cfg.epochs = 12;
  cfg.batch = 4;
  cfg.lr = 2e-3;
  cfg.seed = 7;
  const AEArch arch{8, 2, 2};

  SUBCASE("loss falls in trend and the history is complete") {
    const auto st = train_ae(train, test, arch, cfg);
    REQUIRE(st.history.size() == 12);
    double first = 0, last = 0;
    for (std::size_t e = 0; e < 5; ++e) {
      first += st.history[e].recon_loss;
      last += st.history[7 + e].recon_loss;
    }
    CHECK(last < first);
    for (const auto& h : st.history) {
      CHECK(std::isfinite(h.psnr));
      CHECK(h.ssim <= 1.0);
      CHECK(h.reg_value >= 0.0);
    }
  }
  SUBCASE("bit-identical for a fixed seed and resumable from a checkpoint") {
    cfg.epochs = 4;
    const auto full = train_ae(train, test, arch, cfg);
    auto partial = init_ae_training(arch, cfg.seed);
    auto half = cfg;
    half.epochs = 2;
    train_ae(partial, train, test, half);
    const auto dir = fs::temp_directory_path() / "ldgan_test_ae";
    fs::create_directories(dir);
    const auto path = (dir / "ae.ckpt").string();
    save_ae(path, partial);
    auto resumed = load_ae(path);
    CHECK(resumed.history.size() == 2);
    train_ae(resumed, train, test, cfg);
    CHECK(same_tensors(resumed.params.encoder, full.params.encoder));
    CHECK(same_tensors(resumed.params.decoder, full.params.decoder));
    CHECK(resumed.history.back().recon_loss == full.history.back().recon_loss);
  }
  SUBCASE("batch below 2") {
    cfg.batch = 1;
    CHECK_THROWS_AS(train_ae(train, test, arch, cfg), ConfigError);
  }
}

TEST_CASE("encode_dataset") {
  auto p = init_ae<float>(AEArch{8, 3, 1}, 2);
  auto d = small_data(5, 3);
  d.provenance[1] = Provenance::geometric;
  const auto lat = encode_dataset(d, p, 2);
  CHECK(lat.size() == 5);
  CHECK(lat.dims() == CubeDims{8, 8, 3});
  CHECK(lat.provenance == d.provenance);
  CHECK(encode_dataset(d, p, 3).cubes == lat.cubes);
  const auto back = decode_cubes(lat.cubes, p);
  CHECK(back.size() == 5);
  CHECK(back[0].dims() == CubeDims{8, 8, 8});
}

TEST_CASE("checkpoint") {
  auto st = init_ae_training(AEArch{8, 3, 1}, 5);
  st.history.push_back({1, 0.5, 0.1, 20.0, 0.8});
  const auto ck = ae_checkpoint(st);
  CHECK(ck.magic == kAutoencoderMagic);
  CHECK(ck.info_a == 3);
  CHECK(ck.info_b == 8);
  const auto back = ae_state_from_checkpoint(ck);
  CHECK(same_tensors(back.params.encoder, st.params.encoder));
  CHECK(back.history.size() == 1);
  CHECK(back.history[0].psnr == 20.0);
  auto wrong = ck;
  wrong.magic = kGanMagic;
  CHECK_THROWS_AS(ae_state_from_checkpoint(wrong), FormatError);
}
