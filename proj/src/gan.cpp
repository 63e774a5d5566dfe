#include "ldgan/gan.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace ldgan {

namespace {

constexpr float kLeakySlope = 0.2f;

template <typename T>
Var constant_like(Graph<T>& g, Var x, T value) {
  return g.constant(Tensor<T>(g.value(x).shape(), value));
}

template <typename T>
Var discriminator_loss(Graph<T>& g, Var d_real, Var d_fake) {
  return g.add(g.bce(d_real, constant_like(g, d_real, T{1})), g.bce(d_fake, constant_like(g, d_fake, T{0})));
}

std::vector<double> as_doubles(const Tensor<float>& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

std::string to_string(GanTarget t) { return t == GanTarget::latent ? "latent" : "full"; }

GanTarget gan_target_from_string(const std::string& s) {
  if (s == "latent") return GanTarget::latent;
  if (s == "full") return GanTarget::full;
  throw ConfigError("unknown GAN target '" + s + "' (expected latent or full)");
}

std::size_t discriminator_blocks(const GanArch& arch) {
  std::size_t blocks = 0, m = std::min(arch.height, arch.width);
  while (blocks < 4 && m >= 2 && m % 2 == 0) m /= 2, ++blocks;
  return blocks;
}

void validate(const GanArch& arch) {
  if (arch.out_channels == 0) throw ConfigError("gan: output channels must be >= 1");
  if (arch.base_width == 0) throw ConfigError("gan: base_width must be >= 1");
  if (arch.height < 4 || arch.width < 4 || arch.height % 4 || arch.width % 4) {
    throw ConfigError("gan: spatial size " + std::to_string(arch.height) + "x" + std::to_string(arch.width) +
                      " must be a multiple of 4");
  }
  const std::size_t f = std::size_t{1} << discriminator_blocks(arch);
  if (arch.height % f || arch.width % f) throw ConfigError("gan: spatial size must be divisible by " + std::to_string(f));
}

template <typename T>
GanParams<T> init_gan(const GanArch& arch, std::uint64_t seed) {
  validate(arch);
  GanParams<T> p;
  p.arch = arch;
  const Rng root(seed);
  Rng gr = root.split(1), dr = root.split(2);
  const std::size_t w = arch.base_width;

  auto& G = p.generator;
  G.add("head.w", gaussian_tensor<T>({kNoiseDim, 8 * w, arch.height / 4, arch.width / 4}, 0.02, gr));
  add_batch_norm(G, "head_bn", 8 * w, Init::dcgan, gr);
  add_conv_transpose(G, "up1", 8 * w, 4 * w, 4, Init::dcgan, gr, false);
  add_batch_norm(G, "up1_bn", 4 * w, Init::dcgan, gr);
  add_conv_transpose(G, "up2", 4 * w, 2 * w, 4, Init::dcgan, gr, false);
  add_batch_norm(G, "up2_bn", 2 * w, Init::dcgan, gr);
  add_conv_transpose(G, "refine", 2 * w, w, 3, Init::dcgan, gr, false);
  add_batch_norm(G, "refine_bn", w, Init::dcgan, gr);
  add_conv_transpose(G, "out", w, arch.out_channels, 3, Init::dcgan, gr, true);

  auto& D = p.discriminator;
  const std::size_t blocks = discriminator_blocks(arch);
  std::size_t in = arch.out_channels;
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t out = w << b;
    const std::string name = "block" + std::to_string(b);
    add_conv(D, name, out, in, 4, Init::dcgan, dr, b == 0);
    if (b > 0) add_batch_norm(D, name + "_bn", out, Init::dcgan, dr);
    in = out;
  }
  const std::size_t fh = arch.height >> blocks, fw = arch.width >> blocks;
  D.add("out.w", gaussian_tensor<T>({1, in, fh, fw}, 0.02, dr));
  D.add("out.b", Tensor<T>({1}, T{0}));
  return p;
}

template <typename T>
Var generate(Graph<T>& g, GanParams<T>& p, Var z, Mode mode) {
  const auto& zs = g.value(z).shape();
  if (zs.size() != 4 || zs[1] != kNoiseDim || zs[2] != 1 || zs[3] != 1) {
    throw DimensionError("generate: noise must be (B, 100, 1, 1), got " + shape_str(zs));
  }
  auto& G = p.generator;
  Var h = conv_transpose(g, G, "head", z, 1, 0);
  h = g.relu(batch_norm(g, G, "head_bn", h, mode));
  h = g.relu(batch_norm(g, G, "up1_bn", conv_transpose(g, G, "up1", h, 2, 1), mode));
  h = g.relu(batch_norm(g, G, "up2_bn", conv_transpose(g, G, "up2", h, 2, 1), mode));
  h = g.relu(batch_norm(g, G, "refine_bn", conv_transpose(g, G, "refine", h, 1, 1), mode));
  h = conv_transpose(g, G, "out", h, 1, 1);
  return p.arch.target == GanTarget::full ? g.sigmoid(h) : h;
}

template <typename T>
Var discriminate(Graph<T>& g, GanParams<T>& p, Var x, Mode mode) {
  const auto& xs = g.value(x).shape();
  if (xs.size() != 4 || xs[1] != p.arch.out_channels || xs[2] != p.arch.height || xs[3] != p.arch.width) {
    throw DimensionError("discriminate: expected (B, " + std::to_string(p.arch.out_channels) + ", " +
                         std::to_string(p.arch.height) + ", " + std::to_string(p.arch.width) + "), got " +
                         shape_str(xs));
  }
  auto& D = p.discriminator;
  Var h = x;
  const std::size_t blocks = discriminator_blocks(p.arch);
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::string name = "block" + std::to_string(b);
    h = conv(g, D, name, h, 2, 1);
    if (b > 0) h = batch_norm(g, D, name + "_bn", h, mode);
    h = g.leaky_relu(h, static_cast<T>(kLeakySlope));
  }
  return g.sigmoid(conv(g, D, "out", h, 1, 0));
}

template <typename T>
Tensor<T> noise_batch(std::size_t n, Rng& rng) {
  Tensor<T> z({n, kNoiseDim, 1, 1});
  for (auto& v : z.storage()) v = static_cast<T>(rng.normal());
  return z;
}

template <typename T>
Tensor<T> generate(GanParams<T>& p, const Tensor<T>& z) {
  Graph<T> g;
  return g.value(generate(g, p, g.constant(z), Mode::eval));
}

GanLosses gan_losses(std::span<const double> d_real, std::span<const double> d_fake) {
  auto clamp = [](double v) { return std::clamp(v, kBceClamp, 1.0 - kBceClamp); };
  double lr = 0, lf = 0, lg = 0;
  for (double v : d_real) lr += std::log(clamp(v));
  for (double v : d_fake) lf += std::log(1.0 - clamp(v)), lg += std::log(clamp(v));
  const double nr = static_cast<double>(std::max<std::size_t>(1, d_real.size()));
  const double nf = static_cast<double>(std::max<std::size_t>(1, d_fake.size()));
  GanLosses out;
  out.value_v = lr / nr + lf / nf;
  out.loss_d = -out.value_v;
  out.loss_g = -lg / nf;
  return out;
}

template <typename T>
double generated_variance_reg(const Tensor<T>& fake_batch) {
  return variance_reg(fake_batch);
}

template <typename T>
Var generator_objective(Graph<T>& g, GanParams<T>& p, Var z, double mu_gan, Mode mode) {
  if (mu_gan < 0) throw ConfigError("mu_gan must be >= 0");
  const Var fake = generate(g, p, z, mode);
  const Var d_fake = discriminate(g, p, fake, mode);
  const Var adv = g.bce(d_fake, constant_like(g, d_fake, T{1}));
  if (mu_gan == 0) return adv;
  return g.sub(adv, g.scale(g.variance_norm(fake), static_cast<T>(mu_gan)));
}

template <typename T>
Var discriminator_objective(Graph<T>& g, GanParams<T>& p, Var real, Var fake, Mode mode) {
  return discriminator_loss(g, discriminate(g, p, real, mode), discriminate(g, p, fake, mode));
}

void validate(const GanTrainConfig& cfg) {
  if (!(cfg.lr > 0)) throw ConfigError("gan.lr must be > 0");
  if (cfg.batch < 2) throw ConfigError("gan.batch must be >= 2");
  if (!(cfg.mu_gan >= 0)) throw ConfigError("gan.mu_gan must be >= 0");
  if (cfg.eval_samples < 2) throw ConfigError("gan.eval_samples must be >= 2");
}

GanTrainState init_gan_training(const GanArch& arch, std::uint64_t seed) {
  GanTrainState s;
  s.params = init_gan<float>(arch, seed);
  return s;
}

void train_gan(GanTrainState& state, const Dataset& data, const GanTrainConfig& cfg, const GanEpochHook& on_epoch) {
  validate(cfg);
  if (data.empty()) throw ConfigError("train_gan: training set is empty");
  const auto& a = state.params.arch;
  const CubeDims d = data.dims();
  if (d.bands != a.out_channels || d.height != a.height || d.width != a.width) {
    throw DimensionError("train_gan: data " + dims_str(d) + " does not match the generator output");
  }
  const AdamConfig adam = gan_adam(cfg.lr);
  auto gp = state.params.generator.pointers();
  auto dp = state.params.discriminator.pointers();
  const Rng root(cfg.seed);
  Rng eval_rng = root.split(777);
  const Tensor<float> eval_z = noise_batch<float>(cfg.eval_samples, eval_rng);

  for (std::size_t epoch = state.history.size(); epoch < cfg.epochs; ++epoch) {
    Rng rng = root.split(2000 + epoch);
    const auto batches = epoch_batches(data.size(), cfg.batch, rng);
    GanEpochRecord rec;
    rec.epoch = epoch;
    for (const auto& idx : batches) {
      Graph<float> gg;
      const Var z = gg.constant(noise_batch<float>(idx.size(), rng));
      const Var fake = generate(gg, state.params, z, Mode::train);

      {
        Graph<float> gd;
        const Var dr = discriminate(gd, state.params, gd.constant(gather_batch<float>(data.cubes, idx)), Mode::train);
        const Var df = discriminate(gd, state.params, gd.constant(gg.value(fake)), Mode::train);
        const Var loss = discriminator_loss(gd, dr, df);
        const auto l = gan_losses(as_doubles(gd.value(dr)), as_doubles(gd.value(df)));
        require_finite_loss(gd.value(loss)[0], static_cast<int>(epoch), "discriminator loss");
        rec.loss_d += gd.value(loss)[0];
        rec.value_v += l.value_v;
        zero_grads<float>(dp);
        gd.backward(loss);
        adam_step<float>(dp, state.adam_d, adam);
      }

      const Var df = discriminate(gg, state.params, fake, Mode::train);
      const Var adv = gg.bce(df, constant_like(gg, df, 1.0f));
      const Var loss =
          cfg.mu_gan > 0 ? gg.sub(adv, gg.scale(gg.variance_norm(fake), static_cast<float>(cfg.mu_gan))) : adv;
      require_finite_loss(gg.value(loss)[0], static_cast<int>(epoch), "generator loss");
      rec.loss_g += gg.value(adv)[0];
      zero_grads<float>(gp);
      gg.backward(loss);
      adam_step<float>(gp, state.adam_g, adam);
    }
    const double nb = static_cast<double>(batches.size());
    rec.loss_d /= nb;
    rec.loss_g /= nb;
    rec.value_v /= nb;
    rec.reg_value = generated_variance_reg(generate(state.params, eval_z));
    state.history.push_back(rec);
    if (on_epoch) on_epoch(state);
  }
}

GanTrainState train_gan(const Dataset& data, const GanTrainConfig& cfg) {
  const CubeDims d = data.dims();
  GanArch arch{d.bands, d.height, d.width, cfg.base_width, cfg.target};
  GanTrainState s = init_gan_training(arch, cfg.seed);
  train_gan(s, data, cfg);
  return s;
}

std::vector<SpectralCube> generate_cubes(GanParams<float>& p, std::size_t n, std::uint64_t seed, std::size_t chunk) {
  std::vector<SpectralCube> out;
  out.reserve(n);
  Rng rng(seed);
  for (std::size_t first = 0; first < n; first += chunk) {
    const std::size_t cnt = std::min(chunk, n - first);
    for (auto& c : from_batch(generate(p, noise_batch<float>(cnt, rng)))) out.push_back(std::move(c));
  }
  return out;
}

std::vector<SpectralCube> sample_spectral(std::size_t n, GanParams<float>& gan, AEParams<float>& dec,
                                          std::uint64_t seed) {
  if (gan.arch.target != GanTarget::latent || gan.arch.out_channels != dec.arch.channels) {
    throw ConfigError("sample_spectral: generator emits " + std::to_string(gan.arch.out_channels) +
                      " channels but the decoder expects " + std::to_string(dec.arch.channels) + " latent channels");
  }
  if (n == 0) return {};
  return decode_cubes(generate_cubes(gan, n, seed), dec);
}

std::vector<SpectralCube> sample_cubes(std::size_t n, GanParams<float>& gan, AEParams<float>* dec,
                                       std::uint64_t seed) {
  if (gan.arch.target == GanTarget::full) return generate_cubes(gan, n, seed);
  if (!dec) throw DependencyError("sampling an LD-GAN needs the autoencoder's decoder");
  return sample_spectral(n, gan, *dec, seed);
}

Checkpoint gan_checkpoint(const GanTrainState& state, bool with_optimizer) {
  const auto& a = state.params.arch;
  Checkpoint ck;
  ck.magic = kGanMagic;
  ck.info_a = static_cast<std::uint32_t>(a.out_channels);
  ck.info_b = static_cast<std::uint32_t>(a.base_width);
  for (auto& [n, t] : to_float_tensors(state.params.generator)) ck.tensors.emplace_back("gen/" + n, std::move(t));
  for (auto& [n, t] : to_float_tensors(state.params.discriminator)) ck.tensors.emplace_back("dis/" + n, std::move(t));
  ck.meta["height"] = a.height;
  ck.meta["width"] = a.width;
  ck.meta["target"] = to_string(a.target);
  auto& h = ck.meta["history"] = nlohmann::json::array();
  for (const auto& r : state.history) h.push_back({r.epoch, r.loss_d, r.loss_g, r.value_v, r.reg_value});
  if (with_optimizer) {
    store_adam(ck, "g", state.adam_g);
    store_adam(ck, "d", state.adam_d);
  }
  return ck;
}

GanTrainState gan_state_from_checkpoint(const Checkpoint& ck) {
  if (ck.magic != kGanMagic) throw FormatError("not a GAN checkpoint");
  GanArch arch;
  arch.out_channels = ck.info_a;
  arch.base_width = ck.info_b;
  arch.height = ck.meta.at("height").get<std::size_t>();
  arch.width = ck.meta.at("width").get<std::size_t>();
  arch.target = gan_target_from_string(ck.meta.at("target").get<std::string>());
  GanTrainState s = init_gan_training(arch, 0);
  assign_from_float(s.params.generator, network_tensors(ck, "gen"));
  assign_from_float(s.params.discriminator, network_tensors(ck, "dis"));
  s.adam_g = restore_adam(ck, "g");
  s.adam_d = restore_adam(ck, "d");
  if (ck.meta.contains("history")) {
    for (const auto& r : ck.meta["history"]) {
      s.history.push_back(
          {r[0].get<std::size_t>(), r[1].get<double>(), r[2].get<double>(), r[3].get<double>(), r[4].get<double>()});
    }
  }
  return s;
}

void save_gan(const std::string& path, const GanTrainState& state) { save_checkpoint(path, gan_checkpoint(state)); }

GanTrainState load_gan(const std::string& path) { return gan_state_from_checkpoint(load_checkpoint(path, kGanMagic)); }

void write_gan_history(const std::string& path, const std::vector<GanEpochRecord>& history) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write " + path);
  f.precision(10);
  f << "epoch,loss_d,loss_g,value_v,reg_value\n";
  for (const auto& r : history) {
    f << r.epoch << ',' << r.loss_d << ',' << r.loss_g << ',' << r.value_v << ',' << r.reg_value << '\n';
  }
}

#define LDGAN_GAN_INSTANTIATE(T)                                                 \
  template struct GanParams<T>;                                                  \
  template GanParams<T> init_gan(const GanArch&, std::uint64_t);                 \
  template Var generate(Graph<T>&, GanParams<T>&, Var, Mode);                    \
  template Var discriminate(Graph<T>&, GanParams<T>&, Var, Mode);                \
  template Tensor<T> noise_batch(std::size_t, Rng&);                             \
  template Tensor<T> generate(GanParams<T>&, const Tensor<T>&);                  \
  template double generated_variance_reg(const Tensor<T>&);                      \
  template Var generator_objective(Graph<T>&, GanParams<T>&, Var, double, Mode); \
  template Var discriminator_objective(Graph<T>&, GanParams<T>&, Var, Var, Mode);

LDGAN_GAN_INSTANTIATE(float)
LDGAN_GAN_INSTANTIATE(double)

}  // namespace ldgan
