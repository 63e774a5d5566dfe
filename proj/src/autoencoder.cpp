#include "ldgan/autoencoder.hpp"

#include <cmath>
#include <fstream>

#include "ldgan/analysis.hpp"

namespace ldgan {

namespace {

constexpr std::size_t kAeLayers = 7;

std::string enc_layer(std::size_t i) { return "enc" + std::to_string(i); }
std::string dec_layer(std::size_t i) { return "dec" + std::to_string(i); }

std::size_t unit(const AEArch& a) { return a.width_unit ? a.width_unit : a.channels; }

void require_channels(const Tensor<float>& t, std::size_t expected, const char* what) {
  if (t.rank() != 4 || t.dim(1) != expected) {
    throw DimensionError(std::string(what) + ": expected " + std::to_string(expected) + " channels, got " +
                         shape_str(t.shape()));
  }
}

}  // namespace

void validate(const AEArch& arch) {
  if (arch.bands == 0) throw ConfigError("autoencoder: bands must be >= 1");
  if (arch.channels == 0) throw ConfigError("autoencoder: channels must be >= 1");
  if (arch.channels >= arch.bands) {
    throw ConfigError("autoencoder: channels (" + std::to_string(arch.channels) + ") must be below bands (" +
                      std::to_string(arch.bands) + ")");
  }
}

std::vector<std::size_t> encoder_widths(const AEArch& arch) {
  const std::size_t u = unit(arch);
  return {16 * u, 16 * u, 8 * u, 8 * u, 4 * u, 2 * u, arch.channels};
}

std::vector<std::size_t> decoder_widths(const AEArch& arch) {
  const std::size_t u = unit(arch);
  return {2 * u, 4 * u, 8 * u, 8 * u, 16 * u, 16 * u, 16 * u};
}

template <typename T>
std::vector<Parameter<T>*> AEParams<T>::pointers() {
  auto out = encoder.pointers();
  auto d = decoder.pointers();
  out.insert(out.end(), d.begin(), d.end());
  return out;
}

template <typename T>
AEParams<T> init_ae(const AEArch& arch, std::uint64_t seed) {
  validate(arch);
  AEParams<T> p;
  p.arch = arch;
  Rng rng(seed);
  Rng er = rng.split(1), dr = rng.split(2);
  std::size_t in = arch.bands;
  for (std::size_t i = 0; i < kAeLayers; ++i) {
    const std::size_t out = encoder_widths(arch)[i];
    add_conv(p.encoder, enc_layer(i), out, in, 3, Init::he, er);
    in = out;
  }
  for (std::size_t i = 0; i < kAeLayers; ++i) {
    const std::size_t out = decoder_widths(arch)[i];
    add_conv(p.decoder, dec_layer(i), out, in, 3, Init::he, dr);
    in = out;
  }
  add_conv(p.decoder, dec_layer(kAeLayers), arch.bands, in, 3, Init::he, dr);
  return p;
}

template <typename T>
Var encode(Graph<T>& g, AEParams<T>& p, Var x) {
  const auto& xs = g.value(x).shape();
  if (xs.size() != 4 || xs[1] != p.arch.bands) {
    throw DimensionError("encode: expected " + std::to_string(p.arch.bands) + " bands, got input " + shape_str(xs));
  }
  Var h = x;
  for (std::size_t i = 0; i < kAeLayers; ++i) {
    h = conv(g, p.encoder, enc_layer(i), h, 1, 1);
    if (i + 1 < kAeLayers) h = g.relu(h);
  }
  return h;
}

template <typename T>
Var decode(Graph<T>& g, AEParams<T>& p, Var b) {
  const auto& bs = g.value(b).shape();
  if (bs.size() != 4 || bs[1] != p.arch.channels) {
    throw DimensionError("decode: expected " + std::to_string(p.arch.channels) + " latent channels, got " +
                         shape_str(bs));
  }
  Var h = b;
  for (std::size_t i = 0; i < kAeLayers; ++i) h = g.relu(conv(g, p.decoder, dec_layer(i), h, 1, 1));
  return g.sigmoid(conv(g, p.decoder, dec_layer(kAeLayers), h, 1, 1));
}

template <typename T>
Tensor<T> encode(AEParams<T>& p, const Tensor<T>& x) {
  Graph<T> g;
  return g.value(encode(g, p, g.constant(x)));
}

template <typename T>
Tensor<T> decode(AEParams<T>& p, const Tensor<T>& b) {
  Graph<T> g;
  return g.value(decode(g, p, g.constant(b)));
}

template <typename T>
double variance_reg(const Tensor<T>& batch) {
  if (batch.rank() == 0 || batch.dim(0) < 2) throw ConfigError("variance_reg: batch size must be >= 2");
  const std::size_t B = batch.dim(0), D = batch.size() / B;
  const auto v = batch.data();
  double total = 0;
  for (std::size_t j = 0; j < D; ++j) {
    const double x0 = static_cast<double>(v[j]);
    double mean = 0;
    for (std::size_t b = 1; b < B; ++b) mean += static_cast<double>(v[b * D + j]) - x0;
    mean /= static_cast<double>(B);
    double var = 0;
    for (std::size_t b = 0; b < B; ++b) {
      const double d = (static_cast<double>(v[b * D + j]) - x0) - mean;
      var += d * d;
    }
    var /= static_cast<double>(B);
    total += var * var;
  }
  return std::sqrt(total);
}

template <typename T>
AEObjective ae_objective(Graph<T>& g, AEParams<T>& p, Var x, double mu_ae) {
  if (mu_ae < 0) throw ConfigError("mu_ae must be >= 0");
  AEObjective o;
  const Var b = encode(g, p, x);
  const Var xr = decode(g, p, b);
  o.recon = g.batch_sse(xr, x);
  o.reg = g.variance_norm(b);
  o.total = mu_ae > 0 ? g.add(o.recon, g.scale(o.reg, static_cast<T>(mu_ae))) : o.recon;
  return o;
}

void validate(const AETrainConfig& cfg) {
  if (!(cfg.lr > 0)) throw ConfigError("ae.lr must be > 0");
  if (cfg.batch < 2) throw ConfigError("ae.batch must be >= 2 (the batch variance needs two samples)");
  if (!(cfg.mu_ae >= 0)) throw ConfigError("ae.mu_ae must be >= 0");
}

AETrainState init_ae_training(const AEArch& arch, std::uint64_t seed) {
  AETrainState s;
  s.params = init_ae<float>(arch, seed);
  return s;
}

std::pair<double, double> ae_reconstruction_quality(AEParams<float>& p, const Dataset& data, std::size_t limit) {
  const std::size_t n = limit ? std::min(limit, data.size()) : data.size();
  if (n == 0) return {std::nan(""), std::nan("")};
  double ps = 0, ss = 0;
  const std::size_t chunk = 16;
  for (std::size_t first = 0; first < n; first += chunk) {
    const std::size_t cnt = std::min(chunk, n - first);
    const std::span<const SpectralCube> part(data.cubes.data() + first, cnt);
    const auto recon = from_batch(decode(p, encode(p, to_batch<float>(part))));
    for (std::size_t i = 0; i < cnt; ++i) {
      ps += psnr_capped(psnr(part[i], recon[i]));
      ss += ssim(part[i], recon[i]);
    }
  }
  return {ps / static_cast<double>(n), ss / static_cast<double>(n)};
}

void train_ae(AETrainState& state, const Dataset& train, const Dataset& test, const AETrainConfig& cfg,
              const AEEpochHook& on_epoch) {
  validate(cfg);
  if (train.empty()) throw ConfigError("train_ae: training set is empty");
  if (train.dims().bands != state.params.arch.bands) {
    throw DimensionError("train_ae: data has " + std::to_string(train.dims().bands) + " bands, network expects " +
                         std::to_string(state.params.arch.bands));
  }
  const AdamConfig adam{cfg.lr, 0.9, 0.999, 1e-8};
  auto params = state.params.pointers();
  const Rng root(cfg.seed);
  for (std::size_t epoch = state.history.size(); epoch < cfg.epochs; ++epoch) {
    Rng rng = root.split(1000 + epoch);
    const auto batches = epoch_batches(train.size(), cfg.batch, rng);
    double recon_sum = 0, reg_sum = 0;
    for (const auto& idx : batches) {
      Graph<float> g;
      const Var x = g.constant(gather_batch<float>(train.cubes, idx));
      const auto obj = ae_objective(g, state.params, x, cfg.mu_ae);
      const double loss = g.value(obj.total)[0];
      require_finite_loss(loss, static_cast<int>(epoch), "autoencoder loss");
      zero_grads<float>(params);
      g.backward(obj.total);
      adam_step<float>(params, state.adam, adam);
      recon_sum += g.value(obj.recon)[0];
      reg_sum += g.value(obj.reg)[0];
    }
    AEEpochRecord rec;
    rec.epoch = epoch;
    rec.recon_loss = recon_sum / static_cast<double>(batches.size());
    rec.reg_value = reg_sum / static_cast<double>(batches.size());
    std::tie(rec.psnr, rec.ssim) = ae_reconstruction_quality(state.params, test, cfg.eval_limit);
    state.history.push_back(rec);
    if (on_epoch) on_epoch(state);
  }
}

AETrainState train_ae(const Dataset& train, const Dataset& test, const AEArch& arch, const AETrainConfig& cfg) {
  AETrainState s = init_ae_training(arch, cfg.seed);
  train_ae(s, train, test, cfg);
  return s;
}

Dataset encode_dataset(const Dataset& data, AEParams<float>& p, std::size_t chunk) {
  Dataset out;
  out.split = data.split;
  for (std::size_t first = 0; first < data.size(); first += chunk) {
    const std::size_t cnt = std::min(chunk, data.size() - first);
    const std::span<const SpectralCube> part(data.cubes.data() + first, cnt);
    const auto latents = from_batch(encode(p, to_batch<float>(part)));
    for (std::size_t i = 0; i < cnt; ++i) out.add(latents[i], data.provenance[first + i]);
  }
  return out;
}

std::vector<SpectralCube> decode_cubes(const std::vector<SpectralCube>& latents, AEParams<float>& p,
                                       std::size_t chunk) {
  std::vector<SpectralCube> out;
  out.reserve(latents.size());
  for (std::size_t first = 0; first < latents.size(); first += chunk) {
    const std::size_t cnt = std::min(chunk, latents.size() - first);
    const auto b = to_batch<float>(std::span<const SpectralCube>(latents.data() + first, cnt));
    require_channels(b, p.arch.channels, "decode_cubes");
    for (auto& c : from_batch(decode(p, b))) out.push_back(std::move(c));
  }
  return out;
}

Checkpoint ae_checkpoint(const AETrainState& state, bool with_optimizer) {
  Checkpoint ck;
  ck.magic = kAutoencoderMagic;
  ck.info_a = static_cast<std::uint32_t>(state.params.arch.channels);
  ck.info_b = static_cast<std::uint32_t>(state.params.arch.bands);
  for (auto& [n, t] : to_float_tensors(state.params.encoder)) ck.tensors.emplace_back("enc/" + n, std::move(t));
  for (auto& [n, t] : to_float_tensors(state.params.decoder)) ck.tensors.emplace_back("dec/" + n, std::move(t));
  ck.meta["layers"] = 2 * kAeLayers + 1;
  ck.meta["width_unit"] = state.params.arch.width_unit;
  auto& h = ck.meta["history"] = nlohmann::json::array();
  for (const auto& r : state.history) h.push_back({r.epoch, r.recon_loss, r.reg_value, r.psnr, r.ssim});
  if (with_optimizer) store_adam(ck, "ae", state.adam);
  return ck;
}

AETrainState ae_state_from_checkpoint(const Checkpoint& ck) {
  if (ck.magic != kAutoencoderMagic) throw FormatError("not an autoencoder checkpoint");
  AEArch arch{ck.info_b, ck.info_a, ck.meta.value("width_unit", std::size_t{0})};
  AETrainState s = init_ae_training(arch, 0);
  assign_from_float(s.params.encoder, network_tensors(ck, "enc"));
  assign_from_float(s.params.decoder, network_tensors(ck, "dec"));
  s.adam = restore_adam(ck, "ae");
  if (ck.meta.contains("history")) {
    for (const auto& r : ck.meta["history"]) {
      s.history.push_back({r[0].get<std::size_t>(), r[1].get<double>(), r[2].get<double>(),
                           r[3].is_number() ? r[3].get<double>() : std::nan(""),
                           r[4].is_number() ? r[4].get<double>() : std::nan("")});
    }
  }
  return s;
}

void save_ae(const std::string& path, const AETrainState& state) { save_checkpoint(path, ae_checkpoint(state)); }

AETrainState load_ae(const std::string& path) {
  return ae_state_from_checkpoint(load_checkpoint(path, kAutoencoderMagic));
}

void write_ae_history(const std::string& path, const std::vector<AEEpochRecord>& history) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write " + path);
  f.precision(10);
  f << "epoch,recon_loss,reg_value,psnr,ssim\n";
  for (const auto& r : history) {
    f << r.epoch << ',' << r.recon_loss << ',' << r.reg_value << ',' << r.psnr << ',' << r.ssim << '\n';
  }
}

#define LDGAN_AE_INSTANTIATE(T)                                      \
  template struct AEParams<T>;                                       \
  template AEParams<T> init_ae(const AEArch&, std::uint64_t);        \
  template Var encode(Graph<T>&, AEParams<T>&, Var);                 \
  template Var decode(Graph<T>&, AEParams<T>&, Var);                 \
  template Tensor<T> encode(AEParams<T>&, const Tensor<T>&);         \
  template Tensor<T> decode(AEParams<T>&, const Tensor<T>&);         \
  template double variance_reg(const Tensor<T>&);                    \
  template AEObjective ae_objective(Graph<T>&, AEParams<T>&, Var, double);

LDGAN_AE_INSTANTIATE(float)
LDGAN_AE_INSTANTIATE(double)

}  // namespace ldgan
