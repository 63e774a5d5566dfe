#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ldgan/autoencoder.hpp"
#include "ldgan/checkpoint.hpp"
#include "ldgan/nn.hpp"

namespace ldgan {

inline constexpr std::size_t kNoiseDim = 100;

/// latent: LD-GAN on encoder outputs (linear head). full: S-GAN on spectral cubes (sigmoid head).
enum class GanTarget { latent, full };
std::string to_string(GanTarget t);
GanTarget gan_target_from_string(const std::string& s);

struct GanArch {
  std::size_t out_channels = 3;
  std::size_t height = 16;
  std::size_t width = 16;
  /// Generator ladder 8w -> 4w -> 2w -> w -> C_out; discriminator w -> 2w -> 4w -> 8w.
  std::size_t base_width = 32;
  GanTarget target = GanTarget::latent;
};

void validate(const GanArch& arch);
/// Stride-2 discriminator blocks: 4, or fewer when the input is smaller than 16 pixels.
std::size_t discriminator_blocks(const GanArch& arch);

template <typename T>
struct GanParams {
  GanArch arch;
  ParamSet<T> generator;
  ParamSet<T> discriminator;
};

template <typename T>
GanParams<T> init_gan(const GanArch& arch, std::uint64_t seed);

/// z is (B, 100, 1, 1); output (B, C_out, M, N).
template <typename T>
Var generate(Graph<T>& g, GanParams<T>& p, Var z, Mode mode);
/// (B, C_out, M, N) -> (B, 1, 1, 1) probabilities.
template <typename T>
Var discriminate(Graph<T>& g, GanParams<T>& p, Var x, Mode mode);

/// Standard-normal noise batch (n, 100, 1, 1).
template <typename T>
Tensor<T> noise_batch(std::size_t n, Rng& rng);

/// Frozen-generator sampling in eval mode.
template <typename T>
Tensor<T> generate(GanParams<T>& p, const Tensor<T>& z);

struct GanLosses {
  double value_v = 0.0;
  double loss_d = 0.0;
  double loss_g = 0.0;
};

/// value_V = mean log d_real + mean log(1 - d_fake); loss_D = -value_V; loss_G = -mean log d_fake.
/// Probabilities are clamped to [kBceClamp, 1 - kBceClamp].
GanLosses gan_losses(std::span<const double> d_real, std::span<const double> d_fake);

/// Variance norm of a generated batch; the generator objective subtracts mu_gan times this.
template <typename T>
double generated_variance_reg(const Tensor<T>& fake_batch);

/// Non-saturating generator objective: bce(D(G(z)), 1) - mu_gan * variance_norm(G(z)).
template <typename T>
Var generator_objective(Graph<T>& g, GanParams<T>& p, Var z, double mu_gan, Mode mode = Mode::train);
/// bce(D(real), 1) + bce(D(fake), 0).
template <typename T>
Var discriminator_objective(Graph<T>& g, GanParams<T>& p, Var real, Var fake, Mode mode = Mode::train);

struct GanTrainConfig {
  std::size_t epochs = 50;
  double lr = 2e-4;
  std::size_t batch = 16;
  double mu_gan = 0.0;
  std::uint64_t seed = 0;
  GanTarget target = GanTarget::latent;
  std::size_t base_width = 32;
  /// Samples behind the per-epoch variance (mode-collapse) readout.
  std::size_t eval_samples = 64;
};

void validate(const GanTrainConfig& cfg);

struct GanEpochRecord {
  std::size_t epoch = 0;
  double loss_d = 0.0;
  double loss_g = 0.0;
  double value_v = 0.0;
  double reg_value = 0.0;
};

struct GanTrainState {
  GanParams<float> params;
  AdamState<float> adam_g;
  AdamState<float> adam_d;
  std::vector<GanEpochRecord> history;
};

GanTrainState init_gan_training(const GanArch& arch, std::uint64_t seed);

using GanEpochHook = std::function<void(const GanTrainState&)>;

/// Runs the remaining epochs on `data` (latent cubes for LD-GAN, spectral cubes for S-GAN).
void train_gan(GanTrainState& state, const Dataset& data, const GanTrainConfig& cfg, const GanEpochHook& on_epoch = {});
GanTrainState train_gan(const Dataset& data, const GanTrainConfig& cfg);

/// n generator outputs as cubes (bands = C_out); z drawn from `seed` in sample order.
std::vector<SpectralCube> generate_cubes(GanParams<float>& p, std::size_t n, std::uint64_t seed,
                                         std::size_t chunk = 32);

/// LD-GAN samples decoded to spectral cubes in [0, 1].
std::vector<SpectralCube> sample_spectral(std::size_t n, GanParams<float>& gan, AEParams<float>& dec,
                                          std::uint64_t seed);
/// Spectral samples from either kind: decoded for LD-GAN, direct for S-GAN (`dec` ignored).
std::vector<SpectralCube> sample_cubes(std::size_t n, GanParams<float>& gan, AEParams<float>* dec,
                                       std::uint64_t seed);

Checkpoint gan_checkpoint(const GanTrainState& state, bool with_optimizer = true);
GanTrainState gan_state_from_checkpoint(const Checkpoint& ckpt);
void save_gan(const std::string& path, const GanTrainState& state);
GanTrainState load_gan(const std::string& path);

void write_gan_history(const std::string& path, const std::vector<GanEpochRecord>& history);

}  // namespace ldgan
