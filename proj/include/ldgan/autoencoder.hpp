#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ldgan/checkpoint.hpp"
#include "ldgan/dataio.hpp"
#include "ldgan/nn.hpp"

namespace ldgan {

/// Spectral-only convolutional autoencoder: 3x3 stride-1 convs, so latents keep the spatial size.
struct AEArch {
  std::size_t bands = 8;
  std::size_t channels = 3;
  /// Width multiplier base. 0 means c, giving the 16c..c ladder.
  std::size_t width_unit = 0;
};

void validate(const AEArch& arch);
/// Output widths of the 7 encoder convs; the last equals c.
std::vector<std::size_t> encoder_widths(const AEArch& arch);
/// Output widths of the 7 decoder convs before the final projection to L.
std::vector<std::size_t> decoder_widths(const AEArch& arch);

template <typename T>
struct AEParams {
  AEArch arch;
  ParamSet<T> encoder;
  ParamSet<T> decoder;

  std::vector<Parameter<T>*> pointers();
};

template <typename T>
AEParams<T> init_ae(const AEArch& arch, std::uint64_t seed);

template <typename T>
Var encode(Graph<T>& g, AEParams<T>& p, Var x);
template <typename T>
Var decode(Graph<T>& g, AEParams<T>& p, Var b);

/// (B, L, M, N) -> (B, c, M, N).
template <typename T>
Tensor<T> encode(AEParams<T>& p, const Tensor<T>& x);
/// (B, c, M, N) -> (B, L, M, N), values in [0, 1].
template <typename T>
Tensor<T> decode(AEParams<T>& p, const Tensor<T>& b);

/// Euclidean norm of the per-coordinate population variance across the batch axis.
template <typename T>
double variance_reg(const Tensor<T>& batch);

struct AEObjective {
  Var total;
  Var recon;
  Var reg;
};

/// Batch-mean squared reconstruction error plus mu_ae times the latent variance norm.
template <typename T>
AEObjective ae_objective(Graph<T>& g, AEParams<T>& p, Var x, double mu_ae);

struct AETrainConfig {
  double lr = 1e-3;
  std::size_t epochs = 20;
  std::size_t batch = 8;
  double mu_ae = 0.0;
  std::uint64_t seed = 0;
  /// Test cubes evaluated per epoch (0 = all).
  std::size_t eval_limit = 16;
};

void validate(const AETrainConfig& cfg);

struct AEEpochRecord {
  std::size_t epoch = 0;
  double recon_loss = 0.0;
  double reg_value = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct AETrainState {
  AEParams<float> params;
  AdamState<float> adam;
  std::vector<AEEpochRecord> history;
};

AETrainState init_ae_training(const AEArch& arch, std::uint64_t seed);

using AEEpochHook = std::function<void(const AETrainState&)>;

/// Runs the remaining epochs (cfg.epochs - history.size()). `test` may be empty.
void train_ae(AETrainState& state, const Dataset& train, const Dataset& test, const AETrainConfig& cfg,
              const AEEpochHook& on_epoch = {});
AETrainState train_ae(const Dataset& train, const Dataset& test, const AEArch& arch, const AETrainConfig& cfg);

/// Mean PSNR (capped) and SSIM of decode(encode(x)) over the first `limit` cubes (0 = all).
std::pair<double, double> ae_reconstruction_quality(AEParams<float>& p, const Dataset& data, std::size_t limit = 0);

/// One latent cube (bands = c) per input cube, order and provenance preserved.
Dataset encode_dataset(const Dataset& data, AEParams<float>& p, std::size_t chunk = 16);
std::vector<SpectralCube> decode_cubes(const std::vector<SpectralCube>& latents, AEParams<float>& p,
                                       std::size_t chunk = 16);

Checkpoint ae_checkpoint(const AETrainState& state, bool with_optimizer = true);
AETrainState ae_state_from_checkpoint(const Checkpoint& ckpt);
void save_ae(const std::string& path, const AETrainState& state);
AETrainState load_ae(const std::string& path);

void write_ae_history(const std::string& path, const std::vector<AEEpochRecord>& history);

}  // namespace ldgan
