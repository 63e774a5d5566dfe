#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ldgan/autoencoder.hpp"
#include "ldgan/dataio.hpp"
#include "ldgan/gan.hpp"
#include "ldgan/recovery.hpp"

namespace ldgan {

struct SynthSection {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t bands = 8;
  std::size_t train_count = 400;
  std::size_t test_count = 40;
  std::size_t materials = 4;
  double smoothness = 4.0;
};

struct AESection {
  std::size_t channels = 3;
  std::size_t width_unit = 0;
  double lr = 1e-3;
  std::size_t epochs = 20;
  std::size_t batch = 8;
  double mu_ae = 0.0;
  std::size_t eval_limit = 16;
};

struct GanSection {
  GanTarget target = GanTarget::latent;
  std::size_t epochs = 50;
  double lr = 2e-4;
  std::size_t batch = 16;
  double mu_gan = 0.0;
  std::size_t base_width = 32;
  std::size_t eval_samples = 64;
  /// Cubes written by the sample stage; the augmentation pool and the PCA input.
  std::size_t samples = 512;
};

struct TaskSection {
  RecoveryTask task = RecoveryTask::csi;
  std::size_t epochs = 100;
  double lr = 1e-3;
  /// Exponential learning-rate decay, applied to the RGB task only.
  bool rgb_lr_decay = true;
  double decay_rate = 0.97;
  std::size_t batch = 8;
  AugmentSource source = AugmentSource::none;
  double fraction = 0.0;
  /// Adds one geometric copy of every training cube on top of `source`.
  bool geometric = false;
  /// Unset means noiseless measurements.
  std::optional<double> snr_db;
  std::size_t eval_limit = 0;
  std::size_t base_width = 32;
  std::size_t stages = 5;
  double initial_step = 0.5;
  double transmittance = 0.5;
  std::size_t spatial_factor = 2;
  std::size_t spectral_factor = 4;
};

struct AnalysisSection {
  std::size_t vca_q = 4;
  std::size_t pca_k = 3;
  /// Cubes whose pixels feed VCA, per dataset.
  std::size_t pixel_cubes = 100;
};

struct ExperimentSection {
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<double> fractions{0.2, 0.5, 1.0};
  std::vector<double> mu_grid{0.0, 1e-5, 1e-3};
  std::vector<std::size_t> channels{1, 2, 3, 4};
  std::vector<RecoveryTask> tasks{RecoveryTask::csi, RecoveryTask::rgb, RecoveryTask::sisr};
  /// mu_gan of the regularized arm of the pca suite.
  double pca_mu_gan = 1e-3;
};

/// Every field has a default; the JSON form mirrors this tree.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string out = "runs/default";
  bool deterministic = true;
  SynthSection synth;
  AESection ae;
  GanSection gan;
  TaskSection task;
  AnalysisSection analysis;
  ExperimentSection experiment;
};

/// Unknown keys and ill-typed values raise ConfigError naming the key path.
RunConfig config_from_json(const std::string& text);
RunConfig load_config(const std::string& path);
/// Complete serialization, every field present.
std::string config_to_json(const RunConfig& cfg);
/// Range checks across sections; messages name the offending key.
void validate(const RunConfig& cfg);

/// Stage seeds derived from the global seed, one independent stream per stage name.
std::uint64_t stage_seed(const RunConfig& cfg, const std::string& stage);

SynthConfig synth_config(const RunConfig& cfg, Split split);
AEArch ae_arch(const RunConfig& cfg);
AETrainConfig ae_train_config(const RunConfig& cfg);
GanTrainConfig gan_train_config(const RunConfig& cfg, GanTarget target);
TaskSetup task_setup(const RunConfig& cfg, RecoveryTask task);
RecoveryArch recovery_arch(const RunConfig& cfg);
TaskTrainConfig task_train_config(const RunConfig& cfg, RecoveryTask task, AugmentSource source, double fraction);

}  // namespace ldgan
