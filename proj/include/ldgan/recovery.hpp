#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "ldgan/checkpoint.hpp"
#include "ldgan/dataio.hpp"
#include "ldgan/nn.hpp"
#include "ldgan/operators.hpp"

namespace ldgan {

enum class RecoveryTask { csi, rgb, sisr };
std::string to_string(RecoveryTask t);
RecoveryTask recovery_task_from_string(const std::string& s);
/// csi <-> cassi, rgb <-> rgb, sisr <-> decimation.
OperatorKind operator_kind(RecoveryTask t);

struct TaskOperatorConfig {
  double transmittance = 0.5;
  std::uint64_t aperture_seed = 0;
  std::size_t spatial_factor = 2;
  std::size_t spectral_factor = 4;
};

/// The degradation a recovery network inverts.
struct TaskSetup {
  RecoveryTask task = RecoveryTask::csi;
  CubeDims dims;
  TaskOperatorConfig op_config;
  std::shared_ptr<const ForwardOperator> op;
};

TaskSetup make_task(RecoveryTask task, CubeDims dims, const TaskOperatorConfig& cfg = {});

struct RecoveryArch {
  /// UNET ladder w -> 2w -> 4w -> 8w; unrolled-CSI prior width w.
  std::size_t base_width = 32;
  std::size_t stages = 5;
  double initial_step = 0.5;
};

/// unrolled-csi for the CSI task, a 4-level UNET otherwise.
template <typename T>
struct RecoveryNet {
  TaskSetup setup;
  RecoveryArch arch;
  ParamSet<T> params;
  /// Largest eigenvalue of A^T A; unrolled step sizes are alpha_k / lipschitz.
  double lipschitz = 1.0;

  bool unrolled() const { return setup.task == RecoveryTask::csi; }
};

template <typename T>
RecoveryNet<T> init_recovery(const TaskSetup& setup, const RecoveryArch& arch, std::uint64_t seed);

/// Network inputs for a batch of measurements.
/// `start`: the (B, C, M, N) tensor the network consumes (adjoint estimate for CSI,
/// RGB image, or nearest-neighbour upsampled decimated cube). `y`: raw measurements (CSI only).
template <typename T>
struct RecoveryInput {
  Tensor<T> start;
  Tensor<T> y;
};

template <typename T>
RecoveryInput<T> prepare_input(const RecoveryNet<T>& net, std::span<const Measurement> ys);
/// Simulates noiseless (or noisy, for finite snr_db) measurements of `cubes` and prepares them.
template <typename T>
RecoveryInput<T> simulate_input(const RecoveryNet<T>& net, std::span<const SpectralCube> cubes,
                                double snr_db = std::numeric_limits<double>::infinity(), std::uint64_t noise_seed = 0);

/// x - (alpha_k / L) A^T (A x - y), then the residual conv prior of stage k.
template <typename T>
Var unrolled_csi_stage(Graph<T>& g, RecoveryNet<T>& net, std::size_t stage, Var x, Var y);
/// Unclamped network output (B, L, M, N).
template <typename T>
Var recovery_forward(Graph<T>& g, RecoveryNet<T>& net, const RecoveryInput<T>& in);
/// Batch-mean squared error norm between the network output and the ground truth.
template <typename T>
Var recovery_objective(Graph<T>& g, RecoveryNet<T>& net, const RecoveryInput<T>& in, const Tensor<T>& truth);

/// Network estimate clamped to [0, 1].
SpectralCube recover(const Measurement& y, RecoveryNet<float>& net);
std::vector<SpectralCube> recover_batch(std::span<const Measurement> ys, RecoveryNet<float>& net,
                                        std::size_t chunk = 16);

/// Zero-training reference: A^T y normalized by A^T A 1, clamped to [0, 1].
SpectralCube adjoint_baseline(const Measurement& y, const ForwardOperator& op);

enum class AugmentSource { none, geometric, s_gan, ld_gan };
std::string to_string(AugmentSource s);
AugmentSource augment_source_from_string(const std::string& s);
Provenance provenance_of(AugmentSource s);

struct TaskTrainConfig {
  std::size_t epochs = 100;
  double lr = 1e-3;
  /// Multiply the learning rate by decay_rate after every epoch.
  bool lr_decay = false;
  double decay_rate = 0.97;
  std::size_t batch = 8;
  std::uint64_t seed = 0;
  AugmentSource source = AugmentSource::none;
  double fraction = 0.0;
  double snr_db = std::numeric_limits<double>::infinity();
  /// Test cubes evaluated per epoch (0 = all).
  std::size_t eval_limit = 0;
};

void validate(const TaskTrainConfig& cfg);

struct TaskEpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct TaskReport {
  RecoveryTask task = RecoveryTask::csi;
  AugmentSource source = AugmentSource::none;
  double fraction = 0.0;
  std::uint64_t seed = 0;
  double best_psnr = -std::numeric_limits<double>::infinity();
  double best_ssim = 0.0;
  std::size_t epoch_of_best = 0;
  /// Mean test PSNR of the adjoint baseline.
  double baseline_psnr = 0.0;
  std::vector<TaskEpochRecord> history;
};

struct TaskTrainState {
  RecoveryNet<float> net;
  AdamState<float> adam;
  TaskReport report;
};

using TaskEpochHook = std::function<void(const TaskTrainState&)>;

TaskTrainState init_task_training(const TaskSetup& setup, const RecoveryArch& arch, const TaskTrainConfig& cfg);
/// Trains on `train` (already augmented) for the remaining epochs, tracking the best test epoch.
void train_task(TaskTrainState& state, const Dataset& train, const Dataset& test, const TaskTrainConfig& cfg,
                const TaskEpochHook& on_epoch = {});
TaskTrainState train_task(const Dataset& train, const Dataset& test, const TaskSetup& setup, const RecoveryArch& arch,
                          const TaskTrainConfig& cfg);

/// Mean capped PSNR and SSIM of the network on the first `limit` test cubes (0 = all).
std::pair<double, double> evaluate_recovery(RecoveryNet<float>& net, const Dataset& test, std::size_t limit = 0);
double adjoint_baseline_psnr(const TaskSetup& setup, const Dataset& test, std::size_t limit = 0);

Checkpoint recovery_checkpoint(const TaskTrainState& state, bool with_optimizer = true);
TaskTrainState recovery_state_from_checkpoint(const Checkpoint& ckpt);
void save_recovery(const std::string& path, const TaskTrainState& state);
TaskTrainState load_recovery(const std::string& path);

std::string task_report_header();
std::string task_report_row(const TaskReport& r);
void write_task_history(const std::string& path, const std::vector<TaskEpochRecord>& history);

}  // namespace ldgan
