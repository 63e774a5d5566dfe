#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ldgan/checkpoint.hpp"
#include "ldgan/dataio.hpp"
#include "ldgan/optim.hpp"
#include "ldgan/params.hpp"

namespace ldgan {

enum class Init { he, dcgan };

// Layer parameters are stored under "<layer>.w", "<layer>.b", "<layer>.gamma", "<layer>.beta";
// batch-norm running statistics under "<layer>".
template <typename T>
void add_conv(ParamSet<T>& set, const std::string& layer, std::size_t out_ch, std::size_t in_ch, std::size_t k,
              Init init, Rng& rng, bool bias = true);
template <typename T>
void add_conv_transpose(ParamSet<T>& set, const std::string& layer, std::size_t in_ch, std::size_t out_ch,
                        std::size_t k, Init init, Rng& rng, bool bias = true);
/// gamma starts at 1 (N(1, 0.02) for dcgan), beta at 0.
template <typename T>
void add_batch_norm(ParamSet<T>& set, const std::string& layer, std::size_t channels, Init init, Rng& rng);

template <typename T>
Var conv(Graph<T>& g, ParamSet<T>& set, const std::string& layer, Var x, std::size_t stride, std::size_t pad);
template <typename T>
Var conv_transpose(Graph<T>& g, ParamSet<T>& set, const std::string& layer, Var x, std::size_t stride,
                   std::size_t pad);
template <typename T>
Var batch_norm(Graph<T>& g, ParamSet<T>& set, const std::string& layer, Var x, Mode mode);

/// Index batches for one epoch: ceil(K / B) batches of exactly B indices drawn from
/// back-to-back shuffles of [0, K), so small datasets still fill every batch.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t count, std::size_t batch, Rng& rng);

template <typename T>
Tensor<T> gather_batch(std::span<const SpectralCube> cubes, std::span<const std::size_t> indices);

/// Throws TrainingError when a loss is not finite.
void require_finite_loss(double value, int epoch, const std::string& what);

/// Adam moments appended as "<prefix>.m.<i>" / "<prefix>.v.<i>" plus the step in meta.
void store_adam(Checkpoint& ckpt, const std::string& prefix, const AdamState<float>& state);
/// Returns an empty state when the checkpoint has no moments for `prefix`.
AdamState<float> restore_adam(const Checkpoint& ckpt, const std::string& prefix);
/// Checkpoint tensors that are not optimizer moments.
std::vector<std::pair<std::string, Tensor<float>>> network_tensors(const Checkpoint& ckpt, const std::string& net);

}  // namespace ldgan
