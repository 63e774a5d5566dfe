#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ldgan/graph.hpp"

namespace ldgan {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// DCGAN convention for both adversarial networks.
inline AdamConfig gan_adam(double lr = 2e-4) { return AdamConfig{lr, 0.5, 0.999, 1e-8}; }

template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update using each parameter's accumulated grad.
template <typename T>
void adam_step(std::span<Parameter<T>* const> params, AdamState<T>& state, const AdamConfig& cfg);

struct GradCheckOptions {
  double eps = 1e-5;
  /// 0 checks every coordinate; otherwise a seeded random subset per parameter tensor.
  std::size_t max_coords_per_param = 0;
  std::uint64_t seed = 0;
  /// Skip coordinates whose +-eps evaluations change the relu sign pattern: the loss has a
  /// kink inside the stencil there, so central differences do not estimate the gradient.
  bool skip_kink_crossings = true;
  /// Ridders extrapolation: central differences at eps, eps / 1.4, ... extrapolated to zero
  /// step, stopping when the error estimate grows. Handles large losses with tiny gradient
  /// coordinates (round-off) and strongly curved coordinates (truncation) alike.
  bool ridders = false;
  /// Smallest step tried. Plain central differences retry a kink-crossing stencil at eps / 10
  /// down to this size; 0 means no retries.
  double min_eps = 0.0;
  /// Absolute differences at or below this count as zero error. Set it near the round-off floor
  /// |loss| * machine epsilon / step for coordinates far smaller than the loss.
  double abs_tol = 0.0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::size_t coords_skipped = 0;
  std::string worst;  // "<param>[index]"
};

/// Builds a scalar loss on a fresh graph.
using LossBuilder = std::function<Var(Graph<double>&)>;

/// Compares backward() against central differences.
/// Error per coordinate: |analytic - cd| / max(|analytic|, |cd|, 1e-8).
GradCheckResult finite_diff_check(const LossBuilder& build, std::span<Parameter<double>* const> params,
                                  const GradCheckOptions& opts = {});

}  // namespace ldgan
