#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ldgan/graph.hpp"
#include "ldgan/rng.hpp"

namespace ldgan {

/// Ordered, named parameters and batch-norm states of one network.
/// Addresses are stable, so Parameter pointers stay valid while the set lives.
template <typename T>
class ParamSet {
 public:
  ParamSet() = default;
  ParamSet(const ParamSet& other);
  ParamSet& operator=(const ParamSet& other);
  ParamSet(ParamSet&&) noexcept = default;
  ParamSet& operator=(ParamSet&&) noexcept = default;

  Parameter<T>& add(std::string name, Tensor<T> value);
  BatchNormState<T>& add_batch_norm(std::string name, std::size_t channels);

  bool has(const std::string& name) const;
  Parameter<T>& param(const std::string& name);
  const Parameter<T>& param(const std::string& name) const;
  BatchNormState<T>& batch_norm(const std::string& name);

  std::vector<Parameter<T>*> pointers();
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  /// Parameters then running statistics ("<bn>.running_mean", "<bn>.running_var").
  std::vector<std::pair<std::string, Tensor<T>>> named_tensors() const;
  /// Inverse of named_tensors(); names and shapes must match exactly.
  void assign_named(const std::vector<std::pair<std::string, Tensor<T>>>& tensors);

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
  std::vector<std::pair<std::string, std::unique_ptr<BatchNormState<T>>>> bns_;
};

template <typename T>
Tensor<T> gaussian_tensor(Shape shape, double stddev, Rng& rng, double mean = 0.0);

/// He-normal init for a conv kernel (fan-in = in_channels * kh * kw).
template <typename T>
Tensor<T> he_conv_kernel(std::size_t out_ch, std::size_t in_ch, std::size_t kh, std::size_t kw, Rng& rng);

}  // namespace ldgan
