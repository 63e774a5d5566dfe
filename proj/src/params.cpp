#include "ldgan/params.hpp"

#include <cmath>

namespace ldgan {

template <typename T>
ParamSet<T>::ParamSet(const ParamSet& other) {
  *this = other;
}

template <typename T>
ParamSet<T>& ParamSet<T>::operator=(const ParamSet& other) {
  if (this == &other) return *this;
  params_.clear();
  bns_.clear();
  for (const auto& p : other.params_) params_.push_back(std::make_unique<Parameter<T>>(*p));
  for (const auto& [name, bn] : other.bns_) bns_.emplace_back(name, std::make_unique<BatchNormState<T>>(*bn));
  return *this;
}

template <typename T>
Parameter<T>& ParamSet<T>::add(std::string name, Tensor<T> value) {
  params_.push_back(std::make_unique<Parameter<T>>(std::move(name), std::move(value)));
  return *params_.back();
}

template <typename T>
BatchNormState<T>& ParamSet<T>::add_batch_norm(std::string name, std::size_t channels) {
  bns_.emplace_back(std::move(name), std::make_unique<BatchNormState<T>>(channels));
  return *bns_.back().second;
}

template <typename T>
bool ParamSet<T>::has(const std::string& name) const {
  for (const auto& p : params_)
    if (p->name == name) return true;
  return false;
}

template <typename T>
Parameter<T>& ParamSet<T>::param(const std::string& name) {
  for (auto& p : params_)
    if (p->name == name) return *p;
  throw ConfigError("unknown parameter '" + name + "'");
}

template <typename T>
const Parameter<T>& ParamSet<T>::param(const std::string& name) const {
  for (const auto& p : params_)
    if (p->name == name) return *p;
  throw ConfigError("unknown parameter '" + name + "'");
}

template <typename T>
BatchNormState<T>& ParamSet<T>::batch_norm(const std::string& name) {
  for (auto& [n, bn] : bns_)
    if (n == name) return *bn;
  throw ConfigError("unknown batch-norm layer '" + name + "'");
}

template <typename T>
std::vector<Parameter<T>*> ParamSet<T>::pointers() {
  std::vector<Parameter<T>*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

template <typename T>
std::size_t ParamSet<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> ParamSet<T>::named_tensors() const {
  std::vector<std::pair<std::string, Tensor<T>>> out;
  for (const auto& p : params_) out.emplace_back(p->name, p->value);
  for (const auto& [name, bn] : bns_) {
    out.emplace_back(name + ".running_mean", bn->running_mean);
    out.emplace_back(name + ".running_var", bn->running_var);
  }
  return out;
}

template <typename T>
void ParamSet<T>::assign_named(const std::vector<std::pair<std::string, Tensor<T>>>& tensors) {
  const auto expected = named_tensors();
  if (expected.size() != tensors.size()) {
    throw FormatError("checkpoint holds " + std::to_string(tensors.size()) + " tensors, network expects " +
                      std::to_string(expected.size()));
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (expected[i].first != tensors[i].first || expected[i].second.shape() != tensors[i].second.shape()) {
      throw FormatError("checkpoint tensor '" + tensors[i].first + "' " + shape_str(tensors[i].second.shape()) +
                        " does not match '" + expected[i].first + "' " + shape_str(expected[i].second.shape()));
    }
  }
  std::size_t i = 0;
  for (auto& p : params_) {
    p->value = tensors[i++].second;
    p->grad = Tensor<T>(p->value.shape());
  }
  for (auto& [name, bn] : bns_) {
    bn->running_mean = tensors[i++].second;
    bn->running_var = tensors[i++].second;
  }
}

template <typename T>
Tensor<T> gaussian_tensor(Shape shape, double stddev, Rng& rng, double mean) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.storage()) v = static_cast<T>(rng.normal(mean, stddev));
  return t;
}

template <typename T>
Tensor<T> he_conv_kernel(std::size_t out_ch, std::size_t in_ch, std::size_t kh, std::size_t kw, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(in_ch * kh * kw));
  return gaussian_tensor<T>({out_ch, in_ch, kh, kw}, stddev, rng);
}

template class ParamSet<float>;
template class ParamSet<double>;
template Tensor<float> gaussian_tensor(Shape, double, Rng&, double);
template Tensor<double> gaussian_tensor(Shape, double, Rng&, double);
template Tensor<float> he_conv_kernel(std::size_t, std::size_t, std::size_t, std::size_t, Rng&);
template Tensor<double> he_conv_kernel(std::size_t, std::size_t, std::size_t, std::size_t, Rng&);

}  // namespace ldgan
