#include "ldgan/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ldgan {

namespace {

template <typename T>
Tensor<T> init_kernel(Shape shape, std::size_t fan_in, Init init, Rng& rng) {
  const double stddev = init == Init::he ? std::sqrt(2.0 / static_cast<double>(fan_in)) : 0.02;
  return gaussian_tensor<T>(std::move(shape), stddev, rng);
}

}  // namespace

template <typename T>
void add_conv(ParamSet<T>& set, const std::string& layer, std::size_t out_ch, std::size_t in_ch, std::size_t k,
              Init init, Rng& rng, bool bias) {
  set.add(layer + ".w", init_kernel<T>({out_ch, in_ch, k, k}, in_ch * k * k, init, rng));
  if (bias) set.add(layer + ".b", Tensor<T>({out_ch}, T{0}));
}

template <typename T>
void add_conv_transpose(ParamSet<T>& set, const std::string& layer, std::size_t in_ch, std::size_t out_ch,
                        std::size_t k, Init init, Rng& rng, bool bias) {
  // Each output pixel of a transposed conv sums about in_ch * k * k / stride^2 taps; in_ch * k * k is
  // the conservative fan-in.
  set.add(layer + ".w", init_kernel<T>({in_ch, out_ch, k, k}, in_ch * k * k, init, rng));
  if (bias) set.add(layer + ".b", Tensor<T>({out_ch}, T{0}));
}

template <typename T>
void add_batch_norm(ParamSet<T>& set, const std::string& layer, std::size_t channels, Init init, Rng& rng) {
  if (init == Init::dcgan) {
    set.add(layer + ".gamma", gaussian_tensor<T>({channels}, 0.02, rng, 1.0));
  } else {
    set.add(layer + ".gamma", Tensor<T>({channels}, T{1}));
  }
  set.add(layer + ".beta", Tensor<T>({channels}, T{0}));
  set.add_batch_norm(layer, channels);
}

template <typename T>
Var conv(Graph<T>& g, ParamSet<T>& set, const std::string& layer, Var x, std::size_t stride, std::size_t pad) {
  Var y = g.conv2d(x, g.param(set.param(layer + ".w")), stride, pad);
  if (set.has(layer + ".b")) y = g.bias_add(y, g.param(set.param(layer + ".b")));
  return y;
}

template <typename T>
Var conv_transpose(Graph<T>& g, ParamSet<T>& set, const std::string& layer, Var x, std::size_t stride,
                   std::size_t pad) {
  Var y = g.conv_transpose2d(x, g.param(set.param(layer + ".w")), stride, pad);
  if (set.has(layer + ".b")) y = g.bias_add(y, g.param(set.param(layer + ".b")));
  return y;
}

template <typename T>
Var batch_norm(Graph<T>& g, ParamSet<T>& set, const std::string& layer, Var x, Mode mode) {
  return g.batch_norm2d(x, g.param(set.param(layer + ".gamma")), g.param(set.param(layer + ".beta")),
                        set.batch_norm(layer), mode);
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t count, std::size_t batch, Rng& rng) {
  if (count == 0 || batch == 0) return {};
  const std::size_t n_batches = (count + batch - 1) / batch;
  std::vector<std::size_t> stream;
  stream.reserve(n_batches * batch);
  std::vector<std::size_t> perm(count);
  while (stream.size() < n_batches * batch) {
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    stream.insert(stream.end(), perm.begin(), perm.end());
  }
  std::vector<std::vector<std::size_t>> out(n_batches);
  for (std::size_t b = 0; b < n_batches; ++b) out[b].assign(stream.begin() + b * batch, stream.begin() + (b + 1) * batch);
  return out;
}

template <typename T>
Tensor<T> gather_batch(std::span<const SpectralCube> cubes, std::span<const std::size_t> indices) {
  std::vector<SpectralCube> picked;
  picked.reserve(indices.size());
  for (auto i : indices) picked.push_back(cubes[i]);
  return to_batch<T>(std::span<const SpectralCube>(picked));
}

void require_finite_loss(double value, int epoch, const std::string& what) {
  if (!std::isfinite(value)) {
    throw TrainingError(what + " became non-finite in epoch " + std::to_string(epoch), epoch);
  }
}

void store_adam(Checkpoint& ckpt, const std::string& prefix, const AdamState<float>& state) {
  for (std::size_t i = 0; i < state.m.size(); ++i) {
    ckpt.tensors.emplace_back("adam." + prefix + ".m." + std::to_string(i), state.m[i]);
    ckpt.tensors.emplace_back("adam." + prefix + ".v." + std::to_string(i), state.v[i]);
  }
  ckpt.meta["adam_step"][prefix] = state.step;
}

AdamState<float> restore_adam(const Checkpoint& ckpt, const std::string& prefix) {
  AdamState<float> st;
  const std::string m_key = "adam." + prefix + ".m.";
  const std::string v_key = "adam." + prefix + ".v.";
  for (const auto& [name, t] : ckpt.tensors) {
    if (name.rfind(m_key, 0) == 0) st.m.push_back(t);
    if (name.rfind(v_key, 0) == 0) st.v.push_back(t);
  }
  if (ckpt.meta.contains("adam_step") && ckpt.meta["adam_step"].contains(prefix)) {
    st.step = ckpt.meta["adam_step"][prefix].get<std::uint64_t>();
  }
  if (st.m.size() != st.v.size()) throw FormatError("checkpoint has unpaired Adam moments for '" + prefix + "'");
  return st;
}

std::vector<std::pair<std::string, Tensor<float>>> network_tensors(const Checkpoint& ckpt, const std::string& net) {
  std::vector<std::pair<std::string, Tensor<float>>> out;
  const std::string key = net + "/";
  for (const auto& [name, t] : ckpt.tensors)
    if (name.rfind(key, 0) == 0) out.emplace_back(name.substr(key.size()), t);
  return out;
}

#define LDGAN_NN_INSTANTIATE(T)                                                                                     \
  template void add_conv(ParamSet<T>&, const std::string&, std::size_t, std::size_t, std::size_t, Init, Rng&, bool); \
  template void add_conv_transpose(ParamSet<T>&, const std::string&, std::size_t, std::size_t, std::size_t, Init,    \
                                   Rng&, bool);                                                                     \
  template void add_batch_norm(ParamSet<T>&, const std::string&, std::size_t, Init, Rng&);                          \
  template Var conv(Graph<T>&, ParamSet<T>&, const std::string&, Var, std::size_t, std::size_t);                    \
  template Var conv_transpose(Graph<T>&, ParamSet<T>&, const std::string&, Var, std::size_t, std::size_t);          \
  template Var batch_norm(Graph<T>&, ParamSet<T>&, const std::string&, Var, Mode);                                  \
  template Tensor<T> gather_batch(std::span<const SpectralCube>, std::span<const std::size_t>);

LDGAN_NN_INSTANTIATE(float)
LDGAN_NN_INSTANTIATE(double)

}  // namespace ldgan
