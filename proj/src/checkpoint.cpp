#include "ldgan/checkpoint.hpp"

#include "binio.hpp"

namespace ldgan {

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::vector<unsigned char> out;
  out.insert(out.end(), ckpt.magic.begin(), ckpt.magic.end());
  binio::put_u32(out, ckpt.version);
  binio::put_u32(out, ckpt.info_a);
  binio::put_u32(out, ckpt.info_b);
  binio::put_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    binio::put_u32(out, static_cast<std::uint32_t>(name.size()));
    binio::put_bytes(out, name);
    binio::put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) binio::put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : t.storage()) binio::put_f32(out, v);
  }
  const std::string meta = ckpt.meta.is_null() ? std::string() : ckpt.meta.dump();
  binio::put_u32(out, static_cast<std::uint32_t>(meta.size()));
  binio::put_bytes(out, meta);
  binio::write_file(path, out);
}

Checkpoint load_checkpoint(const std::string& path, const std::array<char, 4>& expected_magic) {
  const auto bytes = binio::read_file(path);
  binio::Reader r(bytes, path);
  Checkpoint ckpt;
  const auto magic = r.bytes(4, "magic");
  if (magic != std::string(expected_magic.begin(), expected_magic.end())) {
    throw FormatError(path + ": bad magic '" + magic + "', expected '" +
                      std::string(expected_magic.begin(), expected_magic.end()) + "'");
  }
  std::copy(magic.begin(), magic.end(), ckpt.magic.begin());
  ckpt.version = r.u32("version");
  if (ckpt.version != 1) throw FormatError(path + ": unsupported version " + std::to_string(ckpt.version));
  ckpt.info_a = r.u32("info_a");
  ckpt.info_b = r.u32("info_b");
  const auto count = r.u32("tensor_count");
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto name_len = r.u32("name_len");
    auto name = r.bytes(name_len, "name");
    const auto rank = r.u32("rank");
    if (rank > 8) throw FormatError(path + ": tensor '" + name + "' has implausible rank " + std::to_string(rank));
    Shape shape;
    std::uint64_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape.push_back(r.u32("dims"));
      numel *= shape.back();
      if (numel * 4 > r.remaining()) throw FormatError(path + ": tensor '" + name + "' dims exceed file size");
    }
    std::vector<float> data(numel);
    for (auto& v : data) v = r.f32("tensor data");
    ckpt.tensors.emplace_back(std::move(name), Tensor<float>(std::move(shape), std::move(data)));
  }
  const auto meta_len = r.u32("meta_len");
  const auto meta = r.bytes(meta_len, "meta");
  if (r.remaining() != 0) throw FormatError(path + ": trailing bytes after checkpoint body");
  try {
    ckpt.meta = meta.empty() ? nlohmann::json::object() : nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": meta is not valid JSON: " + e.what());
  }
  return ckpt;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<float>>> to_float_tensors(const ParamSet<T>& set) {
  std::vector<std::pair<std::string, Tensor<float>>> out;
  for (const auto& [name, t] : set.named_tensors()) out.emplace_back(name, t.template cast<float>());
  return out;
}

template <typename T>
void assign_from_float(ParamSet<T>& set, const std::vector<std::pair<std::string, Tensor<float>>>& tensors) {
  std::vector<std::pair<std::string, Tensor<T>>> cast;
  for (const auto& [name, t] : tensors) cast.emplace_back(name, t.template cast<T>());
  set.assign_named(cast);
}

template std::vector<std::pair<std::string, Tensor<float>>> to_float_tensors(const ParamSet<float>&);
template std::vector<std::pair<std::string, Tensor<float>>> to_float_tensors(const ParamSet<double>&);
template void assign_from_float(ParamSet<float>&, const std::vector<std::pair<std::string, Tensor<float>>>&);
template void assign_from_float(ParamSet<double>&, const std::vector<std::pair<std::string, Tensor<float>>>&);

}  // namespace ldgan
