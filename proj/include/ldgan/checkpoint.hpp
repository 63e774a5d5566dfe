#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ldgan/params.hpp"

namespace ldgan {

/// Network checkpoint container.
///
/// Layout (little-endian):
///   magic[4] | u32 version | u32 info_a | u32 info_b | u32 tensor_count
///   per tensor: u32 name_len | name | u32 rank | u32 dims[rank] | f32 data[]
///   u32 meta_len | meta (JSON text, may be empty)
///
/// `info_a`/`info_b` carry the network's defining sizes, e.g. (c, L) for "AEPM".
struct Checkpoint {
  std::array<char, 4> magic{};
  std::uint32_t version = 1;
  std::uint32_t info_a = 0;
  std::uint32_t info_b = 0;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;
  nlohmann::json meta = nlohmann::json::object();
};

inline constexpr std::array<char, 4> kAutoencoderMagic{'A', 'E', 'P', 'M'};
inline constexpr std::array<char, 4> kGanMagic{'G', 'A', 'N', 'P'};
inline constexpr std::array<char, 4> kRecoveryMagic{'R', 'C', 'V', 'R'};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
/// Throws FormatError on a wrong magic or a malformed body.
Checkpoint load_checkpoint(const std::string& path, const std::array<char, 4>& expected_magic);

template <typename T>
std::vector<std::pair<std::string, Tensor<float>>> to_float_tensors(const ParamSet<T>& set);
template <typename T>
void assign_from_float(ParamSet<T>& set, const std::vector<std::pair<std::string, Tensor<float>>>& tensors);

}  // namespace ldgan
