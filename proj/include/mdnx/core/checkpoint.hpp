#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mdnx/core/nn.hpp"

namespace mdnx {

struct CheckpointError : Error {
  using Error::Error;
};

inline constexpr char kCheckpointMagic[4] = {'M', 'D', 'N', 'X'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout, all integers little-endian:
//   "MDNX" | version u32 | count u32 |
//   count x { name_len u32 | name bytes | rank u32 | dims u64[rank] | f64[numel] }
std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

/// Writes atomically (temp file + rename) so an interrupted save never
/// clobbers the previous checkpoint.
void save_checkpoint(const std::filesystem::path& path, const Module& module);
/// Every state tensor of `module` must be present with a matching shape.
void load_checkpoint(const std::filesystem::path& path, Module& module);
void load_state(const std::vector<NamedTensor>& tensors, Module& module);

}  // namespace mdnx
