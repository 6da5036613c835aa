#pragma once

// RAFTCKPT binary checkpoint:
//
//   "RAFTCKPT"                      8 bytes
//   format version                  u32 LE
//   parameter count                 u64 LE
//   per parameter:
//     name length                   u32 LE
//     name                          UTF-8, no terminator
//     rank                          u32 LE
//     extents                       rank x u64 LE
//     values                        prod(extents) x f64 LE
//
// The network architecture is recovered from parameter names and shapes.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "raftlab/model.hpp"

namespace raftlab {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const ModelParams& params);
ModelParams decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace raftlab
