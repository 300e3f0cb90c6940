#pragma once

#include "auvtrack/nn/layers.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace auvtrack::nn {

inline constexpr char kCheckpointMagic[4] = {'A', 'T', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout: magic, u32 version, u32 count, then per tensor
/// u32 name length, name bytes, u64 rows, u64 cols, rows*cols little-endian f64.
void write_checkpoint(std::ostream& os, const std::vector<NamedTensor>& tensors);
void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);

/// Reads into existing tensors; names and shapes must match exactly.
void read_checkpoint(std::istream& is, const std::vector<NamedTensor>& tensors);
void load_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);

/// Serialized bytes of `tensors` (used for content hashing).
std::string checkpoint_bytes(const std::vector<NamedTensor>& tensors);

}  // namespace auvtrack::nn
