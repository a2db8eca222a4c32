#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pasnet/layers.hpp"

namespace pasnet {

/// "PASW" weight file layout, all integers little-endian:
///   "PASW" | u32 version | u32 count |
///   count x ( u32 name_len | name bytes | u32 rank | rank x u32 extent |
///             numel x f32 )
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& state);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedTensor>& state);
std::vector<NamedTensor> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

}  // namespace pasnet
