#pragma once

#include <filesystem>

#include "thermsplat/train.hpp"

namespace thermsplat::train {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary container: "THSP", u32 version, then tagged blocks (4-byte tag, u64 byte length, payload).
/// All integers and IEEE-754 doubles are little-endian. See README for the block layout.
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

}  // namespace thermsplat::train
