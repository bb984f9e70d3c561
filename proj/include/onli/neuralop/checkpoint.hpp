#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "onli/neuralop/model.hpp"

namespace onli {

// "ONLICKPT", u32 config length, config text, u64 parameter count, f32
// parameters, u32 CRC-32 of every preceding byte. Little-endian.
std::vector<std::uint8_t> encode_checkpoint(const Model& model);
Model decode_checkpoint(const std::vector<std::uint8_t>& bytes);

// Writes through a temporary file and renames, so a crash never leaves a
// half-written checkpoint under the final name.
void save_checkpoint(const std::filesystem::path& path, const Model& model);
Model load_checkpoint(const std::filesystem::path& path);

} // namespace onli
