#pragma once

// Checkpoints: <dir>/params.bin holds every tensor as little-endian 64-bit
// floats in column-major order; <dir>/manifest.json names them with shapes
// and byte offsets.

#include "marginlab/scorer.hpp"

#include <filesystem>

namespace marginlab::checkpoint {

void save(const scorer::ScorerParams& params, const std::filesystem::path& dir);
scorer::ScorerParams load(const std::filesystem::path& dir);

}  // namespace marginlab::checkpoint
