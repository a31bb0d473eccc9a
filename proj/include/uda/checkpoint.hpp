#pragma once

#include <filesystem>

#include "uda/losses.hpp"
#include "uda/models.hpp"

namespace uda {

// Checkpoint file layout: magic string "DIALCKPT1", then for each named
// tensor: name length + name bytes + rows + cols (unsigned 32-bit
// little-endian) + row-major 64-bit little-endian floats, until EOF.
// Tensors carry the names from ModelParams::named_tensors() plus
// "centers", "centers.gamma", "centers.initialized" and, when any class
// started at zero, "centers.zero_init". The reader rejects wrong magic
// and truncated payloads, reporting the byte offset.
struct Checkpoint {
    ModelParams params;
    CenterTable centers;
};

void save_checkpoint(const ModelParams& params, const CenterTable& centers,
                     const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace uda
