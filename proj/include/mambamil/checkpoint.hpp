#pragma once

#include <filesystem>
#include <vector>

#include "mambamil/model.hpp"

namespace mambamil {

// Trained model on disk: magic "MMC1", then a u32-length-prefixed block of
// `key=value` lines describing the ModelConfig and survival bin edges, then a
// u32 tensor count followed by (u16 name length, name, u8 rank, u32 extents,
// float64 LE values) per tensor in named_parameters() order.
struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  std::vector<double> bin_edges;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mambamil
