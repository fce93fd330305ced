#pragma once

// Flat binary weight container. Layout (all integers little-endian uint32,
// floats little-endian IEEE-754 binary32), documented in docs/formats.md:
//
//   magic   8 bytes  "OCRPCKPT"
//   version u32      currently 1
//   cfg_len u32, cfg bytes        free-form model-config text block
//   count   u32                   number of parameter records
//   repeated count times:
//     name_len u32, name bytes
//     rank u32, dims u32[rank]
//     data f32[prod(dims)]

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ocrprep/autodiff.hpp"

namespace ocrprep::diffkernel {

struct CheckpointEntry {
    std::string name;
    std::vector<int> shape;
    std::vector<float> data;
};

struct Checkpoint {
    std::string config;  // model-config block embedded in the header
    std::vector<CheckpointEntry> entries;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Convenience bridging to float parameter tensors.
Checkpoint snapshot_params(const std::vector<Var<float>>& params, std::string config);
void restore_params(const std::vector<Var<float>>& params, const Checkpoint& ckpt);

// FNV-1a over the file bytes, hex string; recorded in run manifests.
std::string file_hash(const std::string& path);

}  // namespace ocrprep::diffkernel
