#pragma once

#include <cstdint>
#include <filesystem>

#include "hdrsplat/losses.hpp"
#include "hdrsplat/model.hpp"
#include "hdrsplat/pipeline.hpp"
#include "hdrsplat/tonemap.hpp"

namespace hdrsplat {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Contents of the plain-text sidecar next to a checkpoint.
struct CheckpointMeta {
    int iteration = 0;
    LossWeights weights;
    std::uint64_t seed = 0;
    FuseMode fuse = FuseMode::Sum;
    bool gi_enabled = true;
    double extent = 1.0;
};

struct Checkpoint {
    Model model;
    CheckpointMeta meta;
};

/// "<path>.meta"
std::filesystem::path meta_path(const std::filesystem::path& checkpoint);

/// Binary layout: "PHGS", u32 version, u64 N, the six cloud arrays, then
/// composer, modulator, f_tm, f_mix. Every number little-endian; floats are f64.
void save_checkpoint(const std::filesystem::path& path, const Model& model, const CheckpointMeta& meta);

/// Throws IoError on a missing, truncated or malformed file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Options a checkpoint was trained with, for rendering and evaluation.
PipelineOptions inference_options(const CheckpointMeta& meta, const Vec3& background);

}  // namespace hdrsplat
