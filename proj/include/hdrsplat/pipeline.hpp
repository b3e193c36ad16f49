#pragma once

#include "hdrsplat/gradengine.hpp"
#include "hdrsplat/losses.hpp"
#include "hdrsplat/model.hpp"
#include "hdrsplat/radiance.hpp"
#include "hdrsplat/rasterizer.hpp"
#include "hdrsplat/tonemap.hpp"

namespace hdrsplat {

struct PipelineOptions {
    RasterConfig raster;
    LossWeights weights;
    FuseMode fuse = FuseMode::Sum;
    bool gi_enabled = true;  // false gives the IE-only baseline
};

/// One training observation as seen by the loss.
struct PipelineSample {
    const Camera* camera = nullptr;
    double exposure = 1.0;
    double lighting = 1.0;
    const ImageBuffer* gt_ldr = nullptr;
    const ImageBuffer* gt_unit = nullptr;  // LDR ground truth of the same pose at t = 1, if any
};

/// Saved activations of one forward pass.
struct PipelineForward {
    BranchOutputs branches;
    BranchTrace branch_trace;
    MlpTrace tm_ie, tm_gi;
    LdrOutputs ldr;
    FuseTrace fuse_trace;
    bool unit_active = false;
    LdrPair unit_pair;
    MlpTrace tm_unit, mix_unit;
    ImageBuffer unit_pred;
    LossBreakdown loss;
};

/// Render, tone map, fuse and evaluate the weighted loss. Throws
/// NumericalError naming the first non-finite pixel or Gaussian.
PipelineForward pipeline_forward(const Model& model, const PipelineSample& sample, const PipelineOptions& options);

/// Total loss only (used by finite differences).
double pipeline_loss(const Model& model, const PipelineSample& sample, const PipelineOptions& options);

/// Reverse pass. Accumulates parameter gradients into `tape` (scaled by
/// `seed`) and appends one NDC sample for this view. f_mix receives no
/// parameter gradient while `model.tonemapper.frozen_mix` is set.
void pipeline_backward(const Model& model, const PipelineSample& sample, const PipelineOptions& options,
                       const PipelineForward& fwd, GradTape& tape, double seed = 1.0);

}  // namespace hdrsplat

namespace hdrsplat {

/// Test-input conditioning for gradient checks: shifts hidden-layer biases
/// of every network until no leaky-ReLU pre-activation produced by
/// `samples` lies within `margin` of the kink at 0. Returns the number of
/// biases moved.
std::size_t clear_kinks(Model& model, std::span<const PipelineSample> samples, const PipelineOptions& options,
                        double margin = 1e-3);

/// Smallest |pre-activation| over all hidden units and samples.
double kink_distance(const Model& model, std::span<const PipelineSample> samples, const PipelineOptions& options);

}  // namespace hdrsplat
