#pragma once

#include "hdrsplat/pipeline.hpp"

namespace hdrsplat {

/// Independent, deliberately naive evaluation of the training loss in
/// extended precision: per-pixel compositing over every splat, direct 2-D
/// windows for blur and SSIM, no shared kernels with the fast path. Serves
/// as the finite-difference oracle, where f64 evaluation noise would swamp
/// small gradients.
long double reference_loss(const Model& model, const PipelineSample& sample, const PipelineOptions& options);

}  // namespace hdrsplat
