#pragma once

#include <span>
#include <vector>

#include "hdrsplat/densify.hpp"
#include "hdrsplat/pipeline.hpp"
#include "hdrsplat/scene.hpp"

namespace hdrsplat {

/// Inference at exposure t with lighting l = t.
struct Rendering {
    BranchOutputs hdr;
    LdrOutputs ldr;
};
Rendering render_view(const Model& model, const Camera& camera, double exposure, const PipelineOptions& options);

struct ViewMetrics {
    int pose = 0;
    double exposure = 1.0;
    bool novel_exposure = false;  // t2 or t4, never seen in training
    double psnr = 0;
    double ssim = 0;  // NaN for images smaller than the SSIM window
};

struct PoseMetrics {
    int pose = 0;
    double psnr = 0;  // mu-law tone-mapped HDR
    double ssim = 0;
};

struct EvalSummary {
    std::vector<ViewMetrics> views;
    std::vector<PoseMetrics> hdr;
    double oe_psnr = 0, oe_ssim = 0;  // LDR at {t1, t3, t5}
    double ne_psnr = 0, ne_ssim = 0;  // LDR at {t2, t4}; NaN when absent
    double hdr_psnr = 0, hdr_ssim = 0;
    std::size_t oe_count = 0, ne_count = 0;
};

/// Scores LDR predictions against every view and the mu-law HDR against
/// each pose's ground truth (poses without gt_hdr are skipped).
EvalSummary evaluate(const Model& model, std::span<const ViewRecord> views, const PipelineOptions& options);

bool is_novel_exposure(double t);

/// Spearman rank correlation with average ranks for ties. NaN when either
/// input is constant or fewer than two pairs are given.
double spearman(std::span<const double> a, std::span<const double> b);

/// Spearman between average NDC gradient and 1 / illumination deviation over
/// the Gaussians seen at least once.
double starvation_correlation(const DensifyState& state);

}  // namespace hdrsplat
