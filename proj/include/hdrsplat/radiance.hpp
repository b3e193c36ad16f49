#pragma once

#include <span>
#include <vector>

#include "hdrsplat/image.hpp"
#include "hdrsplat/model.hpp"
#include "hdrsplat/rasterizer.hpp"

namespace hdrsplat {

/// c = g(L_a, H_r)
Vec3 compose(const Vec3& l_a, std::span<const double> h_r, const MlpParams& g);

/// Virtual illumination phi(L_a, l), input is [L_a, l].
Vec3 modulate(const Vec3& l_a, double lighting, const MlpParams& phi);

/// Images of the image-exposure (IE) and Gaussian-illumination (GI) branches.
struct BranchOutputs {
    ImageBuffer i_hdr;         // IE radiance before exposure
    ImageBuffer i_hdr_scaled;  // t * i_hdr
    ImageBuffer i_hdr_relit;   // GI radiance with phi(L_a, l) in place of L_a
};

/// Saved activations for render_branches_backward.
struct BranchTrace {
    Projection projection;
    RasterState raster;
    double exposure = 1.0;
    double lighting = 1.0;
    bool gi_enabled = true;
    std::vector<double> l_a;           // N x 3
    std::vector<double> l_hat;         // N x 3 (equals l_a when GI is disabled)
    std::vector<double> colors;        // N x 3
    std::vector<double> colors_relit;  // N x 3
    MlpTrace composer_ie;
    MlpTrace composer_gi;
    MlpTrace modulator;
};

/// Renders both branches with one shared projection and sort. With
/// `gi_enabled == false` the relit image is a copy of the scaled IE image
/// (IE-only baseline).
BranchOutputs render_branches(const Model& model, const Camera& camera, double exposure, double lighting,
                              const RasterConfig& raster, BranchTrace* trace = nullptr, bool gi_enabled = true);

/// Per-Gaussian IE colors only (no rasterization).
std::vector<double> compose_colors(const Model& model, std::vector<double>* l_a_out = nullptr);

struct BranchCotangents {
    const ImageBuffer* i_hdr = nullptr;
    const ImageBuffer* i_hdr_scaled = nullptr;
    const ImageBuffer* i_hdr_relit = nullptr;
};

/// VJP of render_branches. Parameter gradients are accumulated into `grad`.
/// `ndc_norm` / `visible` receive the per-Gaussian screen-space gradient
/// norms for this view.
void render_branches_backward(const Model& model, const Camera& camera, const RasterConfig& raster,
                              const BranchTrace& trace, const BranchCotangents& cot, Model& grad,
                              std::vector<double>& ndc_norm, std::vector<std::uint8_t>& visible);

}  // namespace hdrsplat
