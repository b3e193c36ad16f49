#include "hdrsplat/radiance.hpp"

#include <stdexcept>

#include "hdrsplat/gradengine.hpp"

namespace hdrsplat {

namespace {

constexpr int kComposerIn = kIlluminationDim + kReflectanceDim;

std::vector<double> composer_input(const std::vector<double>& illum, const std::vector<double>& h_r, std::size_t n) {
    std::vector<double> x(n * kComposerIn);
    for (std::size_t i = 0; i < n; ++i) {
        double* row = x.data() + i * kComposerIn;
        for (int k = 0; k < kIlluminationDim; ++k) row[k] = illum[kIlluminationDim * i + k];
        for (int k = 0; k < kReflectanceDim; ++k) row[kIlluminationDim + k] = h_r[kReflectanceDim * i + k];
    }
    return x;
}

std::vector<double> ambient_of(const GaussianCloud& cloud) {
    std::vector<double> l_a(cloud.l_a_raw.size());
    for (std::size_t k = 0; k < l_a.size(); ++k) l_a[k] = softplus(cloud.l_a_raw[k]);
    return l_a;
}

void add_scaled(ImageBuffer& dst, const ImageBuffer& src, double s) {
    for (std::size_t k = 0; k < dst.data.size(); ++k) dst.data[k] += s * src.data[k];
}

}  // namespace

Vec3 compose(const Vec3& l_a, std::span<const double> h_r, const MlpParams& g) {
    if (h_r.size() != kReflectanceDim) throw std::invalid_argument("compose: reflectance feature must have 8 entries");
    std::vector<double> x(kComposerIn);
    for (int k = 0; k < 3; ++k) x[k] = l_a[k];
    for (int k = 0; k < kReflectanceDim; ++k) x[3 + k] = h_r[k];
    const auto y = mlp_forward(g, x, 1);
    return {y[0], y[1], y[2]};
}

Vec3 modulate(const Vec3& l_a, double lighting, const MlpParams& phi) {
    const double x[4] = {l_a[0], l_a[1], l_a[2], lighting};
    const auto y = mlp_forward(phi, x, 1);
    return {y[0], y[1], y[2]};
}

std::vector<double> compose_colors(const Model& model, std::vector<double>* l_a_out) {
    const std::size_t n = model.cloud.size();
    auto l_a = ambient_of(model.cloud);
    auto colors = mlp_forward(model.composer, composer_input(l_a, model.cloud.h_r, n), static_cast<int>(n));
    if (l_a_out) *l_a_out = std::move(l_a);
    return colors;
}

BranchOutputs render_branches(const Model& model, const Camera& camera, double exposure, double lighting,
                              const RasterConfig& raster, BranchTrace* trace, bool gi_enabled) {
    if (!(exposure > 0)) throw std::invalid_argument("render_branches: exposure must be positive");
    const GaussianCloud& cloud = model.cloud;
    cloud.validate();
    const std::size_t n = cloud.size();
    const int batch = static_cast<int>(n);

    BranchTrace local;
    BranchTrace& tr = trace ? *trace : local;
    tr.exposure = exposure;
    tr.lighting = lighting;
    tr.gi_enabled = gi_enabled;
    tr.l_a = ambient_of(cloud);
    tr.colors = mlp_forward(model.composer, composer_input(tr.l_a, cloud.h_r, n), batch, &tr.composer_ie);

    if (gi_enabled) {
        std::vector<double> mod_in(n * 4);
        for (std::size_t i = 0; i < n; ++i) {
            for (int k = 0; k < 3; ++k) mod_in[4 * i + k] = tr.l_a[3 * i + k];
            mod_in[4 * i + 3] = lighting;
        }
        tr.l_hat = mlp_forward(model.modulator, mod_in, batch, &tr.modulator);
        tr.colors_relit = mlp_forward(model.composer, composer_input(tr.l_hat, cloud.h_r, n), batch, &tr.composer_gi);
    } else {
        tr.l_hat = tr.l_a;
        tr.colors_relit.clear();
    }

    tr.projection = project(cloud, camera, raster);
    tr.raster = rasterize(tr.projection.splats, camera, raster);

    BranchOutputs out;
    out.i_hdr = shade(tr.raster, tr.projection.splats, tr.colors, raster.background);
    out.i_hdr_scaled = out.i_hdr;
    for (double& v : out.i_hdr_scaled.data) v *= exposure;
    if (gi_enabled)
        out.i_hdr_relit = shade(tr.raster, tr.projection.splats, tr.colors_relit, raster.background);
    else
        out.i_hdr_relit = out.i_hdr_scaled;
    return out;
}

void render_branches_backward(const Model& model, const Camera& camera, const RasterConfig& raster,
                              const BranchTrace& tr, const BranchCotangents& cot, Model& grad,
                              std::vector<double>& ndc_norm, std::vector<std::uint8_t>& visible) {
    const GaussianCloud& cloud = model.cloud;
    const std::size_t n = cloud.size();
    const int w = camera.width, h = camera.height;

    // total cotangent on the unscaled IE image
    ImageBuffer d_ie(w, h);
    if (cot.i_hdr) add_scaled(d_ie, *cot.i_hdr, 1.0);
    if (cot.i_hdr_scaled) add_scaled(d_ie, *cot.i_hdr_scaled, tr.exposure);
    if (!tr.gi_enabled && cot.i_hdr_relit) add_scaled(d_ie, *cot.i_hdr_relit, tr.exposure);

    std::vector<double> d_colors(3 * n, 0.0), d_colors_relit;
    std::vector<ShadeBranch> branches;
    branches.push_back({tr.colors, &d_ie, &d_colors});
    ImageBuffer zero_relit;
    if (tr.gi_enabled) {
        d_colors_relit.assign(3 * n, 0.0);
        const ImageBuffer* d_relit = cot.i_hdr_relit;
        if (!d_relit) {
            zero_relit = ImageBuffer(w, h);
            d_relit = &zero_relit;
        }
        branches.push_back({tr.colors_relit, d_relit, &d_colors_relit});
    }

    const SplatGrads sg = composite_backward(tr.raster, tr.projection.splats, branches, raster.background);
    project_backward(cloud, camera, tr.projection, sg, grad.cloud, ndc_norm, visible);

    std::vector<double> d_l_a(3 * n, 0.0);
    std::vector<double> dx;
    mlp_backward(model.composer, tr.composer_ie, d_colors, &grad.composer, &dx);
    for (std::size_t i = 0; i < n; ++i) {
        for (int k = 0; k < 3; ++k) d_l_a[3 * i + k] += dx[kComposerIn * i + k];
        for (int k = 0; k < kReflectanceDim; ++k) grad.cloud.h_r[kReflectanceDim * i + k] += dx[kComposerIn * i + 3 + k];
    }
    if (tr.gi_enabled) {
        mlp_backward(model.composer, tr.composer_gi, d_colors_relit, &grad.composer, &dx);
        const double fault = vjp_fault();
        std::vector<double> d_l_hat(3 * n);
        for (std::size_t i = 0; i < n; ++i) {
            for (int k = 0; k < 3; ++k) d_l_hat[3 * i + k] = fault * dx[kComposerIn * i + k];
            for (int k = 0; k < kReflectanceDim; ++k)
                grad.cloud.h_r[kReflectanceDim * i + k] += dx[kComposerIn * i + 3 + k];
        }
        std::vector<double> dm;
        mlp_backward(model.modulator, tr.modulator, d_l_hat, &grad.modulator, &dm);
        for (std::size_t i = 0; i < n; ++i)
            for (int k = 0; k < 3; ++k) d_l_a[3 * i + k] += dm[4 * i + k];
    }
    for (std::size_t k = 0; k < 3 * n; ++k) grad.cloud.l_a_raw[k] += d_l_a[k] * sigmoid(cloud.l_a_raw[k]);
}

}  // namespace hdrsplat
