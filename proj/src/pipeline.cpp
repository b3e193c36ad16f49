#include "hdrsplat/pipeline.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace hdrsplat {

namespace {

void scale(ImageBuffer& img, double s) {
    for (double& v : img.data) v *= s;
}

void add(ImageBuffer& dst, const ImageBuffer& src) {
    for (std::size_t k = 0; k < dst.data.size(); ++k) dst.data[k] += src.data[k];
}

[[noreturn]] void diagnose(const Model& model, const PipelineForward& f) {
    const GaussianCloud& c = model.cloud;
    for (const auto& r : param_refs(model))
        for (std::size_t k = 0; k < r.values.size(); ++k)
            if (!std::isfinite(r.values[k])) {
                std::string where = r.id + "[" + std::to_string(k) + "]";
                if (r.id.rfind("cloud.", 0) == 0) {
                    const std::size_t per = r.values.size() / std::max<std::size_t>(c.size(), 1);
                    where += fmt::format(" (Gaussian {})", k / std::max<std::size_t>(per, 1));
                }
                throw NumericalError("non-finite parameter " + where);
            }
    const std::pair<const char*, const ImageBuffer*> images[] = {
        {"I_HDR", &f.branches.i_hdr},   {"I_HDR_relit", &f.branches.i_hdr_relit},
        {"I_glo", &f.ldr.i_glo},        {"I_loc", &f.ldr.i_loc},
        {"I_loc_hat", &f.ldr.i_loc_hat}, {"I_LDR", &f.ldr.i_ldr}};
    for (const auto& [name, img] : images)
        for (std::size_t k = 0; k < img->data.size(); ++k)
            if (!std::isfinite(img->data[k])) {
                const std::size_t p = k / 3;
                throw NumericalError(fmt::format("non-finite {} at pixel ({}, {}) channel {}", name,
                                                 p % img->width, p / img->width, k % 3));
            }
    throw NumericalError(fmt::format("non-finite loss (rec={}, cons={}, unit={})", f.loss.rec, f.loss.cons,
                                     f.loss.unit));
}

}  // namespace

PipelineForward pipeline_forward(const Model& model, const PipelineSample& sample, const PipelineOptions& options) {
    if (!sample.camera || !sample.gt_ldr) throw std::invalid_argument("pipeline_forward: camera and gt_ldr required");
    const LossWeights& w = options.weights;
    w.validate();
    PipelineForward f;
    f.branches = render_branches(model, *sample.camera, sample.exposure, sample.lighting, options.raster,
                                 &f.branch_trace, options.gi_enabled);

    auto ie = tone_map_pair(f.branches.i_hdr_scaled, model.tonemapper.f_tm, &f.tm_ie);
    auto gi = tone_map_pair(f.branches.i_hdr_relit, model.tonemapper.f_tm, &f.tm_gi);
    f.ldr.i_glo = std::move(ie.global);
    f.ldr.i_loc = std::move(ie.local);
    f.ldr.i_glo_hat = std::move(gi.global);
    f.ldr.i_loc_hat = std::move(gi.local);
    cross_fuse(f.ldr, model.tonemapper.f_mix, options.fuse, &f.fuse_trace);

    const double rec = reconstruction_loss(f.ldr, *sample.gt_ldr, w.gamma);
    double cons = 0.0;
    if (w.lambda2 > 0) {
        const auto taps = gaussian_kernel(w.blur_sigma, w.blur_radius);
        cons = consistency_loss(f.branches.i_hdr_scaled, f.branches.i_hdr_relit, taps);
    }
    double unit = 0.0;
    f.unit_active = w.lambda3 > 0 && sample.gt_unit != nullptr;
    if (f.unit_active) {
        f.unit_pair = tone_map_pair(f.branches.i_hdr, model.tonemapper.f_tm, &f.tm_unit);
        f.unit_pred = fuse(f.unit_pair.global, f.unit_pair.local, model.tonemapper.f_mix, &f.mix_unit);
        unit = unit_exposure_loss(f.unit_pred, *sample.gt_unit);
    }
    f.loss = total_loss(rec, cons, unit, w);
    if (!std::isfinite(f.loss.total)) diagnose(model, f);
    return f;
}

double pipeline_loss(const Model& model, const PipelineSample& sample, const PipelineOptions& options) {
    return pipeline_forward(model, sample, options).loss.total;
}

void pipeline_backward(const Model& model, const PipelineSample& sample, const PipelineOptions& options,
                       const PipelineForward& f, GradTape& tape, double seed) {
    if (f.branch_trace.raster.width == 0) throw MissingActivation("pipeline_backward called before forward");
    const LossWeights& w = options.weights;
    const Camera& cam = *sample.camera;
    const int width = cam.width, height = cam.height;
    Model& g = tape.grads;
    MlpParams* mix_grad = model.tonemapper.frozen_mix ? nullptr : &g.tonemapper.f_mix;

    ReconstructionGrads rg;
    reconstruction_loss(f.ldr, *sample.gt_ldr, w.gamma, &rg);
    const double k_rec = seed * w.lambda1;
    scale(rg.d_ldr, k_rec);
    scale(rg.d_ig, k_rec);
    scale(rg.d_gi, k_rec);
    const FuseCotangents fc =
        cross_fuse_backward(model.tonemapper.f_mix, f.fuse_trace, options.fuse, &rg.d_ig, &rg.d_gi, &rg.d_ldr, mix_grad);

    ImageBuffer d_scaled, d_relit;
    tone_map_pair_backward(model.tonemapper.f_tm, f.tm_ie, f.branches.i_hdr_scaled, &fc.d_glo, &fc.d_loc,
                           &g.tonemapper.f_tm, &d_scaled);
    tone_map_pair_backward(model.tonemapper.f_tm, f.tm_gi, f.branches.i_hdr_relit, nullptr, &fc.d_loc_hat,
                           &g.tonemapper.f_tm, &d_relit);

    if (w.lambda2 > 0) {
        const auto taps = gaussian_kernel(w.blur_sigma, w.blur_radius);
        ImageBuffer ds, dr;
        consistency_loss(f.branches.i_hdr_scaled, f.branches.i_hdr_relit, taps, &ds, &dr);
        scale(ds, seed * w.lambda2);
        scale(dr, seed * w.lambda2);
        add(d_scaled, ds);
        add(d_relit, dr);
    }

    ImageBuffer d_hdr;
    if (f.unit_active) {
        ImageBuffer du;
        unit_exposure_loss(f.unit_pred, *sample.gt_unit, &du);
        scale(du, seed * w.lambda3);
        ImageBuffer d_glo(width, height), d_loc(width, height);
        fuse_backward(model.tonemapper.f_mix, f.mix_unit, du, mix_grad, &d_glo, &d_loc);
        tone_map_pair_backward(model.tonemapper.f_tm, f.tm_unit, f.branches.i_hdr, &d_glo, &d_loc,
                               &g.tonemapper.f_tm, &d_hdr);
    }

    BranchCotangents cot;
    cot.i_hdr = f.unit_active ? &d_hdr : nullptr;
    cot.i_hdr_scaled = &d_scaled;
    cot.i_hdr_relit = &d_relit;
    GradTape::NdcView view;
    render_branches_backward(model, cam, options.raster, f.branch_trace, cot, g, view.norm, view.visible);
    tape.ndc_views.push_back(std::move(view));
}

}  // namespace hdrsplat

namespace hdrsplat {

namespace {

enum class Net { Composer, Modulator, ToneMap, Fusion };

template <class M>
auto& net_of(M& m, Net n) {
    switch (n) {
        case Net::Composer: return m.composer;
        case Net::Modulator: return m.modulator;
        case Net::ToneMap: return m.tonemapper.f_tm;
        case Net::Fusion: return m.tonemapper.f_mix;
    }
    return m.composer;
}

std::vector<const MlpTrace*> traces_of(const PipelineForward& f, Net n) {
    std::vector<const MlpTrace*> t;
    switch (n) {
        case Net::Composer:
            t = {&f.branch_trace.composer_ie};
            if (f.branch_trace.gi_enabled) t.push_back(&f.branch_trace.composer_gi);
            break;
        case Net::Modulator:
            if (f.branch_trace.gi_enabled) t = {&f.branch_trace.modulator};
            break;
        case Net::ToneMap:
            t = {&f.tm_ie, &f.tm_gi};
            if (f.unit_active) t.push_back(&f.tm_unit);
            break;
        case Net::Fusion:
            t = {&f.fuse_trace.ig, &f.fuse_trace.gi};
            if (f.unit_active) t.push_back(&f.mix_unit);
            break;
    }
    return t;
}

// pre-activation values of one hidden unit across every sample
std::vector<double> unit_values(const std::vector<PipelineForward>& fwds, Net n, std::size_t layer, int unit, int width) {
    std::vector<double> v;
    for (const auto& f : fwds)
        for (const MlpTrace* t : traces_of(f, n))
            for (int b = 0; b < t->batch; ++b) v.push_back(t->pre[layer][static_cast<std::size_t>(b) * width + unit]);
    return v;
}

double min_abs_shifted(const std::vector<double>& v, double shift) {
    double m = std::numeric_limits<double>::infinity();
    for (double x : v) m = std::min(m, std::abs(x + shift));
    return m;
}

std::vector<PipelineForward> run_all(const Model& m, std::span<const PipelineSample> samples,
                                     const PipelineOptions& o) {
    std::vector<PipelineForward> f;
    for (const auto& s : samples) f.push_back(pipeline_forward(m, s, o));
    return f;
}

constexpr Net kNets[] = {Net::Composer, Net::Modulator, Net::ToneMap, Net::Fusion};

}  // namespace

std::size_t clear_kinks(Model& model, std::span<const PipelineSample> samples, const PipelineOptions& options,
                        double margin) {
    std::size_t moved = 0;
    for (Net n : kNets) {
        const std::size_t hidden = net_of(model, n).layers.size() - 1;
        for (std::size_t l = 0; l < hidden; ++l) {
            const auto fwds = run_all(model, samples, options);
            DenseLayer& layer = net_of(model, n).layers[l];
            for (int u = 0; u < layer.out; ++u) {
                const auto v = unit_values(fwds, n, l, u, layer.out);
                if (v.empty() || min_abs_shifted(v, 0.0) >= margin) continue;
                double shift = 0.0;
                for (int k = 1; k <= 2000; ++k) {
                    const double cand = (k % 2 ? 1 : -1) * ((k + 1) / 2) * 0.5 * margin;
                    if (min_abs_shifted(v, cand) >= margin) {
                        shift = cand;
                        break;
                    }
                }
                if (shift == 0.0) throw std::runtime_error("clear_kinks: no kink-free bias shift found");
                layer.bias[u] += shift;
                ++moved;
            }
        }
    }
    return moved;
}

double kink_distance(const Model& model, std::span<const PipelineSample> samples, const PipelineOptions& options) {
    const auto fwds = run_all(model, samples, options);
    double d = std::numeric_limits<double>::infinity();
    for (Net n : kNets) {
        const auto& net = net_of(model, n);
        for (std::size_t l = 0; l + 1 < net.layers.size(); ++l)
            for (int u = 0; u < net.layers[l].out; ++u)
                d = std::min(d, min_abs_shifted(unit_values(fwds, n, l, u, net.layers[l].out), 0.0));
    }
    return d;
}

}  // namespace hdrsplat
