#include "hdrsplat/tonemap.hpp"

#include <algorithm>
#include <cmath>

namespace hdrsplat {

namespace {

ImageBuffer take_columns(const std::vector<double>& y, int cols, int first, int w, int h) {
    ImageBuffer img(w, h, ColorSpace::LdrUnit);
    const std::size_t n = img.pixels();
    for (std::size_t p = 0; p < n; ++p)
        for (int c = 0; c < 3; ++c) img.data[3 * p + c] = y[cols * p + first + c];
    return img;
}

}  // namespace

LdrPair tone_map_pair(const ImageBuffer& hdr, const MlpParams& f_tm, MlpTrace* trace) {
    std::vector<double> x(hdr.data.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        if (hdr.data[k] < 0) throw std::invalid_argument("tone_map_pair: negative radiance");
        x[k] = std::log(hdr.data[k] + kLogEpsilon);
    }
    const auto y = mlp_forward(f_tm, x, static_cast<int>(hdr.pixels()), trace);
    return {take_columns(y, 6, 0, hdr.width, hdr.height), take_columns(y, 6, 3, hdr.width, hdr.height)};
}

void tone_map_pair_backward(const MlpParams& f_tm, const MlpTrace& trace, const ImageBuffer& hdr,
                            const ImageBuffer* d_global, const ImageBuffer* d_local, MlpParams* grad,
                            ImageBuffer* d_hdr) {
    const std::size_t n = hdr.pixels();
    std::vector<double> dy(6 * n, 0.0);
    for (std::size_t p = 0; p < n; ++p)
        for (int c = 0; c < 3; ++c) {
            if (d_global) dy[6 * p + c] = d_global->data[3 * p + c];
            if (d_local) dy[6 * p + 3 + c] = d_local->data[3 * p + c];
        }
    std::vector<double> dx;
    mlp_backward(f_tm, trace, dy, grad, d_hdr ? &dx : nullptr);
    if (d_hdr) {
        *d_hdr = ImageBuffer(hdr.width, hdr.height);
        for (std::size_t k = 0; k < dx.size(); ++k) d_hdr->data[k] = dx[k] / (hdr.data[k] + kLogEpsilon);
    }
}

const char* to_string(FuseMode m) { return m == FuseMode::Sum ? "sum" : "mean"; }

FuseMode fuse_mode_from_string(const std::string& s) {
    if (s == "sum") return FuseMode::Sum;
    if (s == "mean") return FuseMode::Mean;
    throw std::invalid_argument("unknown fuse mode '" + s + "' (expected sum or mean)");
}

ImageBuffer fuse(const ImageBuffer& a, const ImageBuffer& b, const MlpParams& f_mix, MlpTrace* trace) {
    require_same_shape(a, b, "fuse");
    const std::size_t n = a.pixels();
    std::vector<double> x(6 * n);
    for (std::size_t p = 0; p < n; ++p)
        for (int c = 0; c < 3; ++c) {
            x[6 * p + c] = a.data[3 * p + c];
            x[6 * p + 3 + c] = b.data[3 * p + c];
        }
    auto y = mlp_forward(f_mix, x, static_cast<int>(n), trace);
    ImageBuffer out(a.width, a.height, ColorSpace::LdrUnit);
    out.data = std::move(y);
    return out;
}

void fuse_backward(const MlpParams& f_mix, const MlpTrace& trace, const ImageBuffer& d_out, MlpParams* grad,
                   ImageBuffer* d_a, ImageBuffer* d_b) {
    std::vector<double> dx;
    mlp_backward(f_mix, trace, d_out.data, grad, &dx);
    const std::size_t n = d_out.pixels();
    for (std::size_t p = 0; p < n; ++p)
        for (int c = 0; c < 3; ++c) {
            if (d_a) d_a->data[3 * p + c] += dx[6 * p + c];
            if (d_b) d_b->data[3 * p + c] += dx[6 * p + 3 + c];
        }
}

void cross_fuse(LdrOutputs& out, const MlpParams& f_mix, FuseMode mode, FuseTrace* trace) {
    require_same_shape(out.i_glo, out.i_loc, "cross_fuse");
    require_same_shape(out.i_glo, out.i_loc_hat, "cross_fuse");
    require_same_shape(out.i_glo, out.i_glo_hat, "cross_fuse");
    out.i_ig = fuse(out.i_glo, out.i_loc_hat, f_mix, trace ? &trace->ig : nullptr);
    out.i_gi = fuse(out.i_glo, out.i_loc, f_mix, trace ? &trace->gi : nullptr);
    out.i_ldr = ImageBuffer(out.i_glo.width, out.i_glo.height, ColorSpace::LdrUnit);
    const double k = mode == FuseMode::Sum ? 1.0 : 0.5;
    for (std::size_t i = 0; i < out.i_ldr.data.size(); ++i) out.i_ldr.data[i] = k * (out.i_ig.data[i] + out.i_gi.data[i]);
}

FuseCotangents cross_fuse_backward(const MlpParams& f_mix, const FuseTrace& trace, FuseMode mode,
                                   const ImageBuffer* d_ig, const ImageBuffer* d_gi, const ImageBuffer* d_ldr,
                                   MlpParams* grad) {
    const ImageBuffer* ref = d_ldr ? d_ldr : d_ig ? d_ig : d_gi;
    if (!ref) throw std::invalid_argument("cross_fuse_backward: no cotangent given");
    const int w = ref->width, h = ref->height;
    ImageBuffer t_ig(w, h), t_gi(w, h);
    const double k = mode == FuseMode::Sum ? 1.0 : 0.5;
    for (std::size_t i = 0; i < t_ig.data.size(); ++i) {
        const double dl = d_ldr ? k * d_ldr->data[i] : 0.0;
        t_ig.data[i] = dl + (d_ig ? d_ig->data[i] : 0.0);
        t_gi.data[i] = dl + (d_gi ? d_gi->data[i] : 0.0);
    }
    FuseCotangents out{ImageBuffer(w, h), ImageBuffer(w, h), ImageBuffer(w, h)};
    fuse_backward(f_mix, trace.ig, t_ig, grad, &out.d_glo, &out.d_loc_hat);
    fuse_backward(f_mix, trace.gi, t_gi, grad, &out.d_glo, &out.d_loc);
    return out;
}

LdrOutputs tone_map(const ImageBuffer& hdr_scaled, const ImageBuffer& hdr_relit, const ToneMapperParams& tm,
                    FuseMode mode) {
    require_same_shape(hdr_scaled, hdr_relit, "tone_map");
    LdrOutputs out;
    auto a = tone_map_pair(hdr_scaled, tm.f_tm);
    auto b = tone_map_pair(hdr_relit, tm.f_tm);
    out.i_glo = std::move(a.global);
    out.i_loc = std::move(a.local);
    out.i_glo_hat = std::move(b.global);
    out.i_loc_hat = std::move(b.local);
    cross_fuse(out, tm.f_mix, mode);
    return out;
}

ImageBuffer mu_law(const ImageBuffer& hdr, double mu) {
    if (!(mu > 0)) throw std::invalid_argument("mu_law: mu must be positive");
    ImageBuffer out(hdr.width, hdr.height, ColorSpace::LdrUnit);
    double peak = 0.0;
    for (double v : hdr.data) {
        if (v < 0) throw std::invalid_argument("mu_law: negative radiance");
        peak = std::max(peak, v);
    }
    if (peak == 0.0) return out;
    const double denom = std::log1p(mu);
    for (std::size_t k = 0; k < out.data.size(); ++k) out.data[k] = std::log1p(mu * hdr.data[k] / peak) / denom;
    return out;
}

}  // namespace hdrsplat
