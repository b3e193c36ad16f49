#pragma once

#include "hdrsplat/image.hpp"
#include "hdrsplat/mlp.hpp"
#include "hdrsplat/model.hpp"

namespace hdrsplat {

/// Offset inside ln(x + eps) at the f_tm input.
inline constexpr double kLogEpsilon = 1e-6;

struct LdrPair {
    ImageBuffer global;
    ImageBuffer local;
};

/// Per-pixel f_tm on ln(hdr + 1e-6). Output columns 0..2 are the global
/// image, 3..5 the local one.
LdrPair tone_map_pair(const ImageBuffer& hdr, const MlpParams& f_tm, MlpTrace* trace = nullptr);

/// Accumulates f_tm gradients into `grad` (if non-null) and writes d(hdr)
/// into `d_hdr` (if non-null). Either cotangent may be null (treated as zero).
void tone_map_pair_backward(const MlpParams& f_tm, const MlpTrace& trace, const ImageBuffer& hdr,
                            const ImageBuffer* d_global, const ImageBuffer* d_local, MlpParams* grad,
                            ImageBuffer* d_hdr);

/// Sum is the literal I_IG + I_GI; Mean halves it.
enum class FuseMode { Sum, Mean };

const char* to_string(FuseMode m);
FuseMode fuse_mode_from_string(const std::string& s);

struct LdrOutputs {
    ImageBuffer i_glo, i_loc;          // from I_HDR * t
    ImageBuffer i_glo_hat, i_loc_hat;  // from the relit branch
    ImageBuffer i_ig, i_gi;
    ImageBuffer i_ldr;
};

struct FuseTrace {
    MlpTrace ig;
    MlpTrace gi;
};

/// i_ig = f_mix(glo, loc_hat), i_gi = f_mix(glo, loc), i_ldr = i_ig + i_gi
/// (or their mean). Fills the last three fields of `out` from the first four.
void cross_fuse(LdrOutputs& out, const MlpParams& f_mix, FuseMode mode = FuseMode::Sum, FuseTrace* trace = nullptr);

struct FuseCotangents {
    ImageBuffer d_glo, d_loc, d_loc_hat;
};

/// VJP of cross_fuse. `grad` may be null (frozen fusion network); input
/// cotangents are always produced.
FuseCotangents cross_fuse_backward(const MlpParams& f_mix, const FuseTrace& trace, FuseMode mode,
                                   const ImageBuffer* d_ig, const ImageBuffer* d_gi, const ImageBuffer* d_ldr,
                                   MlpParams* grad);

/// f_mix(a, b) for one pair of images.
ImageBuffer fuse(const ImageBuffer& a, const ImageBuffer& b, const MlpParams& f_mix, MlpTrace* trace = nullptr);

/// d/d(a, b) of fuse; `grad` may be null.
void fuse_backward(const MlpParams& f_mix, const MlpTrace& trace, const ImageBuffer& d_out, MlpParams* grad,
                   ImageBuffer* d_a, ImageBuffer* d_b);

/// Full tone mapper: both pairs, then cross fusion.
LdrOutputs tone_map(const ImageBuffer& hdr_scaled, const ImageBuffer& hdr_relit, const ToneMapperParams& tm,
                    FuseMode mode = FuseMode::Sum);

/// y = ln(1 + mu x/max) / ln(1 + mu). An all-zero image maps to zeros.
ImageBuffer mu_law(const ImageBuffer& hdr, double mu = 5000.0);

}  // namespace hdrsplat
