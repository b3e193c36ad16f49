#include "hdrsplat/model.hpp"

#include <random>

#include "hdrsplat/linalg.hpp"

namespace hdrsplat {

namespace {

template <class Ref, class M>
void append_mlp(std::vector<Ref>& out, const std::string& prefix, ParamGroup group, M& mlp) {
    for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
        auto& layer = mlp.layers[l];
        out.push_back({prefix + "." + std::to_string(l) + ".weight", group, layer.weight});
        out.push_back({prefix + "." + std::to_string(l) + ".bias", group, layer.bias});
    }
}

template <class Ref, class M>
std::vector<Ref> collect(M& m) {
    std::vector<Ref> out;
    out.push_back({"cloud.mu", ParamGroup::Position, m.cloud.mu});
    out.push_back({"cloud.log_scale", ParamGroup::Scale, m.cloud.log_scale});
    out.push_back({"cloud.rotation", ParamGroup::Rotation, m.cloud.rotation});
    out.push_back({"cloud.opacity_logit", ParamGroup::Opacity, m.cloud.opacity_logit});
    out.push_back({"cloud.h_r", ParamGroup::Reflectance, m.cloud.h_r});
    out.push_back({"cloud.l_a_raw", ParamGroup::Illumination, m.cloud.l_a_raw});
    append_mlp(out, "composer", ParamGroup::Composer, m.composer);
    append_mlp(out, "modulator", ParamGroup::Modulator, m.modulator);
    append_mlp(out, "f_tm", ParamGroup::ToneMap, m.tonemapper.f_tm);
    append_mlp(out, "f_mix", ParamGroup::Fusion, m.tonemapper.f_mix);
    return out;
}

// f_mix starts as sigmoid(k * (mean(glo, loc) - 1/2)) per channel: the first
// six hidden units pass the inputs through, the rest start disconnected from
// the output. A Glorot-initialized f_mix would sit near 0.5 for every input
// while it is frozen.
void init_fusion(MlpParams& f_mix) {
    constexpr double k = 8.0;
    auto& hidden = f_mix.layers[0];
    auto& out = f_mix.layers[1];
    const std::size_t n_in = 6, n_hidden = hidden.bias.size();
    for (std::size_t j = 0; j < n_in; ++j) {
        for (std::size_t i = 0; i < n_in; ++i) hidden.weight[j * n_in + i] = i == j ? 1.0 : 0.0;
        hidden.bias[j] = 0.0;
    }
    std::fill(out.weight.begin(), out.weight.end(), 0.0);
    for (std::size_t c = 0; c < 3; ++c) {
        out.weight[c * n_hidden + c] = 0.5 * k;
        out.weight[c * n_hidden + 3 + c] = 0.5 * k;
        out.bias[c] = -0.5 * k;
    }
}

}  // namespace

Model make_model(GaussianCloud cloud, std::uint64_t seed) {
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    Model m;
    m.cloud = std::move(cloud);
    // softplus heads start near 0.5, sigmoid heads at exactly 0.5
    const double softplus_half = softplus_inverse(0.5);
    m.composer = make_mlp(kComposerDims, OutputMap::Softplus, rng, softplus_half);
    m.modulator = make_mlp(kModulatorDims, OutputMap::Softplus, rng, softplus_half);
    m.tonemapper.f_tm = make_mlp(kToneMapDims, OutputMap::Sigmoid, rng, 0.0);
    m.tonemapper.f_mix = make_mlp(kFusionDims, OutputMap::Sigmoid, rng, 0.0);
    init_fusion(m.tonemapper.f_mix);
    return m;
}

Model zeros_like(const Model& m) {
    Model z = m;
    set_zero(z);
    return z;
}

void set_zero(Model& m) {
    for (auto& r : param_refs(m)) std::fill(r.values.begin(), r.values.end(), 0.0);
}

const char* to_string(ParamGroup g) {
    switch (g) {
        case ParamGroup::Position: return "position";
        case ParamGroup::Scale: return "scale";
        case ParamGroup::Rotation: return "rotation";
        case ParamGroup::Opacity: return "opacity";
        case ParamGroup::Reflectance: return "reflectance";
        case ParamGroup::Illumination: return "illumination";
        case ParamGroup::Composer: return "composer";
        case ParamGroup::Modulator: return "modulator";
        case ParamGroup::ToneMap: return "f_tm";
        case ParamGroup::Fusion: return "f_mix";
    }
    return "?";
}

std::vector<ParamRef> param_refs(Model& m) { return collect<ParamRef>(m); }
std::vector<ConstParamRef> param_refs(const Model& m) { return collect<ConstParamRef>(m); }

std::size_t parameter_count(const Model& m) {
    std::size_t n = 0;
    for (const auto& r : param_refs(m)) n += r.values.size();
    return n;
}

}  // namespace hdrsplat
