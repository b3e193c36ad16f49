#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hdrsplat/mlp.hpp"
#include "hdrsplat/scene.hpp"

namespace hdrsplat {

/// Tone mapper f: f_tm maps log radiance to a (global, local) LDR pair, f_mix fuses pairs.
struct ToneMapperParams {
    MlpParams f_tm;
    MlpParams f_mix;
    bool frozen_mix = false;
};

/// Everything the trainer optimizes.
struct Model {
    GaussianCloud cloud;
    MlpParams composer;   // g: (L_a, H_r) -> color
    MlpParams modulator;  // phi: (L_a, l) -> virtual illumination
    ToneMapperParams tonemapper;
};

/// Layer sizes (input first, output last).
inline constexpr int kComposerDims[] = {kIlluminationDim + kReflectanceDim, 32, 32, 3};
inline constexpr int kModulatorDims[] = {kIlluminationDim + 1, 16, 3};
inline constexpr int kToneMapDims[] = {3, 32, 32, 6};
inline constexpr int kFusionDims[] = {6, 32, 3};

/// Fresh networks around an existing cloud.
Model make_model(GaussianCloud cloud, std::uint64_t seed);

/// Same shapes as `m`, every parameter zero. Used as a gradient container.
Model zeros_like(const Model& m);
void set_zero(Model& m);

enum class ParamGroup {
    Position,
    Scale,
    Rotation,
    Opacity,
    Reflectance,
    Illumination,
    Composer,
    Modulator,
    ToneMap,
    Fusion,
};

const char* to_string(ParamGroup g);

struct ParamRef {
    std::string id;  // e.g. "cloud.mu", "composer.1.weight"
    ParamGroup group;
    std::span<double> values;
};

struct ConstParamRef {
    std::string id;
    ParamGroup group;
    std::span<const double> values;
};

/// Every learnable array in a fixed order.
std::vector<ParamRef> param_refs(Model& m);
std::vector<ConstParamRef> param_refs(const Model& m);

std::size_t parameter_count(const Model& m);

}  // namespace hdrsplat
