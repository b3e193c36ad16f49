#pragma once

#include <cstdint>
#include <vector>

#include "hdrsplat/dataio.hpp"
#include "hdrsplat/gradengine.hpp"
#include "hdrsplat/pipeline.hpp"

namespace hdrsplat {

/// A small multi-view problem for finite-difference checks of the full pipeline.
struct GradcheckFixture {
    Model model;
    std::vector<Camera> cameras;
    std::vector<double> exposures;
    std::vector<ImageBuffer> gt_ldr;
    std::vector<ImageBuffer> gt_unit;
    PipelineOptions options;

    std::vector<PipelineSample> samples() const;
};

/// 5 perturbed Gaussians, two 8x8 views at t = 1/4 and t = 4, random targets.
GradcheckFixture make_gradcheck_fixture(std::uint64_t seed = 3);

/// Fixture built from a scene: the first `gaussians` seed points, the first
/// two training poses resampled to `size` x `size`.
GradcheckFixture fixture_from_scene(const LoadedScene& scene, int gaussians = 5, int size = 8, std::uint64_t seed = 3);

enum class GradOracle {
    Extended,  // independent naive long-double evaluator
    Double,    // the production forward pass in f64
};

struct GradcheckReport {
    FdCheckResult result;
    std::vector<std::pair<std::string, FdCheckResult>> per_param;
    std::size_t biases_moved = 0;
    double kink_distance = 0;
    double seconds = 0;
};

/// Moves hidden biases off the leaky-ReLU kinks, computes analytic gradients
/// over all views and compares them with central differences of the oracle.
GradcheckReport run_gradcheck(GradcheckFixture& fixture, const FdCheckOptions& options, GradOracle oracle);

}  // namespace hdrsplat
