#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <vector>

#include "hdrsplat/linalg.hpp"
#include "hdrsplat/scene.hpp"

namespace hdrsplat {

struct DensifyConfig {
    double tau_p = 0.03;
    double s = 1.0;                   // gradient-scaling strength, 0 disables the illumination term
    double scale_threshold = 0.01;    // fraction of the scene extent separating clone from split
    double prune_opacity = 0.005;
    double split_factor = 1.6;
    int interval = 50;
    int start_iter = 200;
    int stop_iter = 1500;
    std::size_t max_gaussians = 20000;

    void validate() const;
    bool active_at(int iteration) const;
};

struct DensifyState {
    DensifyConfig config;
    std::vector<double> grad_accum;           // sum of NDC gradient norms
    std::vector<std::uint32_t> visible_count;  // M_i
    std::vector<double> last_l_a;             // N x 3
    std::vector<double> last_l_hat;           // N x 3

    std::size_t size() const { return grad_accum.size(); }
    void resize(std::size_t n);
    void reset_accumulators();
    double average_gradient(std::size_t i) const;
    double deviation(std::size_t i) const;
    double scale_factor(std::size_t i) const;
};

/// Mean absolute componentwise difference.
double illumination_deviation(const Vec3& l_a, const Vec3& l_hat);

/// s * sigmoid(deviation) + 1
double scale_factor(const Vec3& l_a, const Vec3& l_hat, double s);

/// Adds one view's samples. `visible[i]` marks Gaussians with nonzero
/// compositing weight in the view; only those get a sample.
void accumulate(DensifyState& state, std::span<const double> ndc_norm, std::span<const std::uint8_t> visible,
                std::span<const double> l_a, std::span<const double> l_hat);

bool should_densify(std::size_t i, const DensifyState& state);

/// Where a Gaussian of the new cloud came from.
struct Lineage {
    std::size_t parent;  // index in the old cloud
    bool fresh;          // created or split this round; optimizer moments start at zero
};

struct DensifyReport {
    std::size_t cloned = 0;
    std::size_t split = 0;
    std::size_t pruned = 0;
    bool capped = false;
    std::vector<Lineage> lineage;  // one entry per Gaussian of the updated cloud
};

/// Clone small flagged Gaussians, split large ones, prune transparent ones,
/// then reset accumulators. `scene_extent` scales the clone/split threshold.
DensifyReport densify_and_prune(GaussianCloud& cloud, DensifyState& state, double scene_extent,
                                std::mt19937_64& rng);

/// CSV with header `index,avg_grad,deviation,s_a,densified`.
void write_densify_stats(std::ostream& os, const DensifyState& state);

}  // namespace hdrsplat
