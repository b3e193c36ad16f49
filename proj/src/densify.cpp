#include "hdrsplat/densify.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace hdrsplat {

void DensifyConfig::validate() const {
    if (!(tau_p > 0)) throw std::invalid_argument("densify: tau_p must be positive");
    if (!(s >= 0)) throw std::invalid_argument("densify: s must be non-negative");
    if (!(scale_threshold > 0) || !(split_factor > 1)) throw std::invalid_argument("densify: invalid split settings");
    if (!(prune_opacity >= 0 && prune_opacity < 1)) throw std::invalid_argument("densify: prune opacity outside [0,1)");
    if (interval <= 0) throw std::invalid_argument("densify: interval must be positive");
    if (start_iter < 0 || stop_iter < start_iter) throw std::invalid_argument("densify: invalid iteration window");
}

bool DensifyConfig::active_at(int iteration) const {
    return iteration >= start_iter && iteration <= stop_iter && iteration % interval == 0;
}

void DensifyState::resize(std::size_t n) {
    grad_accum.assign(n, 0.0);
    visible_count.assign(n, 0);
    last_l_a.assign(3 * n, 0.0);
    last_l_hat.assign(3 * n, 0.0);
}

void DensifyState::reset_accumulators() {
    std::fill(grad_accum.begin(), grad_accum.end(), 0.0);
    std::fill(visible_count.begin(), visible_count.end(), 0u);
}

double DensifyState::average_gradient(std::size_t i) const {
    return visible_count[i] == 0 ? 0.0 : grad_accum[i] / visible_count[i];
}

double DensifyState::deviation(std::size_t i) const {
    const Vec3 a{last_l_a[3 * i], last_l_a[3 * i + 1], last_l_a[3 * i + 2]};
    const Vec3 b{last_l_hat[3 * i], last_l_hat[3 * i + 1], last_l_hat[3 * i + 2]};
    return illumination_deviation(a, b);
}

double DensifyState::scale_factor(std::size_t i) const { return config.s * sigmoid(deviation(i)) + 1.0; }

double illumination_deviation(const Vec3& l_a, const Vec3& l_hat) {
    return (std::abs(l_a[0] - l_hat[0]) + std::abs(l_a[1] - l_hat[1]) + std::abs(l_a[2] - l_hat[2])) / 3.0;
}

double scale_factor(const Vec3& l_a, const Vec3& l_hat, double s) {
    if (!(s >= 0)) throw std::invalid_argument("scale_factor: s must be non-negative");
    return s * sigmoid(illumination_deviation(l_a, l_hat)) + 1.0;
}

void accumulate(DensifyState& state, std::span<const double> ndc_norm, std::span<const std::uint8_t> visible,
                std::span<const double> l_a, std::span<const double> l_hat) {
    const std::size_t n = state.size();
    if (ndc_norm.size() != n || visible.size() != n || l_a.size() != 3 * n || l_hat.size() != 3 * n)
        throw std::invalid_argument("densify accumulate: array length mismatch");
    for (std::size_t i = 0; i < n; ++i) {
        if (!visible[i]) continue;
        state.grad_accum[i] += ndc_norm[i];
        state.visible_count[i] += 1;
    }
    std::copy(l_a.begin(), l_a.end(), state.last_l_a.begin());
    std::copy(l_hat.begin(), l_hat.end(), state.last_l_hat.begin());
}

bool should_densify(std::size_t i, const DensifyState& state) {
    if (state.visible_count[i] == 0) return false;
    return state.scale_factor(i) * state.average_gradient(i) > state.config.tau_p;
}

namespace {

void append_copy(GaussianCloud& dst, const GaussianCloud& src, std::size_t i) {
    for (int k = 0; k < 3; ++k) {
        dst.mu.push_back(src.mu[3 * i + k]);
        dst.log_scale.push_back(src.log_scale[3 * i + k]);
        dst.l_a_raw.push_back(src.l_a_raw[3 * i + k]);
    }
    for (int k = 0; k < 4; ++k) dst.rotation.push_back(src.rotation[4 * i + k]);
    dst.opacity_logit.push_back(src.opacity_logit[i]);
    for (int k = 0; k < kReflectanceDim; ++k) dst.h_r.push_back(src.h_r[kReflectanceDim * i + k]);
}

// mu + R S z with z ~ N(0, I), scale taken before any shrink
Vec3 sample_offset(const GaussianCloud& c, std::size_t i, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    const Vec3 z{normal(rng), normal(rng), normal(rng)};
    const Vec3 sz{std::exp(c.log_scale[3 * i]) * z[0], std::exp(c.log_scale[3 * i + 1]) * z[1],
                  std::exp(c.log_scale[3 * i + 2]) * z[2]};
    return matvec(rotation_matrix(c.quat(i)), sz);
}

void set_mu(GaussianCloud& c, std::size_t j, const Vec3& p) {
    for (int k = 0; k < 3; ++k) c.mu[3 * j + k] = p[k];
}

}  // namespace

DensifyReport densify_and_prune(GaussianCloud& cloud, DensifyState& state, double scene_extent,
                                std::mt19937_64& rng) {
    state.config.validate();
    const std::size_t n = cloud.size();
    if (state.size() != n) throw std::invalid_argument("densify_and_prune: state and cloud sizes differ");

    DensifyReport report;
    std::vector<std::uint8_t> flagged(n, 0);
    std::size_t n_flagged = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (should_densify(i, state)) flagged[i] = 1, ++n_flagged;
    if (n + n_flagged > state.config.max_gaussians) {
        spdlog::warn("densification skipped: {} + {} Gaussians would exceed the cap of {}", n, n_flagged,
                     state.config.max_gaussians);
        std::fill(flagged.begin(), flagged.end(), 0);
        report.capped = true;
    }

    const double threshold = state.config.scale_threshold * scene_extent;
    const double shrink = std::log(state.config.split_factor);
    GaussianCloud next;
    std::vector<Lineage> lineage;
    lineage.reserve(n + n_flagged);
    std::vector<std::size_t> children;  // parents of appended Gaussians, in order
    std::vector<std::uint8_t> child_is_split;

    for (std::size_t i = 0; i < n; ++i) {
        append_copy(next, cloud, i);
        lineage.push_back({i, false});
        if (!flagged[i]) continue;
        const double max_scale = std::exp(std::max({cloud.log_scale[3 * i], cloud.log_scale[3 * i + 1],
                                                    cloud.log_scale[3 * i + 2]}));
        const std::size_t self = next.size() - 1;
        if (max_scale <= threshold) {
            children.push_back(i);
            child_is_split.push_back(0);
            ++report.cloned;
        } else {
            // parent becomes one half in place
            set_mu(next, self, cloud.center(i) + sample_offset(cloud, i, rng));
            for (int k = 0; k < 3; ++k) next.log_scale[3 * self + k] -= shrink;
            lineage.back().fresh = true;
            children.push_back(i);
            child_is_split.push_back(1);
            ++report.split;
        }
    }
    // children appended after all originals so surviving indices stay stable
    for (std::size_t c = 0; c < children.size(); ++c) {
        const std::size_t i = children[c];
        append_copy(next, cloud, i);
        const std::size_t j = next.size() - 1;
        set_mu(next, j, cloud.center(i) + sample_offset(cloud, i, rng));
        if (child_is_split[c])
            for (int k = 0; k < 3; ++k) next.log_scale[3 * j + k] -= shrink;
        lineage.push_back({i, true});
    }

    // prune
    GaussianCloud kept;
    std::vector<Lineage> kept_lineage;
    for (std::size_t j = 0; j < next.size(); ++j) {
        if (next.alpha(j) < state.config.prune_opacity) {
            ++report.pruned;
            continue;
        }
        append_copy(kept, next, j);
        kept_lineage.push_back(lineage[j]);
    }

    DensifyState remapped;
    remapped.config = state.config;
    remapped.resize(kept.size());
    for (std::size_t j = 0; j < kept.size(); ++j) {
        const std::size_t p = kept_lineage[j].parent;
        for (int k = 0; k < 3; ++k) {
            remapped.last_l_a[3 * j + k] = state.last_l_a[3 * p + k];
            remapped.last_l_hat[3 * j + k] = state.last_l_hat[3 * p + k];
        }
    }
    cloud = std::move(kept);
    state = std::move(remapped);
    report.lineage = std::move(kept_lineage);
    return report;
}

void write_densify_stats(std::ostream& os, const DensifyState& state) {
    os << "index,avg_grad,deviation,s_a,densified\n";
    for (std::size_t i = 0; i < state.size(); ++i)
        os << fmt::format("{},{:.17g},{:.17g},{:.17g},{}\n", i, state.average_gradient(i), state.deviation(i),
                          state.scale_factor(i), should_densify(i, state) ? 1 : 0);
}

}  // namespace hdrsplat
