#include <gtest/gtest.h>

#include <random>

#include "helpers.hpp"
#include "hdrsplat/gradengine.hpp"
#include "hdrsplat/parallel.hpp"
#include "hdrsplat/rasterizer.hpp"

using namespace hdrsplat;

namespace {

GaussianCloud oracle_pair() {
    GaussianCloud c;
    c.resize(2);
    c.mu = {0.1, -0.2, 0.3, -0.15, 0.05, -0.4};
    c.log_scale = {std::log(0.2), std::log(0.3), std::log(0.25), std::log(0.35), std::log(0.15), std::log(0.2)};
    c.rotation = {0.9, 0.1, -0.2, 0.3, 0.7, -0.3, 0.2, 0.1};
    c.opacity_logit = {0.4, 1.2};
    return c;
}

const std::vector<double> kOracleColors{1.0, 0.5, 0.25, 0.2, 0.9, 0.6};

Camera front_camera(int size = 8) { return Camera::look_at({0, 0, -3}, {0, 0, 0}, {0, -1, 0}, size, size, 10); }

}  // namespace

TEST(Rasterizer, ExactCompositeMatchesIndependentReference) {
    const Camera cam = front_camera();
    const RasterConfig cfg = RasterConfig::exact();
    const Projection p = project(oracle_pair(), cam, cfg);
    const ImageBuffer img = composite(p.splats, kOracleColors, cam, cfg);
    const struct {
        int x, y;
        double rgb[3];
    } expected[] = {
        {3, 4, {0.21716170385477665, 0.6865692597610317, 0.45165745634932397}},
        {4, 3, {0.44007927974877137, 0.5119854869043935, 0.3107325897703232}},
        {0, 0, {4.095393808393145e-06, 1.8203833494387267e-05, 1.2131192357854388e-05}},
        {5, 5, {0.028033563858398967, 0.08290442622569878, 0.05436864641844301}},
    };
    for (const auto& e : expected)
        for (int c = 0; c < 3; ++c) EXPECT_NEAR(img.at(e.x, e.y, c), e.rgb[c], 1e-14) << e.x << "," << e.y;
}

TEST(Rasterizer, SortsByDepthThenIndex) {
    GaussianCloud c = oracle_pair();
    const Projection p = project(c, front_camera(), RasterConfig{});
    ASSERT_EQ(p.splats.size(), 2u);
    EXPECT_EQ(p.splats[0].index, 1u);  // z = -0.4 is nearer
    c.mu[2] = c.mu[5];
    const Projection q = project(c, front_camera(), RasterConfig{});
    EXPECT_EQ(q.splats[0].index, 0u);
}

TEST(Rasterizer, CullsBehindCameraAndBeyondFar) {
    GaussianCloud c = oracle_pair();
    c.mu[2] = -3.5;
    Camera cam = front_camera();
    Projection p = project(c, cam, RasterConfig{});
    EXPECT_EQ(p.splats.size(), 1u);
    EXPECT_EQ(p.in_frustum[0], 0);
    cam.far = 2.0;
    p = project(oracle_pair(), cam, RasterConfig{});
    EXPECT_TRUE(p.splats.empty());
}

TEST(Rasterizer, EmptySceneShowsBackground) {
    GaussianCloud c;
    const Camera cam = front_camera(4);
    RasterConfig cfg;
    cfg.background = {0.1, 0.2, 0.3};
    const Projection p = project(c, cam, cfg);
    const ImageBuffer img = composite(p.splats, {}, cam, cfg);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) EXPECT_DOUBLE_EQ(img.at(x, y, 2), 0.3);
}

TEST(Rasterizer, BackgroundWeightedByFinalTransmittance) {
    const Camera cam = front_camera();
    RasterConfig cfg = RasterConfig::exact();
    const Projection p = project(oracle_pair(), cam, cfg);
    const RasterState st = rasterize(p.splats, cam, cfg);
    const ImageBuffer black = shade(st, p.splats, kOracleColors, {0, 0, 0});
    const ImageBuffer grey = shade(st, p.splats, kOracleColors, {0.5, 0.5, 0.5});
    const auto weight = accumulated_weight(st, p.splats);
    for (std::size_t px = 0; px < weight.size(); ++px) {
        EXPECT_NEAR(weight[px] + st.final_transmittance[px], 1.0, 1e-14);
        EXPECT_NEAR(grey.data[3 * px] - black.data[3 * px], 0.5 * st.final_transmittance[px], 1e-15);
    }
}

TEST(Rasterizer, FastPathMatchesNaiveCompositorOnRandomScenes) {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> n_dist(1, 16), size_dist(4, 32);
    RasterConfig cfg;
    cfg.min_transmittance = 0.0;
    cfg.alpha_skip = 0.0;
    cfg.bbox_sigma = std::numeric_limits<double>::infinity();
    double worst = 0;
    for (int trial = 0; trial < 25; ++trial) {
        const GaussianCloud c = fixtures::random_cloud(n_dist(rng), rng, 0.8);
        const int w = size_dist(rng), h = size_dist(rng);
        const Camera cam = Camera::look_at({0.3, -0.2, -3}, {0, 0, 0}, {0, -1, 0}, w, h, 1.2 * w);
        std::vector<double> colors(3 * c.size());
        for (double& v : colors) v = std::uniform_real_distribution<double>(0, 2)(rng);
        const Projection p = project(c, cam, cfg);
        const ImageBuffer fast = composite(p.splats, colors, cam, cfg);
        const ImageBuffer ref = composite_reference(p.splats, colors, cam, cfg.background);
        for (std::size_t k = 0; k < fast.data.size(); ++k) worst = std::max(worst, std::abs(fast.data[k] - ref.data[k]));
    }
    EXPECT_LT(worst, 1e-12);
}

TEST(Rasterizer, DefaultBoundingBoxStaysCloseToExact) {
    std::mt19937_64 rng(12);
    const GaussianCloud c = fixtures::random_cloud(10, rng);
    const Camera cam = front_camera(24);
    std::vector<double> colors(3 * c.size(), 1.0);
    const RasterConfig fast_cfg;
    const RasterConfig exact = RasterConfig::exact();
    const ImageBuffer a = composite(project(c, cam, fast_cfg).splats, colors, cam, fast_cfg);
    const ImageBuffer b = composite(project(c, cam, exact).splats, colors, cam, exact);
    for (std::size_t k = 0; k < a.data.size(); ++k) EXPECT_NEAR(a.data[k], b.data[k], 0.03);
}

TEST(Rasterizer, DeterministicAcrossThreadCounts) {
    std::mt19937_64 rng(13);
    const GaussianCloud c = fixtures::random_cloud(12, rng);
    const Camera cam = front_camera(29);
    std::vector<double> colors(3 * c.size(), 0.7);
    const RasterConfig cfg;
    set_worker_threads(1);
    const ImageBuffer a = composite(project(c, cam, cfg).splats, colors, cam, cfg);
    set_worker_threads(4);
    const ImageBuffer b = composite(project(c, cam, cfg).splats, colors, cam, cfg);
    set_worker_threads(1);
    EXPECT_EQ(a.data, b.data);
}

namespace {

struct Weighted {
    ImageBuffer weights;
    double operator()(const ImageBuffer& img) const {
        double s = 0;
        for (std::size_t k = 0; k < img.data.size(); ++k) s += weights.data[k] * img.data[k];
        return s;
    }
};

}  // namespace

TEST(Rasterizer, BackwardMatchesCentralDifferences) {
    std::mt19937_64 rng(14);
    GaussianCloud c = fixtures::random_cloud(4, rng, 0.4);
    const Camera cam = Camera::look_at({0.4, 0.3, -3}, {0, 0, 0}, {0, -1, 0}, 10, 9, 12);
    RasterConfig cfg = RasterConfig::exact();
    cfg.background = {0.2, 0.1, 0.3};
    std::vector<double> colors(3 * c.size());
    for (double& v : colors) v = std::uniform_real_distribution<double>(0, 1)(rng);
    const Weighted loss{fixtures::random_image(10, 9, rng, -1, 1)};

    const Projection p = project(c, cam, cfg);
    const RasterState st = rasterize(p.splats, cam, cfg);
    std::vector<double> d_colors(colors.size(), 0.0);
    const ShadeBranch branch{colors, &loss.weights, &d_colors};
    const SplatGrads sg = composite_backward(st, p.splats, std::span(&branch, 1), cfg.background);
    GaussianCloud grad = c;
    for (auto* f : {&grad.mu, &grad.log_scale, &grad.rotation, &grad.opacity_logit, &grad.h_r, &grad.l_a_raw})
        std::fill(f->begin(), f->end(), 0.0);
    std::vector<double> ndc;
    std::vector<std::uint8_t> vis;
    project_backward(c, cam, p, sg, grad, ndc, vis);

    const auto render_loss = [&](const GaussianCloud& cc, std::span<const double> col) {
        const Projection pp = project(cc, cam, cfg);
        return loss(composite(pp.splats, col, cam, cfg));
    };
    EXPECT_LT(finite_diff_check([&](std::span<const double> col) { return render_loss(c, col); }, colors, d_colors)
                  .max_relative_error,
              1e-6);
    for (auto field : {&GaussianCloud::mu, &GaussianCloud::log_scale, &GaussianCloud::rotation,
                       &GaussianCloud::opacity_logit}) {
        const auto f = [&](std::span<const double> v) {
            GaussianCloud cc = c;
            std::copy(v.begin(), v.end(), (cc.*field).begin());
            return render_loss(cc, colors);
        };
        EXPECT_LT(finite_diff_check(f, c.*field, grad.*field).max_relative_error, 1e-5);
    }
    EXPECT_EQ(ndc.size(), c.size());
    for (std::size_t i = 0; i < c.size(); ++i)
        if (vis[i]) { EXPECT_GT(ndc[i], 0.0); }
}
