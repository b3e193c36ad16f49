#include <gtest/gtest.h>

#include <random>

#include "helpers.hpp"
#include "hdrsplat/gradengine.hpp"
#include "hdrsplat/radiance.hpp"

using namespace hdrsplat;

namespace {

Model small_model(std::uint64_t seed, std::size_t n = 6) {
    std::mt19937_64 rng(seed);
    return make_model(fixtures::random_cloud(n, rng, 0.5), seed);
}

Camera cam(int w = 12, int h = 10) { return Camera::look_at({0.3, -0.4, -3}, {0, 0, 0}, {0, -1, 0}, w, h, 14); }

}  // namespace

TEST(Radiance, ExposureScalesImageExposureBranchExactly) {
    const Model m = small_model(1);
    const RasterConfig cfg;
    const BranchOutputs one = render_branches(m, cam(), 1.0, 1.0, cfg);
    const BranchOutputs two = render_branches(m, cam(), 2.0, 2.0, cfg);
    for (std::size_t k = 0; k < one.i_hdr.data.size(); ++k) {
        EXPECT_EQ(two.i_hdr.data[k], one.i_hdr.data[k]);
        EXPECT_EQ(two.i_hdr_scaled.data[k], 2.0 * one.i_hdr_scaled.data[k]);
    }
}

TEST(Radiance, LightingOnlyChangesRelitBranch) {
    const Model m = small_model(2);
    const BranchOutputs a = render_branches(m, cam(), 1.0, 0.25, RasterConfig{});
    const BranchOutputs b = render_branches(m, cam(), 1.0, 4.0, RasterConfig{});
    EXPECT_EQ(a.i_hdr_scaled.data, b.i_hdr_scaled.data);
    EXPECT_NE(a.i_hdr_relit.data, b.i_hdr_relit.data);
}

TEST(Radiance, DisabledIlluminationBranchCopiesScaledImage) {
    const Model m = small_model(3);
    const BranchOutputs o = render_branches(m, cam(), 4.0, 4.0, RasterConfig{}, nullptr, false);
    EXPECT_EQ(o.i_hdr_relit.data, o.i_hdr_scaled.data);
}

TEST(Radiance, ColorsAreNonNegative) {
    const Model m = small_model(4, 40);
    for (double c : compose_colors(m)) EXPECT_GT(c, 0.0);
}

TEST(Radiance, ComposeMatchesBatchedColors) {
    const Model m = small_model(5);
    std::vector<double> l_a;
    const auto colors = compose_colors(m, &l_a);
    const Vec3 one = compose({l_a[3], l_a[4], l_a[5]}, std::span(m.cloud.h_r).subspan(kReflectanceDim, kReflectanceDim),
                             m.composer);
    for (int k = 0; k < 3; ++k) EXPECT_DOUBLE_EQ(one[k], colors[3 + k]);
    EXPECT_THROW(compose(one, std::span(m.cloud.h_r).subspan(0, 3), m.composer), std::invalid_argument);
}

TEST(Radiance, RejectsNonPositiveExposure) {
    EXPECT_THROW(render_branches(small_model(6), cam(), 0.0, 1.0, RasterConfig{}), std::invalid_argument);
}

TEST(Radiance, BackwardMatchesCentralDifferences) {
    Model m = small_model(7, 4);
    const Camera c = cam(9, 8);
    RasterConfig cfg = RasterConfig::exact();
    std::mt19937_64 rng(8);
    const ImageBuffer w0 = fixtures::random_image(9, 8, rng, -1, 1);
    const ImageBuffer w1 = fixtures::random_image(9, 8, rng, -1, 1);
    const ImageBuffer w2 = fixtures::random_image(9, 8, rng, -1, 1);
    const auto loss = [&](const Model& mm) -> long double {
        const BranchOutputs o = render_branches(mm, c, 2.0, 0.5, cfg);
        long double s = 0;
        for (std::size_t k = 0; k < w0.data.size(); ++k)
            s += w0.data[k] * o.i_hdr.data[k] + w1.data[k] * o.i_hdr_scaled.data[k] + w2.data[k] * o.i_hdr_relit.data[k];
        return s;
    };
    BranchTrace tr;
    render_branches(m, c, 2.0, 0.5, cfg, &tr);
    Model grad = zeros_like(m);
    std::vector<double> ndc;
    std::vector<std::uint8_t> vis;
    render_branches_backward(m, c, cfg, tr, {&w0, &w1, &w2}, grad, ndc, vis);

    FdCheckOptions o;
    o.params = {"cloud", "composer", "modulator"};
    o.floor = 1e-6;
    const FdCheckResult r = finite_diff_check(loss, m, grad, o);
    EXPECT_LT(r.max_relative_error, 1e-4) << r.worst_param << "[" << r.worst_index << "] " << r.worst_analytic << " vs " << r.worst_numeric;
}
