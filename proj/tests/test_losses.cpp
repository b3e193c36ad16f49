#include <gtest/gtest.h>

#include <random>

#include "helpers.hpp"
#include "hdrsplat/gradengine.hpp"
#include "hdrsplat/losses.hpp"

using namespace hdrsplat;

namespace {

ImageBuffer with(const ImageBuffer& base, std::span<const double> x) {
    ImageBuffer img = base;
    std::copy(x.begin(), x.end(), img.data.begin());
    return img;
}

double dot(const ImageBuffer& a, const ImageBuffer& b) {
    double s = 0;
    for (std::size_t k = 0; k < a.data.size(); ++k) s += a.data[k] * b.data[k];
    return s;
}

}  // namespace

TEST(Kernel, NormalizedWithOracleCenter) {
    const auto k = gaussian_kernel(1.5, 5);
    ASSERT_EQ(k.size(), 11u);
    double s = 0;
    for (double v : k) s += v;
    EXPECT_NEAR(s, 1.0, 1e-15);
    EXPECT_NEAR(k[5], 0.26601172486179436, 1e-15);
    EXPECT_DOUBLE_EQ(k[0], k[10]);
    EXPECT_THROW(gaussian_kernel(0.0, 5), std::invalid_argument);
}

TEST(Kernel, ReflectIndexSkipsEdge) {
    EXPECT_EQ(reflect_index(-1, 8), 1);
    EXPECT_EQ(reflect_index(-3, 8), 3);
    EXPECT_EQ(reflect_index(8, 8), 6);
    EXPECT_EQ(reflect_index(9, 8), 5);
    EXPECT_EQ(reflect_index(4, 8), 4);
}

TEST(Blur, AdjointSatisfiesDotProductIdentity) {
    std::mt19937_64 rng(1);
    const auto taps = gaussian_kernel(2.0, 5);
    for (auto [w, h] : {std::pair{13, 9}, std::pair{6, 4}}) {
        const ImageBuffer x = fixtures::random_image(w, h, rng, -1, 1), y = fixtures::random_image(w, h, rng, -1, 1);
        EXPECT_NEAR(dot(blur(x, taps), y), dot(x, blur_adjoint(y, taps)), 1e-12);
    }
}

TEST(Blur, PreservesConstants) {
    const ImageBuffer c(9, 7, ColorSpace::LinearHdr, 0.42);
    for (double v : blur(c, gaussian_kernel(2.0, 5)).data) EXPECT_NEAR(v, 0.42, 1e-15);
}

TEST(Ssim, MatchesMirrorPaddedOracle) {
    EXPECT_NEAR(ssim(fixtures::formula_a(16, 16), fixtures::formula_b(16, 16)), 0.9706843396813992, 1e-12);
}

TEST(Ssim, IdenticalImagesGiveOneAndConstantsMatchClosedForm) {
    const ImageBuffer a = fixtures::formula_a(12, 12);
    EXPECT_NEAR(ssim(a, a), 1.0, 1e-14);
    EXPECT_NEAR(dssim(a, a), 0.0, 1e-14);
    EXPECT_NEAR(ssim(ImageBuffer(12, 12, ColorSpace::LdrUnit, 0.3), ImageBuffer(12, 12, ColorSpace::LdrUnit, 0.6)),
                0.8000444345700956, 1e-13);
}

TEST(Ssim, GradientMatchesCentralDifferences) {
    std::mt19937_64 rng(2);
    const ImageBuffer a = fixtures::random_image(7, 6, rng), b = fixtures::random_image(7, 6, rng);
    ImageBuffer g;
    dssim(a, b, &g);
    const auto f = [&](std::span<const double> x) { return dssim(with(a, x), b); };
    EXPECT_LT(finite_diff_check(f, a.data, g.data, 1e-6).max_relative_error, 1e-6);
}

TEST(Mse, ValueAndGradient) {
    std::mt19937_64 rng(3);
    const ImageBuffer a = fixtures::random_image(5, 4, rng), b = fixtures::random_image(5, 4, rng);
    ImageBuffer g;
    const double v = mse(a, b, &g);
    double ref = 0;
    for (std::size_t k = 0; k < a.data.size(); ++k) ref += (a.data[k] - b.data[k]) * (a.data[k] - b.data[k]);
    EXPECT_NEAR(v, ref / a.data.size(), 1e-15);
    const auto f = [&](std::span<const double> x) { return mse(with(a, x), b); };
    EXPECT_LT(finite_diff_check(f, a.data, g.data).max_relative_error, 1e-7);
    EXPECT_THROW(mse(a, ImageBuffer(4, 4)), std::invalid_argument);
}

TEST(Consistency, MatchesOracle) {
    const auto taps = gaussian_kernel(2.0, 5);
    EXPECT_NEAR(consistency_loss(fixtures::formula_a(16, 16), fixtures::formula_b(16, 16), taps), 0.011229158399689536,
                1e-14);
}

TEST(Consistency, ZeroForEqualImagesAndSymmetric) {
    std::mt19937_64 rng(4);
    const auto taps = gaussian_kernel(2.0, 5);
    const ImageBuffer a = fixtures::random_image(10, 8, rng), b = fixtures::random_image(10, 8, rng);
    ImageBuffer da, db;
    EXPECT_EQ(consistency_loss(a, a, taps, &da, &db), 0.0);
    for (double v : da.data) EXPECT_EQ(v, 0.0);
    EXPECT_DOUBLE_EQ(consistency_loss(a, b, taps), consistency_loss(b, a, taps));
}

TEST(Consistency, IgnoresDetailRemovedByBlur) {
    // a constant offset survives blurring, a fine checkerboard mostly does not
    const auto taps = gaussian_kernel(2.0, 5);
    ImageBuffer base(32, 32, ColorSpace::LinearHdr, 0.5), checker = base, shifted = base;
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
            for (int c = 0; c < 3; ++c) {
                checker.at(x, y, c) += ((x + y) % 2 ? 0.1 : -0.1);
                shifted.at(x, y, c) += 0.1;
            }
    EXPECT_LT(consistency_loss(base, checker, taps), 0.1 * consistency_loss(base, shifted, taps));
}

TEST(Consistency, GradientsMatchCentralDifferences) {
    std::mt19937_64 rng(5);
    const auto taps = gaussian_kernel(2.0, 5);
    const ImageBuffer a = fixtures::random_image(8, 7, rng), b = fixtures::random_image(8, 7, rng);
    ImageBuffer da, db;
    consistency_loss(a, b, taps, &da, &db);
    EXPECT_LT(finite_diff_check([&](auto x) { return consistency_loss(with(a, x), b, taps); }, a.data, da.data)
                  .max_relative_error,
              1e-6);
    EXPECT_LT(finite_diff_check([&](auto x) { return consistency_loss(a, with(b, x), taps); }, b.data, db.data)
                  .max_relative_error,
              1e-6);
}

TEST(Reconstruction, SumsThreeImagesAndDifferentiates) {
    std::mt19937_64 rng(6);
    LdrOutputs o;
    o.i_ldr = fixtures::random_image(6, 6, rng);
    o.i_ig = fixtures::random_image(6, 6, rng);
    o.i_gi = fixtures::random_image(6, 6, rng);
    const ImageBuffer gt = fixtures::random_image(6, 6, rng);
    ReconstructionGrads g;
    const double v = reconstruction_loss(o, gt, 0.2, &g);
    double ref = 0;
    for (const ImageBuffer* img : {&o.i_ldr, &o.i_ig, &o.i_gi}) ref += 0.2 * mse(*img, gt) + dssim(*img, gt);
    EXPECT_NEAR(v, ref, 1e-14);
    const auto f = [&](std::span<const double> x) {
        LdrOutputs q = o;
        q.i_ig = with(o.i_ig, x);
        return reconstruction_loss(q, gt, 0.2);
    };
    EXPECT_LT(finite_diff_check(f, o.i_ig.data, g.d_ig.data, 1e-6).max_relative_error, 1e-6);
}

TEST(Total, WeightsCombine) {
    LossWeights w;
    w.lambda1 = 1;
    w.lambda2 = 0.5;
    w.lambda3 = 0.25;
    const LossBreakdown b = total_loss(2, 4, 8, w);
    EXPECT_DOUBLE_EQ(b.total, 2 + 2 + 2);
    w.lambda2 = -1;
    EXPECT_THROW(w.validate(), std::invalid_argument);
}
