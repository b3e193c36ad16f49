#include <gtest/gtest.h>

#include <random>

#include "hdrsplat/gradengine.hpp"
#include "hdrsplat/scene.hpp"

using namespace hdrsplat;

TEST(Covariance, SymmetricPositiveDefinite) {
    const Mat3 s = covariance({std::log(0.2), std::log(0.5), std::log(0.1)}, {0.8, 0.3, -0.2, 0.4});
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(s[3 * i + j], s[3 * j + i]);
    // leading principal minors
    EXPECT_GT(s[0], 0);
    EXPECT_GT(s[0] * s[4] - s[1] * s[3], 0);
    const double det = s[0] * (s[4] * s[8] - s[5] * s[7]) - s[1] * (s[3] * s[8] - s[5] * s[6]) +
                       s[2] * (s[3] * s[7] - s[4] * s[6]);
    EXPECT_NEAR(det, std::pow(0.2 * 0.5 * 0.1, 2), 1e-15);
}

TEST(Covariance, QuaternionSignAndScaleInvariant) {
    const Vec3 ls{0.1, -0.4, 0.2};
    const Mat3 a = covariance(ls, {0.8, 0.3, -0.2, 0.4});
    const Mat3 b = covariance(ls, {-0.8, -0.3, 0.2, -0.4});
    const Mat3 c = covariance(ls, {2.4, 0.9, -0.6, 1.2});
    for (int k = 0; k < 9; ++k) {
        EXPECT_NEAR(a[k], b[k], 1e-15);
        EXPECT_NEAR(a[k], c[k], 1e-14);
    }
}

TEST(Covariance, IdentityRotationIsDiagonal) {
    const Mat3 s = covariance({std::log(2.0), std::log(3.0), 0.0}, {});
    EXPECT_DOUBLE_EQ(s[0], 4.0);
    EXPECT_DOUBLE_EQ(s[4], 9.0);
    EXPECT_DOUBLE_EQ(s[8], 1.0);
    EXPECT_DOUBLE_EQ(s[1], 0.0);
}

TEST(Covariance, VjpMatchesCentralDifferences) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1, 1);
    Mat3 g;
    for (double& v : g) v = u(rng);
    const std::vector<double> x{0.1, -0.3, 0.2, 0.7, 0.2, -0.5, 0.3};
    const auto f = [&](std::span<const double> p) {
        const Mat3 s = covariance({p[0], p[1], p[2]}, {p[3], p[4], p[5], p[6]});
        double acc = 0;
        for (int k = 0; k < 9; ++k) acc += g[k] * s[k];
        return acc;
    };
    const CovarianceGrad cg = covariance_vjp({x[0], x[1], x[2]}, {x[3], x[4], x[5], x[6]}, g);
    const std::vector<double> analytic{cg.log_scale[0], cg.log_scale[1], cg.log_scale[2], cg.rotation.w,
                                       cg.rotation.x,   cg.rotation.y,   cg.rotation.z};
    EXPECT_LT(finite_diff_check(f, x, analytic).max_relative_error, 1e-7);
}

TEST(Camera, LookAtMapsTargetOntoOpticalAxis) {
    const Camera c = Camera::look_at({3, 1, -2}, {0.5, 0.2, 0.1}, {0, -1, 0}, 32, 24, 30);
    const Vec3 t = c.to_camera({0.5, 0.2, 0.1});
    EXPECT_NEAR(t[0], 0, 1e-14);
    EXPECT_NEAR(t[1], 0, 1e-14);
    EXPECT_NEAR(t[2], std::sqrt(2.5 * 2.5 + 0.8 * 0.8 + 2.1 * 2.1), 1e-14);
    EXPECT_DOUBLE_EQ(c.cx, 16);
    EXPECT_DOUBLE_EQ(c.cy, 12);
    const Mat3 r = c.rotation();
    const Mat3 rrt = matmul(r, transpose(r));
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) EXPECT_NEAR(rrt[3 * i + j], i == j ? 1.0 : 0.0, 1e-15);
}

TEST(Camera, ImageDownIsWorldUpHintNegated) {
    const Camera c = Camera::look_at({0, 0, -3}, {0, 0, 0}, {0, -1, 0}, 8, 8, 10);
    EXPECT_GT(c.to_camera({0, 1, 0})[1], 0);
    EXPECT_GT(c.to_camera({1, 0, 0})[0], 0);
}

TEST(Camera, ValidateRejectsBadIntrinsics) {
    Camera c;
    c.width = 4;
    c.height = 4;
    EXPECT_NO_THROW(c.validate());
    c.fx = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c.fx = 1;
    c.near = 5;
    c.far = 1;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(InitCloud, UsesNeighbourDistanceAndConfig) {
    const std::vector<Vec3> pts{{0, 0, 0}, {1, 0, 0}, {0, 2, 0}, {0, 0, 3}};
    InitConfig ic;
    ic.nearest_neighbors = 1;
    ic.opacity = 0.25;
    ic.ambient = 0.7;
    const GaussianCloud c = init_cloud(pts, ic);
    ASSERT_EQ(c.size(), 4u);
    EXPECT_NEAR(std::exp(c.log_scale[0]), 1.0, 1e-15);
    EXPECT_NEAR(std::exp(c.log_scale[3 * 3]), 3.0, 1e-14);
    EXPECT_NEAR(c.alpha(2), 0.25, 1e-15);
    EXPECT_NEAR(c.ambient(1)[2], 0.7, 1e-12);
    EXPECT_EQ(c.rotation[4], 1.0);
    EXPECT_THROW(init_cloud({}, ic), std::invalid_argument);
}

TEST(GaussianCloud, ValidateCatchesLengthMismatch) {
    GaussianCloud c;
    c.resize(3);
    EXPECT_NO_THROW(c.validate());
    c.h_r.pop_back();
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(GaussianCloud, RenormalizeRotations) {
    GaussianCloud c;
    c.resize(1);
    c.rotation = {2, 0, 0, 0};
    renormalize_rotations(c);
    EXPECT_DOUBLE_EQ(c.rotation[0], 1.0);
}
