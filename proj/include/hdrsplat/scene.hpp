#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "hdrsplat/image.hpp"
#include "hdrsplat/linalg.hpp"

namespace hdrsplat {

inline constexpr int kReflectanceDim = 8;
inline constexpr int kIlluminationDim = 3;

/// The learnable scene. All arrays are flat, row-major per Gaussian.
struct GaussianCloud {
    std::vector<double> mu;             // N x 3, world-space centers
    std::vector<double> log_scale;      // N x 3, exp -> axis scales
    std::vector<double> rotation;       // N x 4, quaternion (w, x, y, z)
    std::vector<double> opacity_logit;  // N, sigmoid -> alpha
    std::vector<double> h_r;            // N x 8, reflectance feature
    std::vector<double> l_a_raw;        // N x 3, softplus -> ambient illumination

    std::size_t size() const { return opacity_logit.size(); }
    void resize(std::size_t n);

    Vec3 center(std::size_t i) const { return {mu[3 * i], mu[3 * i + 1], mu[3 * i + 2]}; }
    Vec3 scale_log(std::size_t i) const { return {log_scale[3 * i], log_scale[3 * i + 1], log_scale[3 * i + 2]}; }
    Quat quat(std::size_t i) const {
        return {rotation[4 * i], rotation[4 * i + 1], rotation[4 * i + 2], rotation[4 * i + 3]};
    }
    double alpha(std::size_t i) const { return sigmoid(opacity_logit[i]); }
    Vec3 ambient(std::size_t i) const {
        return {softplus(l_a_raw[3 * i]), softplus(l_a_raw[3 * i + 1]), softplus(l_a_raw[3 * i + 2])};
    }

    /// Throws std::invalid_argument when array lengths disagree.
    void validate() const;
};

/// Rescales every quaternion to unit length.
void renormalize_rotations(GaussianCloud& cloud);

/// Pinhole camera. Camera space is x right, y down, z forward; pixel (px, py)
/// has its center at (px + 0.5, py + 0.5).
struct Camera {
    int width = 0;
    int height = 0;
    double fx = 1, fy = 1, cx = 0, cy = 0;
    std::array<double, 16> world_to_cam{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
    double near = 0.01;
    double far = 100.0;

    Mat3 rotation() const {
        const auto& m = world_to_cam;
        return {m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]};
    }
    Vec3 translation() const { return {world_to_cam[3], world_to_cam[7], world_to_cam[11]}; }
    Vec3 to_camera(const Vec3& p) const { return matvec(rotation(), p) + translation(); }

    /// Camera at `eye` looking at `target`; `up` is a world-space hint.
    static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int width, int height, double focal);

    /// Throws std::invalid_argument unless fx, fy > 0, 0 < near < far and the image is non-empty.
    void validate() const;
};

/// One observation: a camera at exposure t with its LDR ground truth.
/// gt_hdr exists for evaluation only; training code takes TrainingPose,
/// which has no HDR field.
struct ViewRecord {
    int pose = 0;
    Camera camera;
    double exposure_t = 1.0;
    double lighting_l = 1.0;
    ImageBuffer gt_ldr;
    std::optional<ImageBuffer> gt_hdr;
};

struct InitConfig {
    double opacity = 0.1;
    double ambient = 1.0;
    double reflectance_std = 0.1;
    int nearest_neighbors = 3;
    /// Isotropic scale used when there is a single seed point.
    double lone_point_scale = 0.1;
    std::uint64_t seed = 0;
};

/// Builds an isotropic cloud on the seed points.
GaussianCloud init_cloud(std::span<const Vec3> seed_points, const InitConfig& config);

/// Sigma = R S S^T R^T with S = diag(exp(log_scale)). The quaternion is
/// normalized internally, so q and -q (and any positive multiple) agree.
Mat3 covariance(const Vec3& log_scale, const Quat& rotation);

struct CovarianceGrad {
    Vec3 log_scale{};
    Quat rotation{0, 0, 0, 0};
};

/// VJP of covariance() for a (symmetric) cotangent on Sigma.
CovarianceGrad covariance_vjp(const Vec3& log_scale, const Quat& rotation, const Mat3& d_sigma);

}  // namespace hdrsplat
