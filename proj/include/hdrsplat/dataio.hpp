#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "hdrsplat/image.hpp"
#include "hdrsplat/rasterizer.hpp"
#include "hdrsplat/scene.hpp"

namespace hdrsplat {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::array<double, 5> kExposureLadder{0.25, 0.5, 1.0, 2.0, 4.0};
/// Exposures seen in training (t1, t3, t5).
inline constexpr std::array<double, 3> kTrainExposures{0.25, 1.0, 4.0};

/// Reference camera response: clamp(x, 0, 1)^(1/2.2).
double reference_crf(double x);
ImageBuffer expose(const ImageBuffer& hdr, double t);

struct SceneSpec {
    std::uint64_t seed = 7;
    int n_gaussians = 48;
    int image_size = 64;
    int n_views = 12;
    int test_every = 3;          // every third pose is held out
    int seed_points_per_gaussian = 2;
    double ring_radius = 4.0;
    double focal_scale = 1.25;   // focal = focal_scale * image_size
    double min_radiance = 0.02;  // HDR radiance range of the ground truth
    double max_radiance = 4.0;

    void validate() const;
};

struct SyntheticScene {
    SceneSpec spec;
    GaussianCloud gt_cloud;          // geometry and opacity of the ground truth
    std::vector<double> radiance;    // N x 3 true HDR colors
    std::vector<Camera> cameras;
    std::vector<std::uint8_t> is_test;  // per pose
    std::vector<Vec3> seed_points;
    double extent = 1.0;

    /// Ground-truth HDR image of a pose.
    ImageBuffer render_hdr(std::size_t pose) const;
};

/// Observations of a scene: train views carry only {t1, t3, t5}; test views
/// carry all five exposures.
struct SceneViews {
    std::vector<ViewRecord> train;
    std::vector<ViewRecord> test;
};

SyntheticScene generate_scene(const SceneSpec& spec);
SceneViews make_views(const SyntheticScene& scene);

/// A scene as read back from disk.
struct LoadedScene {
    SceneSpec spec;
    std::vector<Camera> cameras;
    std::vector<Vec3> seed_points;
    double extent = 1.0;
    Vec3 background{0, 0, 0};
    SceneViews views;
};

/// Writes manifest.txt, points.csv, per-pose HDR PFMs and per-view LDR PPMs.
void write_scene(const std::filesystem::path& dir, const SyntheticScene& scene, const SceneViews& views);
LoadedScene load_scene(const std::filesystem::path& dir);

// Image files
void write_pfm(const std::filesystem::path& path, const ImageBuffer& img);
ImageBuffer read_pfm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const ImageBuffer& img);
ImageBuffer read_ppm(const std::filesystem::path& path);
std::uint8_t encode_ldr(double v);
double decode_ldr(std::uint8_t b);

// Metrics
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();
/// -10 log10(MSE) for unit-range images; +inf when identical.
double psnr(const ImageBuffer& a, const ImageBuffer& b);
/// Mean SSIM over valid 11x11 windows (sigma 1.5) and channels.
double ssim_metric(const ImageBuffer& a, const ImageBuffer& b);

}  // namespace hdrsplat
