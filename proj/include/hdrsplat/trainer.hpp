#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hdrsplat/dataio.hpp"
#include "hdrsplat/densify.hpp"
#include "hdrsplat/evaluation.hpp"
#include "hdrsplat/pipeline.hpp"

namespace hdrsplat {

enum class ExposureMode { Exp3, Exp1 };

const char* to_string(ExposureMode m);
ExposureMode exposure_mode_from_string(const std::string& s);

struct LearningRates {
    double position = 1.6e-4;  // times the scene extent, decays exponentially
    double position_final = 1.6e-6;
    double scale = 5e-3;
    double rotation = 1e-3;
    double opacity = 5e-2;
    double reflectance = 2.5e-3;
    double illumination = 2.5e-3;
    double composer = 4e-4;
    double modulator = 4e-4;
    double tonemapper = 1e-3;
};

struct TrainConfig {
    int max_iterations = 2000;
    LearningRates lr;
    int mix_unfreeze_iter = -1;  // -1: max_iterations / 3
    ExposureMode exposure_mode = ExposureMode::Exp3;
    LossWeights weights;
    DensifyConfig densify;
    InitConfig init;
    RasterConfig raster;
    FuseMode fuse = FuseMode::Mean;
    bool gi_enabled = true;
    std::uint64_t rng_seed = 0;
    int eval_every = 250;
    int checkpoint_every = 0;         // 0: final checkpoint only
    int opacity_reset_interval = 0;   // 0: never
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-15;

    int unfreeze_iteration() const { return mix_unfreeze_iter < 0 ? max_iterations / 3 : mix_unfreeze_iter; }
    PipelineOptions pipeline_options() const;
    /// Throws std::invalid_argument.
    void validate() const;
};

/// Reads `key = value` lines; [sections] are accepted and only group keys.
/// Unknown keys and malformed values throw std::invalid_argument.
TrainConfig parse_train_config(std::istream& is, TrainConfig base = {});
TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base = {});
/// Every key with its current value, in the syntax parse_train_config reads.
std::string format_train_config(const TrainConfig& c);

/// Cosine annealing to 1% of the initial rate over `total` iterations.
double cosine_lr(double initial, int iteration, int total);
/// Log-linear interpolation from `initial` to `final` over `total` iterations.
double exponential_lr(double initial, double final, int iteration, int total);

/// A training camera and its LDR observations. There is deliberately no
/// HDR field: training cannot see the ground-truth radiance.
struct TrainingPose {
    int pose = 0;
    Camera camera;
    std::vector<double> exposures;
    std::vector<ImageBuffer> gt_ldr;  // parallel to exposures
    int unit_index = -1;              // index of t = 1, if observed
};

std::vector<TrainingPose> training_poses(std::span<const ViewRecord> views);

struct SampledView {
    std::size_t pose = 0;
    std::size_t exposure_index = 0;
    double exposure = 1.0;
    double lighting = 1.0;
};

/// exp3 redraws the exposure each call; exp1 pins one per pose at construction.
class ViewSampler {
public:
    ViewSampler(std::span<const TrainingPose> poses, ExposureMode mode, std::mt19937_64& rng);
    SampledView sample(std::mt19937_64& rng) const;
    SampledView sample(std::size_t pose, std::mt19937_64& rng) const;

private:
    std::span<const TrainingPose> poses_;
    ExposureMode mode_;
    std::vector<std::size_t> pinned_;
};

/// First and second moments for every array of param_refs(model), in order.
struct AdamState {
    std::vector<std::vector<double>> m, v;
    std::int64_t step = 0;
    void reset(const Model& shape);
};

/// Moves Gaussian moments after densification; fresh Gaussians start at zero.
void remap_moments(AdamState& adam, const Model& model, std::span<const Lineage> lineage, std::size_t old_count);

struct TrainState {
    TrainConfig config;
    Model model;
    AdamState adam;
    DensifyState densify;
    std::mt19937_64 rng;
    int iteration = 0;  // completed steps
    double extent = 1.0;
    GradTape tape;
};

TrainState init_train_state(const TrainConfig& config, std::span<const Vec3> seed_points, double extent,
                            const Vec3& background = {0, 0, 0});

/// Learning rate of a parameter group at the state's current iteration.
double learning_rate(const TrainState& state, ParamGroup group);

/// One forward/backward/Adam step on a sampled view. Accumulates densification
/// statistics while inside the densification window.
LossBreakdown train_step(TrainState& state, const TrainingPose& pose, const SampledView& view);

struct EvalPoint {
    int iteration = 0;
    double psnr_ldr = 0;
    double psnr_hdr = 0;
};

struct TrainReport {
    std::vector<LossBreakdown> log;  // one entry per executed iteration
    std::vector<EvalPoint> evals;    // held-out split, iteration 0 first
    std::vector<DensifyReport> densify_rounds;
    std::size_t final_gaussians = 0;
    double wall_seconds = 0;
};

struct RunOutputs {
    std::filesystem::path checkpoint;  // empty: do not write
    std::ostream* csv = nullptr;       // iter,rec,cons,unit,total,psnr_ldr,psnr_hdr
};

/// Algorithm loop: sample, step, densify, evaluate on `views.test`, then
/// write the final checkpoint. Intermediate checkpoints go next to it as
/// `<stem>_<iter><ext>` when checkpoint_every > 0.
TrainReport run(const TrainConfig& config, const LoadedScene& scene, const RunOutputs& outputs,
                TrainState* final_state = nullptr);

/// Replays every training observation once through forward and backward
/// passes and returns the densification statistics they produce.
DensifyState collect_densify_stats(const Model& model, std::span<const ViewRecord> train_views,
                                   const PipelineOptions& options, const DensifyConfig& config);

}  // namespace hdrsplat
