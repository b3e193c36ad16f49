#include "hdrsplat/trainer.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>

#include "hdrsplat/checkpoint.hpp"

namespace hdrsplat {

namespace fs = std::filesystem;

const char* to_string(ExposureMode m) { return m == ExposureMode::Exp3 ? "exp3" : "exp1"; }

ExposureMode exposure_mode_from_string(const std::string& s) {
    if (s == "exp3") return ExposureMode::Exp3;
    if (s == "exp1") return ExposureMode::Exp1;
    throw std::invalid_argument("unknown exposure mode '" + s + "' (expected exp3 or exp1)");
}

PipelineOptions TrainConfig::pipeline_options() const {
    PipelineOptions o;
    o.raster = raster;
    o.weights = weights;
    o.fuse = fuse;
    o.gi_enabled = gi_enabled;
    return o;
}

void TrainConfig::validate() const {
    if (max_iterations < 0) throw std::invalid_argument("max_iterations must be non-negative");
    const double rates[] = {lr.position, lr.position_final, lr.scale,    lr.rotation,  lr.opacity,
                            lr.reflectance, lr.illumination, lr.composer, lr.modulator, lr.tonemapper};
    for (double r : rates)
        if (!(r >= 0) || !std::isfinite(r)) throw std::invalid_argument("learning rates must be non-negative");
    if (unfreeze_iteration() > max_iterations) throw std::invalid_argument("mix_unfreeze_iter exceeds max_iterations");
    if (eval_every < 0 || checkpoint_every < 0 || opacity_reset_interval < 0)
        throw std::invalid_argument("intervals must be non-negative");
    if (!(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1 && adam_eps > 0))
        throw std::invalid_argument("invalid Adam hyperparameters");
    weights.validate();
    densify.validate();
}

namespace {

double parse_double(const std::string& key, const std::string& v) {
    double x = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(x))
        throw std::invalid_argument(fmt::format("{}: '{}' is not a finite number", key, v));
    return x;
}

long long parse_int(const std::string& key, const std::string& v) {
    long long x = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || p != v.data() + v.size())
        throw std::invalid_argument(fmt::format("{}: '{}' is not an integer", key, v));
    return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument(fmt::format("{}: '{}' is not a boolean", key, v));
}

using Setter = std::function<void(TrainConfig&, const std::string&, const std::string&)>;
using Getter = std::function<std::string(const TrainConfig&)>;

struct Key {
    Setter set;
    Getter get;
};

template <class T>
Key number(T TrainConfig::*field) {
    return {[field](TrainConfig& c, const std::string& k, const std::string& v) {
                if constexpr (std::is_floating_point_v<T>)
                    c.*field = parse_double(k, v);
                else
                    c.*field = static_cast<T>(parse_int(k, v));
            },
            [field](const TrainConfig& c) { return fmt::format("{}", c.*field); }};
}

template <class S, class T>
Key nested(S TrainConfig::*outer, T S::*field) {
    return {[outer, field](TrainConfig& c, const std::string& k, const std::string& v) {
                if constexpr (std::is_same_v<T, bool>)
                    c.*outer.*field = parse_bool(k, v);
                else if constexpr (std::is_floating_point_v<T>)
                    c.*outer.*field = parse_double(k, v);
                else
                    c.*outer.*field = static_cast<T>(parse_int(k, v));
            },
            [outer, field](const TrainConfig& c) { return fmt::format("{}", c.*outer.*field); }};
}

const std::map<std::string, Key>& config_keys() {
    static const std::map<std::string, Key> keys = [] {
        std::map<std::string, Key> k;
        k["max_iterations"] = number(&TrainConfig::max_iterations);
        k["mix_unfreeze_iter"] = number(&TrainConfig::mix_unfreeze_iter);
        k["rng_seed"] = number(&TrainConfig::rng_seed);
        k["eval_every"] = number(&TrainConfig::eval_every);
        k["checkpoint_every"] = number(&TrainConfig::checkpoint_every);
        k["opacity_reset_interval"] = number(&TrainConfig::opacity_reset_interval);
        k["adam_beta1"] = number(&TrainConfig::adam_beta1);
        k["adam_beta2"] = number(&TrainConfig::adam_beta2);
        k["adam_eps"] = number(&TrainConfig::adam_eps);
        k["exposure_mode"] = {[](TrainConfig& c, const std::string&, const std::string& v) {
                                  c.exposure_mode = exposure_mode_from_string(v);
                              },
                              [](const TrainConfig& c) { return std::string(to_string(c.exposure_mode)); }};
        k["fuse"] = {[](TrainConfig& c, const std::string&, const std::string& v) { c.fuse = fuse_mode_from_string(v); },
                     [](const TrainConfig& c) { return std::string(to_string(c.fuse)); }};
        k["gi_enabled"] = {[](TrainConfig& c, const std::string& key, const std::string& v) {
                               c.gi_enabled = parse_bool(key, v);
                           },
                           [](const TrainConfig& c) { return std::string(c.gi_enabled ? "true" : "false"); }};

        k["lr_position"] = nested(&TrainConfig::lr, &LearningRates::position);
        k["lr_position_final"] = nested(&TrainConfig::lr, &LearningRates::position_final);
        k["lr_scale"] = nested(&TrainConfig::lr, &LearningRates::scale);
        k["lr_rotation"] = nested(&TrainConfig::lr, &LearningRates::rotation);
        k["lr_opacity"] = nested(&TrainConfig::lr, &LearningRates::opacity);
        k["lr_reflectance"] = nested(&TrainConfig::lr, &LearningRates::reflectance);
        k["lr_illumination"] = nested(&TrainConfig::lr, &LearningRates::illumination);
        k["lr_g"] = nested(&TrainConfig::lr, &LearningRates::composer);
        k["lr_phi"] = nested(&TrainConfig::lr, &LearningRates::modulator);
        k["lr_tonemapper"] = nested(&TrainConfig::lr, &LearningRates::tonemapper);

        k["lambda1"] = nested(&TrainConfig::weights, &LossWeights::lambda1);
        k["lambda2"] = nested(&TrainConfig::weights, &LossWeights::lambda2);
        k["lambda3"] = nested(&TrainConfig::weights, &LossWeights::lambda3);
        k["gamma"] = nested(&TrainConfig::weights, &LossWeights::gamma);
        k["blur_sigma"] = nested(&TrainConfig::weights, &LossWeights::blur_sigma);
        k["blur_radius"] = nested(&TrainConfig::weights, &LossWeights::blur_radius);

        k["tau_p"] = nested(&TrainConfig::densify, &DensifyConfig::tau_p);
        k["s"] = nested(&TrainConfig::densify, &DensifyConfig::s);
        k["scale_threshold"] = nested(&TrainConfig::densify, &DensifyConfig::scale_threshold);
        k["prune_opacity"] = nested(&TrainConfig::densify, &DensifyConfig::prune_opacity);
        k["split_factor"] = nested(&TrainConfig::densify, &DensifyConfig::split_factor);
        k["densify_interval"] = nested(&TrainConfig::densify, &DensifyConfig::interval);
        k["densify_start"] = nested(&TrainConfig::densify, &DensifyConfig::start_iter);
        k["densify_stop"] = nested(&TrainConfig::densify, &DensifyConfig::stop_iter);
        k["max_gaussians"] = nested(&TrainConfig::densify, &DensifyConfig::max_gaussians);

        k["init_opacity"] = nested(&TrainConfig::init, &InitConfig::opacity);
        k["init_ambient"] = nested(&TrainConfig::init, &InitConfig::ambient);
        k["init_reflectance_std"] = nested(&TrainConfig::init, &InitConfig::reflectance_std);

        k["alpha_skip"] = nested(&TrainConfig::raster, &RasterConfig::alpha_skip);
        k["min_transmittance"] = nested(&TrainConfig::raster, &RasterConfig::min_transmittance);
        k["bbox_sigma"] = nested(&TrainConfig::raster, &RasterConfig::bbox_sigma);
        k["low_pass"] = nested(&TrainConfig::raster, &RasterConfig::low_pass);
        return k;
    }();
    return keys;
}

void apply(TrainConfig& c, const std::string& key, const std::string& value) {
    const auto& keys = config_keys();
    const auto it = keys.find(key);
    if (it == keys.end()) throw std::invalid_argument("unknown config key '" + key + "'");
    it->second.set(c, key, value);
}

}  // namespace

TrainConfig parse_train_config(std::istream& is, TrainConfig base) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::read_ini(is, tree);
    } catch (const pt::ini_parser_error& e) {
        throw std::invalid_argument(std::string("config: ") + e.what());
    }
    for (const auto& [key, node] : tree) {
        if (node.empty()) {
            apply(base, key, node.data());
            continue;
        }
        for (const auto& [sub, leaf] : node) apply(base, sub, leaf.data());
    }
    base.validate();
    return base;
}

TrainConfig load_train_config(const fs::path& path, TrainConfig base) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config " + path.string());
    return parse_train_config(is, std::move(base));
}

std::string format_train_config(const TrainConfig& c) {
    std::string out;
    for (const auto& [key, k] : config_keys()) out += key + " = " + k.get(c) + "\n";
    return out;
}

double cosine_lr(double initial, int iteration, int total) {
    if (total <= 0) return initial;
    const double r = std::clamp(static_cast<double>(iteration) / total, 0.0, 1.0);
    return initial * (0.01 + 0.99 * 0.5 * (1.0 + std::cos(std::numbers::pi * r)));
}

double exponential_lr(double initial, double final, int iteration, int total) {
    if (total <= 0) return initial;
    const double r = std::clamp(static_cast<double>(iteration) / total, 0.0, 1.0);
    if (!(initial > 0 && final > 0)) return initial + r * (final - initial);
    return std::exp((1.0 - r) * std::log(initial) + r * std::log(final));
}

std::vector<TrainingPose> training_poses(std::span<const ViewRecord> views) {
    std::vector<TrainingPose> poses;
    std::map<int, std::size_t> slot;
    for (const ViewRecord& v : views) {
        auto [it, added] = slot.emplace(v.pose, poses.size());
        if (added) {
            poses.emplace_back();
            poses.back().pose = v.pose;
            poses.back().camera = v.camera;
        }
        TrainingPose& p = poses[it->second];
        if (v.exposure_t == 1.0) p.unit_index = static_cast<int>(p.exposures.size());
        p.exposures.push_back(v.exposure_t);
        p.gt_ldr.push_back(v.gt_ldr);
    }
    return poses;
}

ViewSampler::ViewSampler(std::span<const TrainingPose> poses, ExposureMode mode, std::mt19937_64& rng)
    : poses_(poses), mode_(mode) {
    if (poses.empty()) throw std::invalid_argument("ViewSampler: no training views");
    for (const auto& p : poses) {
        if (p.exposures.empty()) throw std::invalid_argument("ViewSampler: pose without observations");
        if (mode == ExposureMode::Exp1) {
            std::uniform_int_distribution<std::size_t> pick(0, p.exposures.size() - 1);
            pinned_.push_back(pick(rng));
        }
    }
}

SampledView ViewSampler::sample(std::mt19937_64& rng) const {
    std::uniform_int_distribution<std::size_t> pick(0, poses_.size() - 1);
    return sample(pick(rng), rng);
}

SampledView ViewSampler::sample(std::size_t pose, std::mt19937_64& rng) const {
    const TrainingPose& p = poses_[pose];
    SampledView s;
    s.pose = pose;
    if (mode_ == ExposureMode::Exp1) {
        s.exposure_index = pinned_[pose];
    } else {
        std::uniform_int_distribution<std::size_t> pick(0, p.exposures.size() - 1);
        s.exposure_index = pick(rng);
    }
    s.exposure = p.exposures[s.exposure_index];
    s.lighting = s.exposure;
    return s;
}

void AdamState::reset(const Model& shape) {
    m.clear();
    v.clear();
    for (const auto& r : param_refs(shape)) {
        m.emplace_back(r.values.size(), 0.0);
        v.emplace_back(r.values.size(), 0.0);
    }
    step = 0;
}

void remap_moments(AdamState& adam, const Model& model, std::span<const Lineage> lineage, std::size_t old_count) {
    const auto refs = param_refs(model);
    const std::size_t n = model.cloud.size();
    if (lineage.size() != n) throw std::invalid_argument("remap_moments: lineage does not match the cloud");
    for (std::size_t k = 0; k < refs.size(); ++k) {
        if (refs[k].id.rfind("cloud.", 0) != 0) continue;
        const std::size_t stride = n ? refs[k].values.size() / n : 0;
        for (auto* moments : {&adam.m[k], &adam.v[k]}) {
            if (old_count && moments->size() != stride * old_count)
                throw std::logic_error("remap_moments: moment size mismatch for " + refs[k].id);
            std::vector<double> next(stride * n, 0.0);
            for (std::size_t i = 0; i < n; ++i)
                if (!lineage[i].fresh)
                    for (std::size_t d = 0; d < stride; ++d) next[i * stride + d] = (*moments)[lineage[i].parent * stride + d];
            *moments = std::move(next);
        }
    }
}

TrainState init_train_state(const TrainConfig& config, std::span<const Vec3> seed_points, double extent,
                            const Vec3& background) {
    config.validate();
    if (!(extent > 0)) throw std::invalid_argument("scene extent must be positive");
    TrainState s;
    s.config = config;
    s.config.raster.background = background;
    InitConfig init = config.init;
    init.seed = config.rng_seed;
    s.model = make_model(init_cloud(seed_points, init), config.rng_seed + 1);
    s.model.tonemapper.frozen_mix = config.unfreeze_iteration() > 0;
    s.adam.reset(s.model);
    s.densify.config = config.densify;
    s.densify.resize(s.model.cloud.size());
    s.rng.seed(config.rng_seed);
    s.extent = extent;
    s.tape = GradTape(s.model);
    return s;
}

double learning_rate(const TrainState& state, ParamGroup group) {
    const LearningRates& lr = state.config.lr;
    const int it = state.iteration, total = state.config.max_iterations;
    switch (group) {
        case ParamGroup::Position:
            return exponential_lr(lr.position * state.extent, lr.position_final * state.extent, it, total);
        case ParamGroup::Scale: return lr.scale;
        case ParamGroup::Rotation: return lr.rotation;
        case ParamGroup::Opacity: return lr.opacity;
        case ParamGroup::Reflectance: return lr.reflectance;
        case ParamGroup::Illumination: return lr.illumination;
        case ParamGroup::Composer: return cosine_lr(lr.composer, it, total);
        case ParamGroup::Modulator: return cosine_lr(lr.modulator, it, total);
        case ParamGroup::ToneMap:
        case ParamGroup::Fusion: return cosine_lr(lr.tonemapper, it, total);
    }
    return 0.0;
}

LossBreakdown train_step(TrainState& state, const TrainingPose& pose, const SampledView& view) {
    const TrainConfig& cfg = state.config;
    const PipelineOptions options = cfg.pipeline_options();
    state.model.tonemapper.frozen_mix = state.iteration < cfg.unfreeze_iteration();

    PipelineSample sample;
    sample.camera = &pose.camera;
    sample.exposure = view.exposure;
    sample.lighting = view.lighting;
    sample.gt_ldr = &pose.gt_ldr.at(view.exposure_index);
    if (pose.unit_index >= 0) sample.gt_unit = &pose.gt_ldr[static_cast<std::size_t>(pose.unit_index)];

    const PipelineForward fwd = pipeline_forward(state.model, sample, options);
    if (state.tape.grads.cloud.size() != state.model.cloud.size()) state.tape = GradTape(state.model);
    state.tape.zero();
    pipeline_backward(state.model, sample, options, fwd, state.tape);

    for (const auto& r : param_refs(std::as_const(state.tape.grads)))
        for (std::size_t k = 0; k < r.values.size(); ++k)
            if (!std::isfinite(r.values[k]))
                throw NumericalError(fmt::format("non-finite gradient {}[{}] at iteration {}", r.id, k, state.iteration));

    if (state.iteration < cfg.densify.stop_iter) {
        const auto& ndc = state.tape.ndc_views.back();
        accumulate(state.densify, ndc.norm, ndc.visible, fwd.branch_trace.l_a, fwd.branch_trace.l_hat);
    }

    ++state.adam.step;
    const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.adam.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.adam.step));
    auto params = param_refs(state.model);
    const auto grads = param_refs(std::as_const(state.tape.grads));
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (params[k].group == ParamGroup::Fusion && state.model.tonemapper.frozen_mix) continue;
        const double lr = learning_rate(state, params[k].group);
        auto& m = state.adam.m[k];
        auto& v = state.adam.v[k];
        const auto g = grads[k].values;
        auto x = params[k].values;
        for (std::size_t j = 0; j < x.size(); ++j) {
            m[j] = b1 * m[j] + (1 - b1) * g[j];
            v[j] = b2 * v[j] + (1 - b2) * g[j] * g[j];
            x[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg.adam_eps);
        }
    }
    renormalize_rotations(state.model.cloud);
    ++state.iteration;
    return fwd.loss;
}

namespace {

fs::path intermediate_path(const fs::path& final_path, int iteration) {
    return final_path.parent_path() /
           fmt::format("{}_{:05d}{}", final_path.stem().string(), iteration, final_path.extension().string());
}

CheckpointMeta meta_of(const TrainState& s) {
    CheckpointMeta m;
    m.iteration = s.iteration;
    m.weights = s.config.weights;
    m.seed = s.config.rng_seed;
    m.fuse = s.config.fuse;
    m.gi_enabled = s.config.gi_enabled;
    m.extent = s.extent;
    return m;
}

void reset_opacity(TrainState& s) {
    const double cap = logit(0.01);
    for (double& o : s.model.cloud.opacity_logit) o = std::min(o, cap);
    const auto refs = param_refs(s.model);
    for (std::size_t k = 0; k < refs.size(); ++k)
        if (refs[k].group == ParamGroup::Opacity) {
            std::fill(s.adam.m[k].begin(), s.adam.m[k].end(), 0.0);
            std::fill(s.adam.v[k].begin(), s.adam.v[k].end(), 0.0);
        }
}

}  // namespace

TrainReport run(const TrainConfig& config, const LoadedScene& scene, const RunOutputs& outputs,
                TrainState* final_state) {
    const auto t0 = std::chrono::steady_clock::now();
    TrainState state = init_train_state(config, scene.seed_points, scene.extent, scene.background);
    const std::vector<TrainingPose> poses = training_poses(scene.views.train);
    const ViewSampler sampler(poses, config.exposure_mode, state.rng);
    const PipelineOptions options = state.config.pipeline_options();

    TrainReport report;
    auto evaluate_now = [&](int it) -> std::optional<EvalPoint> {
        if (scene.views.test.empty()) return std::nullopt;
        const EvalSummary e = evaluate(state.model, scene.views.test, options);
        double ldr = 0;
        for (const auto& v : e.views) ldr += v.psnr;
        const EvalPoint p{it, ldr / static_cast<double>(e.views.size()), e.hdr_psnr};
        report.evals.push_back(p);
        spdlog::info("iter {:5d}  held-out LDR {:.2f} dB  HDR {:.2f} dB  N={}", it, p.psnr_ldr, p.psnr_hdr,
                     state.model.cloud.size());
        return p;
    };
    if (outputs.csv) *outputs.csv << "iter,rec,cons,unit,total,psnr_ldr,psnr_hdr\n";
    if (config.eval_every > 0) evaluate_now(0);

    for (int it = 1; it <= config.max_iterations; ++it) {
        const SampledView view = sampler.sample(state.rng);
        const LossBreakdown loss = train_step(state, poses[view.pose], view);
        report.log.push_back(loss);

        if (config.densify.active_at(it) && it < config.densify.stop_iter + 1) {
            const std::size_t before = state.model.cloud.size();
            DensifyReport d = densify_and_prune(state.model.cloud, state.densify, state.extent, state.rng);
            remap_moments(state.adam, state.model, d.lineage, before);
            state.tape = GradTape(state.model);
            d.lineage.clear();
            report.densify_rounds.push_back(std::move(d));
        }
        if (config.opacity_reset_interval > 0 && it % config.opacity_reset_interval == 0 &&
            it < config.densify.stop_iter)
            reset_opacity(state);

        std::optional<EvalPoint> ev;
        if (config.eval_every > 0 && (it % config.eval_every == 0 || it == config.max_iterations))
            ev = evaluate_now(it);
        if (outputs.csv) {
            *outputs.csv << fmt::format("{},{:.10g},{:.10g},{:.10g},{:.10g},", it, loss.rec, loss.cons, loss.unit,
                                        loss.total);
            if (ev) *outputs.csv << fmt::format("{:.6f},{:.6f}", ev->psnr_ldr, ev->psnr_hdr);
            else *outputs.csv << ',';
            *outputs.csv << '\n';
        }
        if (!outputs.checkpoint.empty() && config.checkpoint_every > 0 && it % config.checkpoint_every == 0 &&
            it != config.max_iterations)
            save_checkpoint(intermediate_path(outputs.checkpoint, it), state.model, meta_of(state));
    }

    if (!outputs.checkpoint.empty()) save_checkpoint(outputs.checkpoint, state.model, meta_of(state));
    report.final_gaussians = state.model.cloud.size();
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (final_state) *final_state = std::move(state);
    return report;
}

DensifyState collect_densify_stats(const Model& model, std::span<const ViewRecord> train_views,
                                   const PipelineOptions& options, const DensifyConfig& config) {
    DensifyState st;
    st.config = config;
    st.resize(model.cloud.size());
    const std::vector<TrainingPose> poses = training_poses(train_views);
    GradTape tape(model);
    for (const TrainingPose& p : poses)
        for (std::size_t e = 0; e < p.exposures.size(); ++e) {
            PipelineSample s;
            s.camera = &p.camera;
            s.exposure = p.exposures[e];
            s.lighting = p.exposures[e];
            s.gt_ldr = &p.gt_ldr[e];
            if (p.unit_index >= 0) s.gt_unit = &p.gt_ldr[static_cast<std::size_t>(p.unit_index)];
            const PipelineForward fwd = pipeline_forward(model, s, options);
            tape.zero();
            pipeline_backward(model, s, options, fwd, tape);
            const auto& ndc = tape.ndc_views.back();
            accumulate(st, ndc.norm, ndc.visible, fwd.branch_trace.l_a, fwd.branch_trace.l_hat);
        }
    return st;
}

}  // namespace hdrsplat
