#include <gtest/gtest.h>

#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "hdrsplat/dataio.hpp"
#include "hdrsplat/trainer.hpp"

using namespace hdrsplat;

namespace {

const LoadedScene& tiny_scene() {
    static const LoadedScene scene = [] {
        SceneSpec spec;
        spec.n_gaussians = 10;
        spec.image_size = 12;
        spec.n_views = 6;
        const SyntheticScene s = generate_scene(spec);
        LoadedScene l;
        l.spec = spec;
        l.cameras = s.cameras;
        l.seed_points = s.seed_points;
        l.extent = s.extent;
        l.views = make_views(s);
        return l;
    }();
    return scene;
}

TrainConfig quick_config(int iterations) {
    TrainConfig c;
    c.max_iterations = iterations;
    c.eval_every = 0;
    c.densify.start_iter = 1000;
    c.densify.stop_iter = 1000;
    c.lr.composer = c.lr.modulator = c.lr.tonemapper = 1e-3;
    return c;
}

std::vector<double> flatten(const Model& m) {
    std::vector<double> out;
    for (const auto& r : param_refs(m)) out.insert(out.end(), r.values.begin(), r.values.end());
    return out;
}

}  // namespace

TEST(Schedule, CosineEndpoints) {
    EXPECT_DOUBLE_EQ(cosine_lr(1.0, 0, 100), 1.0);
    EXPECT_NEAR(cosine_lr(1.0, 50, 100), 0.505, 1e-15);
    EXPECT_NEAR(cosine_lr(1.0, 100, 100), 0.01, 1e-15);
    EXPECT_NEAR(exponential_lr(1e-2, 1e-4, 50, 100), 1e-3, 1e-15);
}

TEST(Config, ParseOverridesAndRejectsUnknownKeys) {
    std::istringstream is("[train]\nmax_iterations = 77\nlr_phi = 0.5\nfuse = sum\nexposure_mode = exp1\ntau_p = 0.01\n");
    const TrainConfig c = parse_train_config(is);
    EXPECT_EQ(c.max_iterations, 77);
    EXPECT_EQ(c.lr.modulator, 0.5);
    EXPECT_EQ(c.fuse, FuseMode::Sum);
    EXPECT_EQ(c.exposure_mode, ExposureMode::Exp1);
    EXPECT_EQ(c.densify.tau_p, 0.01);
    std::istringstream bad("no_such_key = 1\n");
    EXPECT_THROW(parse_train_config(bad), std::invalid_argument);
    std::istringstream junk("max_iterations = many\n");
    EXPECT_THROW(parse_train_config(junk), std::invalid_argument);
}

TEST(Config, FormatRoundTrips) {
    TrainConfig c;
    c.max_iterations = 321;
    c.weights.gamma = 0.75;
    c.gi_enabled = false;
    std::istringstream is(format_train_config(c));
    const TrainConfig d = parse_train_config(is);
    EXPECT_EQ(d.max_iterations, 321);
    EXPECT_EQ(d.weights.gamma, 0.75);
    EXPECT_FALSE(d.gi_enabled);
    EXPECT_EQ(format_train_config(d), format_train_config(c));
}

TEST(Sampler, TrainingPosesHoldOnlyLdr) {
    const auto poses = training_poses(tiny_scene().views.train);
    EXPECT_EQ(poses.size(), 4u);
    for (const auto& p : poses) {
        EXPECT_EQ(p.exposures.size(), 3u);
        ASSERT_GE(p.unit_index, 0);
        EXPECT_EQ(p.exposures[p.unit_index], 1.0);
    }
}

TEST(Sampler, Exp1PinsOneExposurePerPose) {
    const auto poses = training_poses(tiny_scene().views.train);
    std::mt19937_64 rng(1);
    const ViewSampler s(poses, ExposureMode::Exp1, rng);
    std::map<std::size_t, std::set<std::size_t>> seen;
    for (int k = 0; k < 400; ++k) {
        const SampledView v = s.sample(rng);
        seen[v.pose].insert(v.exposure_index);
        EXPECT_EQ(v.lighting, v.exposure);
    }
    EXPECT_EQ(seen.size(), poses.size());
    for (const auto& [pose, e] : seen) EXPECT_EQ(e.size(), 1u);
}

TEST(Sampler, Exp3IsUniformOverExposures) {
    const auto poses = training_poses(tiny_scene().views.train);
    std::mt19937_64 rng(2);
    const ViewSampler s(poses, ExposureMode::Exp3, rng);
    std::array<int, 3> counts{};
    const int n = 6000;
    for (int k = 0; k < n; ++k) ++counts[s.sample(0, rng).exposure_index];
    double chi2 = 0;
    for (int c : counts) chi2 += (c - n / 3.0) * (c - n / 3.0) / (n / 3.0);
    EXPECT_LT(chi2, 13.8);  // 2 dof, p = 0.001
}

TEST(Step, ZeroLearningRatesLeaveModelUnchanged) {
    TrainConfig c = quick_config(5);
    c.lr = {0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
    const LoadedScene& sc = tiny_scene();
    TrainState st = init_train_state(c, sc.seed_points, sc.extent);
    const auto poses = training_poses(sc.views.train);
    const auto before = flatten(st.model);
    std::mt19937_64 rng(3);
    const ViewSampler sampler(poses, c.exposure_mode, rng);
    const SampledView v = sampler.sample(rng);
    const LossBreakdown l = train_step(st, poses[v.pose], v);
    EXPECT_GT(l.total, 0);
    EXPECT_EQ(flatten(st.model), before);
    EXPECT_EQ(st.iteration, 1);
}

TEST(Step, FrozenFusionStaysBitIdentical) {
    TrainConfig c = quick_config(6);
    c.mix_unfreeze_iter = 3;
    const LoadedScene& sc = tiny_scene();
    TrainState st = init_train_state(c, sc.seed_points, sc.extent);
    const auto poses = training_poses(sc.views.train);
    const MlpParams mix0 = st.model.tonemapper.f_mix;
    const auto tm0 = st.model.tonemapper.f_tm.layers[0].weight;
    std::mt19937_64 rng(4);
    const ViewSampler sampler(poses, c.exposure_mode, rng);
    for (int k = 0; k < 3; ++k) {
        const SampledView v = sampler.sample(rng);
        train_step(st, poses[v.pose], v);
    }
    for (std::size_t l = 0; l < mix0.layers.size(); ++l) {
        EXPECT_EQ(st.model.tonemapper.f_mix.layers[l].weight, mix0.layers[l].weight);
        EXPECT_EQ(st.model.tonemapper.f_mix.layers[l].bias, mix0.layers[l].bias);
    }
    EXPECT_NE(st.model.tonemapper.f_tm.layers[0].weight, tm0);
    const SampledView v = sampler.sample(rng);
    train_step(st, poses[v.pose], v);
    EXPECT_NE(st.model.tonemapper.f_mix.layers[0].weight, mix0.layers[0].weight);
}

TEST(Run, IsDeterministic) {
    const TrainConfig c = quick_config(8);
    TrainState a, b;
    const TrainReport ra = run(c, tiny_scene(), {}, &a);
    const TrainReport rb = run(c, tiny_scene(), {}, &b);
    ASSERT_EQ(ra.log.size(), 8u);
    for (std::size_t k = 0; k < ra.log.size(); ++k) EXPECT_EQ(ra.log[k].total, rb.log[k].total);
    EXPECT_EQ(flatten(a.model), flatten(b.model));
}

TEST(Run, LossDecreases) {
    const TrainConfig c = quick_config(150);
    const TrainReport r = run(c, tiny_scene(), {});
    double head = 0, tail = 0;
    for (int k = 0; k < 20; ++k) {
        head += r.log[k].total;
        tail += r.log[r.log.size() - 1 - k].total;
    }
    EXPECT_LT(tail, 0.8 * head);
}

TEST(Run, ZeroIterationsEvaluatesOnly) {
    TrainConfig c = quick_config(0);
    c.eval_every = 10;
    std::ostringstream csv;
    const TrainReport r = run(c, tiny_scene(), {.checkpoint = {}, .csv = &csv});
    EXPECT_TRUE(r.log.empty());
    ASSERT_EQ(r.evals.size(), 1u);
    EXPECT_EQ(r.evals[0].iteration, 0);
    EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "iter,rec,cons,unit,total,psnr_ldr,psnr_hdr");
}

TEST(Adam, RemapMomentsZeroesFreshEntries) {
    TrainConfig c = quick_config(1);
    const LoadedScene& sc = tiny_scene();
    TrainState st = init_train_state(c, sc.seed_points, sc.extent);
    const std::size_t n = st.model.cloud.size();
    for (auto& m : st.adam.m) std::iota(m.begin(), m.end(), 1.0);
    GaussianCloud grown = st.model.cloud;
    std::vector<Lineage> lineage;
    for (std::size_t i = 0; i < n; ++i) lineage.push_back({i, i == 1});
    grown.resize(n + 1);
    lineage.push_back({0, true});
    st.model.cloud = grown;
    remap_moments(st.adam, st.model, lineage, n);
    EXPECT_EQ(st.adam.m[0].size(), 3 * (n + 1));
    EXPECT_EQ(st.adam.m[0][0], 1.0);
    EXPECT_EQ(st.adam.m[0][3], 0.0);
    EXPECT_EQ(st.adam.m[0][6], 7.0);
    EXPECT_EQ(st.adam.m[0][3 * n], 0.0);
}
