#include "hdrsplat/gradcheck.hpp"

#include <chrono>
#include <random>

#include "hdrsplat/reference.hpp"

namespace hdrsplat {

std::vector<PipelineSample> GradcheckFixture::samples() const {
    std::vector<PipelineSample> out;
    for (std::size_t v = 0; v < cameras.size(); ++v) {
        PipelineSample s;
        s.camera = &cameras[v];
        s.exposure = exposures[v];
        s.lighting = exposures[v];
        s.gt_ldr = &gt_ldr[v];
        s.gt_unit = &gt_unit[v];
        out.push_back(s);
    }
    return out;
}

namespace {

void perturb(GaussianCloud& c, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1, 1);
    for (auto& v : c.log_scale) v += 0.3 * u(rng);
    for (auto& v : c.rotation) v += 0.3 * u(rng);
    for (auto& v : c.l_a_raw) v += 0.5 * u(rng);
    for (auto& v : c.opacity_logit) v += 0.5 * u(rng);
}

ImageBuffer random_target(int w, int h, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1, 1);
    ImageBuffer img(w, h, ColorSpace::LdrUnit);
    for (auto& x : img.data) x = 0.5 + 0.4 * u(rng);
    return img;
}

InitConfig fixture_init() {
    InitConfig ic;
    ic.opacity = 0.6;
    ic.seed = 1;
    ic.reflectance_std = 0.5;
    return ic;
}

ImageBuffer resample(const ImageBuffer& src, int size) {
    ImageBuffer out(size, size, src.space);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const int sx = std::min(src.width - 1, static_cast<int>((x + 0.5) * src.width / size));
            const int sy = std::min(src.height - 1, static_cast<int>((y + 0.5) * src.height / size));
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = src.at(sx, sy, c);
        }
    return out;
}

}  // namespace

GradcheckFixture make_gradcheck_fixture(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<Vec3> pts;
    for (int i = 0; i < 5; ++i) pts.push_back({0.5 * u(rng), 0.5 * u(rng), 0.5 * u(rng)});
    GaussianCloud c = init_cloud(pts, fixture_init());
    perturb(c, rng);

    GradcheckFixture f;
    f.model = make_model(std::move(c), 5);
    f.cameras = {Camera::look_at({0, 0, -3}, {0, 0, 0}, {0, -1, 0}, 8, 8, 10),
                 Camera::look_at({2.5, 0.5, -2}, {0, 0, 0}, {0, -1, 0}, 8, 8, 10)};
    f.exposures = {0.25, 4.0};
    for (int v = 0; v < 2; ++v) {
        f.gt_ldr.push_back(random_target(8, 8, rng));
        f.gt_unit.push_back(random_target(8, 8, rng));
    }
    f.options.weights.lambda3 = 0.5;
    return f;
}

GradcheckFixture fixture_from_scene(const LoadedScene& scene, int gaussians, int size, std::uint64_t seed) {
    if (gaussians < 1 || size < 1) throw std::invalid_argument("gradcheck fixture needs at least one Gaussian and pixel");
    if (scene.seed_points.size() < static_cast<std::size_t>(gaussians))
        throw std::invalid_argument("scene has fewer seed points than requested Gaussians");
    std::mt19937_64 rng(seed);
    std::vector<Vec3> pts(scene.seed_points.begin(), scene.seed_points.begin() + gaussians);
    GaussianCloud c = init_cloud(pts, fixture_init());
    perturb(c, rng);

    GradcheckFixture f;
    f.model = make_model(std::move(c), 5);
    f.options.weights.lambda3 = 0.5;
    f.options.raster.background = scene.background;
    std::vector<int> poses;
    for (const auto& v : scene.views.train)
        if (std::find(poses.begin(), poses.end(), v.pose) == poses.end()) poses.push_back(v.pose);
    if (poses.size() < 2) throw std::invalid_argument("gradcheck needs two training poses");
    for (int k = 0; k < 2; ++k) {
        const ViewRecord* first = nullptr;
        const ViewRecord* unit = nullptr;
        for (const auto& v : scene.views.train)
            if (v.pose == poses[k]) {
                if (!first) first = &v;
                if (v.exposure_t == 1.0) unit = &v;
            }
        Camera cam = first->camera;
        const double s = static_cast<double>(size) / cam.width;
        cam.fx *= s;
        cam.fy *= static_cast<double>(size) / cam.height;
        cam.cx *= s;
        cam.cy *= static_cast<double>(size) / cam.height;
        cam.width = cam.height = size;
        f.cameras.push_back(cam);
        f.exposures.push_back(first->exposure_t);
        f.gt_ldr.push_back(resample(first->gt_ldr, size));
        f.gt_unit.push_back(unit ? resample(unit->gt_ldr, size) : random_target(size, size, rng));
    }
    return f;
}

GradcheckReport run_gradcheck(GradcheckFixture& fixture, const FdCheckOptions& options, GradOracle oracle) {
    const auto t0 = std::chrono::steady_clock::now();
    GradcheckReport rep;
    const auto samples = fixture.samples();
    rep.biases_moved = clear_kinks(fixture.model, samples, fixture.options);
    rep.kink_distance = kink_distance(fixture.model, samples, fixture.options);

    GradTape tape(fixture.model);
    for (const auto& s : samples) {
        const auto fwd = pipeline_forward(fixture.model, s, fixture.options);
        pipeline_backward(fixture.model, s, fixture.options, fwd, tape);
    }

    const auto loss = [&](const Model& m) -> long double {
        long double total = 0;
        for (const auto& s : samples)
            total += oracle == GradOracle::Extended ? reference_loss(m, s, fixture.options)
                                                    : static_cast<long double>(pipeline_loss(m, s, fixture.options));
        return total;
    };

    FdCheckOptions one = options;
    for (const auto& ref : param_refs(std::as_const(fixture.model))) {
        if (!param_selected(options, ref)) continue;
        const std::string id = ref.id;
        one.params = {id};
        const FdCheckResult r = finite_diff_check(loss, fixture.model, tape.grads, one);
        rep.per_param.emplace_back(id, r);
        rep.result.checked += r.checked;
        if (r.max_relative_error >= rep.result.max_relative_error) {
            const std::size_t checked = rep.result.checked;
            rep.result = r;
            rep.result.checked = checked;
        }
    }
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

}  // namespace hdrsplat
