#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "hdrsplat/checkpoint.hpp"
#include "hdrsplat/dataio.hpp"
#include "hdrsplat/evaluation.hpp"
#include "hdrsplat/gradcheck.hpp"
#include "hdrsplat/trainer.hpp"

using namespace hdrsplat;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kValidation = 1, kNumerical = 2, kIo = 3 };

class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

void require_dir_for(const fs::path& file) {
    const fs::path dir = file.parent_path().empty() ? fs::path(".") : file.parent_path();
    if (!fs::is_directory(dir)) throw IoError("output directory does not exist: " + dir.string());
}

std::string fmt_db(double v) { return std::isinf(v) ? "inf" : std::isnan(v) ? "-" : fmt::format("{:.3f}", v); }

// gen-scene

struct GenArgs {
    SceneSpec spec;
    std::string out_dir;
};

int gen_scene(const GenArgs& a) {
    a.spec.validate();
    const SyntheticScene scene = generate_scene(a.spec);
    const SceneViews views = make_views(scene);
    write_scene(a.out_dir, scene, views);
    fmt::print("wrote {} poses ({} train views, {} test views) to {}\n", scene.cameras.size(), views.train.size(),
               views.test.size(), a.out_dir);
    return kOk;
}

// train

struct TrainArgs {
    std::string scene, config, out, log;
    std::vector<std::string> overrides;
};

int train(const TrainArgs& a) {
    TrainConfig cfg;
    if (!a.config.empty()) cfg = load_train_config(a.config);
    if (!a.overrides.empty()) {
        std::string text;
        for (const auto& o : a.overrides) {
            if (o.find('=') == std::string::npos) throw ValidationError("--set expects key=value, got '" + o + "'");
            text += o + "\n";
        }
        std::istringstream is(text);
        cfg = parse_train_config(is, cfg);
    }
    cfg.validate();
    const LoadedScene scene = load_scene(a.scene);
    const fs::path out(a.out);
    const fs::path log = a.log.empty() ? fs::path(out).replace_extension(".csv") : fs::path(a.log);
    require_dir_for(out);
    require_dir_for(log);

    std::ofstream csv(log);
    if (!csv) throw IoError("cannot write " + log.string());
    const TrainReport rep = run(cfg, scene, {out, &csv});
    fmt::print("trained {} iterations in {:.1f} s, {} Gaussians\n", rep.log.size(), rep.wall_seconds,
               rep.final_gaussians);
    if (!rep.evals.empty())
        fmt::print("held-out LDR {} dB, HDR {} dB\n", fmt_db(rep.evals.back().psnr_ldr), fmt_db(rep.evals.back().psnr_hdr));
    fmt::print("checkpoint {}\nlog {}\n", out.string(), log.string());
    return kOk;
}

// render

struct RenderArgs {
    std::string checkpoint, scene, mode = "ldr", out;
    int view = 0;
    double exposure = 1.0;
};

int render(const RenderArgs& a) {
    if (!(a.exposure > 0)) throw ValidationError("--exposure must be positive");
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    const LoadedScene scene = load_scene(a.scene);
    if (a.view < 0 || a.view >= static_cast<int>(scene.cameras.size()))
        throw ValidationError(fmt::format("unknown view id {} (scene has {})", a.view, scene.cameras.size()));
    const fs::path out(a.out);
    if (a.mode == "branches") {
        if (fs::exists(out) && !fs::is_directory(out)) throw IoError(out.string() + " is not a directory");
    } else {
        require_dir_for(out);
    }

    const Rendering r = render_view(ck.model, scene.cameras[a.view], a.exposure, inference_options(ck.meta, scene.background));
    if (a.mode == "hdr") {
        write_pfm(out, r.hdr.i_hdr);
    } else if (a.mode == "ldr") {
        write_ppm(out, r.ldr.i_ldr);
    } else {
        fs::create_directories(out);
        write_pfm(out / "i_hdr.pfm", r.hdr.i_hdr);
        write_pfm(out / "i_hdr_scaled.pfm", r.hdr.i_hdr_scaled);
        write_pfm(out / "i_hdr_relit.pfm", r.hdr.i_hdr_relit);
        write_ppm(out / "i_glo.ppm", r.ldr.i_glo);
        write_ppm(out / "i_loc.ppm", r.ldr.i_loc);
        write_ppm(out / "i_loc_hat.ppm", r.ldr.i_loc_hat);
        write_ppm(out / "i_ldr.ppm", r.ldr.i_ldr);
    }
    fmt::print("wrote {}\n", out.string());
    return kOk;
}

// eval

struct EvalArgs {
    std::string checkpoint, scene, split = "test";
};

int eval(const EvalArgs& a) {
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    const LoadedScene scene = load_scene(a.scene);
    std::vector<ViewRecord> views;
    if (a.split == "train" || a.split == "all") views.insert(views.end(), scene.views.train.begin(), scene.views.train.end());
    if (a.split == "test" || a.split == "all") views.insert(views.end(), scene.views.test.begin(), scene.views.test.end());
    if (views.empty()) throw ValidationError("split '" + a.split + "' has no views");

    const EvalSummary s = evaluate(ck.model, views, inference_options(ck.meta, scene.background));
    fmt::print("{:>5} {:>7} {:>5} {:>9} {:>7}\n", "pose", "t", "group", "PSNR", "SSIM");
    for (const auto& v : s.views)
        fmt::print("{:>5} {:>7.3g} {:>5} {:>9} {:>7}\n", v.pose, v.exposure, v.novel_exposure ? "NE" : "OE",
                   fmt_db(v.psnr), std::isnan(v.ssim) ? "-" : fmt::format("{:.4f}", v.ssim));
    fmt::print("\n{:>5} {:>9} {:>7}\n", "pose", "HDR PSNR", "SSIM");
    for (const auto& h : s.hdr)
        fmt::print("{:>5} {:>9} {:>7}\n", h.pose, fmt_db(h.psnr), std::isnan(h.ssim) ? "-" : fmt::format("{:.4f}", h.ssim));
    const auto ssim_str = [](double v) { return std::isnan(v) ? std::string("-") : fmt::format("{:.4f}", v); };
    fmt::print("\nmean  LDR-OE  PSNR {:>9}  SSIM {:>7}  ({} views)\n", fmt_db(s.oe_psnr), ssim_str(s.oe_ssim), s.oe_count);
    fmt::print("mean  LDR-NE  PSNR {:>9}  SSIM {:>7}  ({} views)\n", fmt_db(s.ne_psnr), ssim_str(s.ne_ssim), s.ne_count);
    fmt::print("mean  HDR     PSNR {:>9}  SSIM {:>7}  ({} poses)\n", fmt_db(s.hdr_psnr), ssim_str(s.hdr_ssim), s.hdr.size());
    return kOk;
}

// gradcheck

struct GradcheckArgs {
    std::string scene, params = "all", oracle = "ext";
    double step = 1e-5, threshold = 1e-4, fault = 1.0;
    std::size_t max_per_param = 0;
};

int gradcheck(const GradcheckArgs& a) {
    if (!(a.step > 0)) throw ValidationError("--step must be positive");
    if (a.oracle != "ext" && a.oracle != "f64") throw ValidationError("--oracle must be ext or f64");
    GradcheckFixture fixture = a.scene.empty() ? make_gradcheck_fixture() : fixture_from_scene(load_scene(a.scene));
    FdCheckOptions fo;
    fo.step = a.step;
    fo.max_per_param = a.max_per_param;
    std::stringstream ss(a.params);
    for (std::string p; std::getline(ss, p, ',');)
        if (!p.empty()) fo.params.push_back(p);
    bool any = false;
    for (const auto& r : param_refs(std::as_const(fixture.model))) any = any || param_selected(fo, r);
    if (!any) throw ValidationError("--params selects nothing: " + a.params);

    set_vjp_fault(a.fault);
    const GradcheckReport rep = run_gradcheck(fixture, fo, a.oracle == "ext" ? GradOracle::Extended : GradOracle::Double);
    set_vjp_fault(1.0);
    for (const auto& [id, r] : rep.per_param)
        fmt::print("{:<22} n={:<5} max_rel={:.3e}\n", id, r.checked, r.max_relative_error);
    const FdCheckResult& w = rep.result;
    fmt::print("worst {}[{}] analytic={:.10e} numeric={:.10e} rel={:.3e}\n", w.worst_param, w.worst_index,
               w.worst_analytic, w.worst_numeric, w.max_relative_error);
    fmt::print("{} coordinates, oracle {}, {} biases moved off kinks, {:.1f} s\n", w.checked, a.oracle,
               rep.biases_moved, rep.seconds);
    const bool ok = w.max_relative_error < a.threshold;
    fmt::print("{} (threshold {:.1e})\n", ok ? "PASS" : "FAIL", a.threshold);
    return ok ? kOk : kNumerical;
}

// densify-stats

struct StatsArgs {
    std::string checkpoint, scene, out_csv;
    double s = 1.0;
};

int densify_stats(const StatsArgs& a) {
    DensifyConfig dc;
    dc.s = a.s;
    dc.validate();
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    const LoadedScene scene = load_scene(a.scene);
    require_dir_for(a.out_csv);
    const DensifyState st =
        collect_densify_stats(ck.model, scene.views.train, inference_options(ck.meta, scene.background), dc);
    std::ofstream os(a.out_csv);
    if (!os) throw IoError("cannot write " + a.out_csv);
    write_densify_stats(os, st);

    const std::size_t observed =
        st.size() - static_cast<std::size_t>(std::count(st.visible_count.begin(), st.visible_count.end(), 0u));
    fmt::print("{} Gaussians, {} observed\n", st.size(), observed);
    fmt::print("spearman(avg_grad, 1/deviation) = {:.4f}\n", starvation_correlation(st));
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CPU differentiable Gaussian splatting with HDR reconstruction"};
    app.require_subcommand(1);
    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "Only log warnings and errors");

    GenArgs gen;
    auto* c_gen = app.add_subcommand("gen-scene", "Generate a synthetic multi-exposure scene");
    c_gen->add_option("--seed", gen.spec.seed, "Random seed")->capture_default_str();
    c_gen->add_option("--gaussians", gen.spec.n_gaussians, "Ground-truth Gaussians")->capture_default_str();
    c_gen->add_option("--size", gen.spec.image_size, "Image width and height")->capture_default_str();
    c_gen->add_option("--views", gen.spec.n_views, "Camera poses on the ring")->capture_default_str();
    c_gen->add_option("--out-dir", gen.out_dir, "Output directory")->required();

    TrainArgs tr;
    auto* c_train = app.add_subcommand("train", "Optimize a model on a scene");
    c_train->add_option("--scene", tr.scene, "Scene directory")->required();
    c_train->add_option("--config", tr.config, "key = value config file");
    c_train->add_option("--out", tr.out, "Checkpoint path")->required();
    c_train->add_option("--log", tr.log, "CSV log path (default: checkpoint path with .csv)");
    c_train->add_option("--set", tr.overrides, "Config override key=value (repeatable)");

    RenderArgs rd;
    auto* c_render = app.add_subcommand("render", "Render one pose");
    c_render->add_option("--checkpoint", rd.checkpoint)->required();
    c_render->add_option("--scene", rd.scene, "Scene directory providing the cameras")->required();
    c_render->add_option("--view", rd.view, "Pose id")->required();
    c_render->add_option("--exposure", rd.exposure)->capture_default_str();
    c_render->add_option("--mode", rd.mode)->check(CLI::IsMember({"hdr", "ldr", "branches"}))->capture_default_str();
    c_render->add_option("--out", rd.out, "Image path (hdr, ldr) or directory (branches)")->required();

    EvalArgs ev;
    auto* c_eval = app.add_subcommand("eval", "Score a checkpoint");
    c_eval->add_option("--checkpoint", ev.checkpoint)->required();
    c_eval->add_option("--scene", ev.scene)->required();
    c_eval->add_option("--split", ev.split)->check(CLI::IsMember({"train", "test", "all"}))->capture_default_str();

    GradcheckArgs gc;
    auto* c_gc = app.add_subcommand("gradcheck", "Compare analytic gradients with central differences");
    c_gc->add_option("--scene", gc.scene, "Scene directory (default: built-in fixture)");
    c_gc->add_option("--params", gc.params, "all, or comma-separated ids, groups or prefixes")->capture_default_str();
    c_gc->add_option("--step", gc.step)->capture_default_str();
    c_gc->add_option("--threshold", gc.threshold, "Maximum relative error")->capture_default_str();
    c_gc->add_option("--oracle", gc.oracle, "ext (long double reference) or f64")->capture_default_str();
    c_gc->add_option("--max-per-param", gc.max_per_param, "Coordinates per array, 0 for all")->capture_default_str();
    c_gc->add_option("--inject-fault", gc.fault, "Scale a VJP by this factor (testing)")->group("Testing");

    StatsArgs st;
    auto* c_stats = app.add_subcommand("densify-stats", "Per-Gaussian densification statistics");
    c_stats->add_option("--checkpoint", st.checkpoint)->required();
    c_stats->add_option("--scene", st.scene)->required();
    c_stats->add_option("--out-csv", st.out_csv)->required();
    c_stats->add_option("--s", st.s, "Gradient scaling strength")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kValidation;
    }
    spdlog::set_level(quiet ? spdlog::level::warn : spdlog::level::info);

    try {
        if (c_gen->parsed()) return gen_scene(gen);
        if (c_train->parsed()) return train(tr);
        if (c_render->parsed()) return render(rd);
        if (c_eval->parsed()) return eval(ev);
        if (c_gc->parsed()) return gradcheck(gc);
        if (c_stats->parsed()) return densify_stats(st);
    } catch (const IoError& e) {
        spdlog::error("{}", e.what());
        return kIo;
    } catch (const fs::filesystem_error& e) {
        spdlog::error("{}", e.what());
        return kIo;
    } catch (const NumericalError& e) {
        spdlog::error("{}", e.what());
        return kNumerical;
    } catch (const std::domain_error& e) {
        spdlog::error("{}", e.what());
        return kNumerical;
    } catch (const std::invalid_argument& e) {
        spdlog::error("{}", e.what());
        return kValidation;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kNumerical;
    }
    return kValidation;
}
