#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "hdrsplat/checkpoint.hpp"
#include "hdrsplat/dataio.hpp"
#include "hdrsplat/densify.hpp"
#include "hdrsplat/evaluation.hpp"
#include "hdrsplat/gradcheck.hpp"
#include "hdrsplat/trainer.hpp"

namespace py = pybind11;
using namespace hdrsplat;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_numpy(const ImageBuffer& img) {
    Array out({img.height, img.width, ImageBuffer::kChannels});
    std::copy(img.data.begin(), img.data.end(), out.mutable_data());
    return out;
}

ImageBuffer from_numpy(const Array& a, ColorSpace space) {
    if (a.ndim() != 3 || a.shape(2) != ImageBuffer::kChannels)
        throw std::invalid_argument("expected an array of shape (height, width, 3)");
    ImageBuffer img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), space);
    std::copy(a.data(), a.data() + a.size(), img.data.begin());
    return img;
}

TrainConfig config_from(const std::map<std::string, std::string>& overrides) {
    std::ostringstream text;
    for (const auto& [k, v] : overrides) text << k << " = " << v << "\n";
    std::istringstream is(text.str());
    return parse_train_config(is);
}

py::dict summary_dict(const EvalSummary& s) {
    py::dict d;
    d["oe_psnr"] = s.oe_psnr;
    d["oe_ssim"] = s.oe_ssim;
    d["ne_psnr"] = s.ne_psnr;
    d["ne_ssim"] = s.ne_ssim;
    d["hdr_psnr"] = s.hdr_psnr;
    d["hdr_ssim"] = s.hdr_ssim;
    d["oe_count"] = s.oe_count;
    d["ne_count"] = s.ne_count;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "CPU differentiable Gaussian splatting with learned HDR tone mapping";

    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

    py::class_<LoadedScene>(m, "Scene")
        .def_property_readonly("extent", [](const LoadedScene& s) { return s.extent; })
        .def_property_readonly("n_poses", [](const LoadedScene& s) { return s.cameras.size(); })
        .def_property_readonly("n_train_views", [](const LoadedScene& s) { return s.views.train.size(); })
        .def_property_readonly("n_test_views", [](const LoadedScene& s) { return s.views.test.size(); })
        .def_property_readonly("image_size", [](const LoadedScene& s) { return s.spec.image_size; })
        .def("view", [](const LoadedScene& s, const std::string& split, std::size_t i) {
            const auto& list = split == "train" ? s.views.train : s.views.test;
            const ViewRecord& v = list.at(i);
            py::dict d;
            d["pose"] = v.pose;
            d["exposure"] = v.exposure_t;
            d["ldr"] = to_numpy(v.gt_ldr);
            if (v.gt_hdr) d["hdr"] = to_numpy(*v.gt_hdr);
            return d;
        }, py::arg("split"), py::arg("index"));

    m.def("generate_scene", [](const std::filesystem::path& out_dir, std::uint64_t seed, int gaussians, int size, int views) {
        SceneSpec spec;
        spec.seed = seed;
        spec.n_gaussians = gaussians;
        spec.image_size = size;
        spec.n_views = views;
        spec.validate();
        std::filesystem::create_directories(out_dir);
        const SyntheticScene scene = generate_scene(spec);
        write_scene(out_dir, scene, make_views(scene));
    }, py::arg("out_dir"), py::arg("seed") = 7, py::arg("gaussians") = 48, py::arg("size") = 64, py::arg("views") = 12);

    m.def("load_scene", &load_scene, py::arg("path"));

    py::class_<Checkpoint>(m, "Checkpoint")
        .def_property_readonly("n_gaussians", [](const Checkpoint& c) { return c.model.cloud.size(); })
        .def_property_readonly("iteration", [](const Checkpoint& c) { return c.meta.iteration; })
        .def_property_readonly("fuse", [](const Checkpoint& c) { return std::string(to_string(c.meta.fuse)); })
        .def_property_readonly("parameter_count", [](const Checkpoint& c) { return parameter_count(c.model); })
        .def("render", [](const Checkpoint& c, const LoadedScene& scene, std::size_t pose, double exposure) {
            const Rendering r = render_view(c.model, scene.cameras.at(pose), exposure,
                                            inference_options(c.meta, scene.background));
            py::dict d;
            d["i_hdr"] = to_numpy(r.hdr.i_hdr);
            d["i_hdr_scaled"] = to_numpy(r.hdr.i_hdr_scaled);
            d["i_hdr_relit"] = to_numpy(r.hdr.i_hdr_relit);
            d["i_glo"] = to_numpy(r.ldr.i_glo);
            d["i_loc"] = to_numpy(r.ldr.i_loc);
            d["i_loc_hat"] = to_numpy(r.ldr.i_loc_hat);
            d["i_ldr"] = to_numpy(r.ldr.i_ldr);
            return d;
        }, py::arg("scene"), py::arg("pose"), py::arg("exposure") = 1.0)
        .def("evaluate", [](const Checkpoint& c, const LoadedScene& scene, const std::string& split) {
            std::vector<ViewRecord> views;
            if (split == "train" || split == "all") views.insert(views.end(), scene.views.train.begin(), scene.views.train.end());
            if (split == "test" || split == "all") views.insert(views.end(), scene.views.test.begin(), scene.views.test.end());
            if (views.empty()) throw std::invalid_argument("split must be train, test or all");
            return summary_dict(evaluate(c.model, views, inference_options(c.meta, scene.background)));
        }, py::arg("scene"), py::arg("split") = "test");

    m.def("load_checkpoint", &load_checkpoint, py::arg("path"));

    m.def("train", [](const LoadedScene& scene, const std::filesystem::path& out,
                      const std::map<std::string, std::string>& overrides) {
        const TrainConfig config = config_from(overrides);
        TrainReport report;
        {
            py::gil_scoped_release release;
            report = run(config, scene, {.checkpoint = out, .csv = nullptr});
        }
        py::list totals;
        for (const LossBreakdown& l : report.log) totals.append(l.total);
        py::list evals;
        for (const EvalPoint& e : report.evals) evals.append(py::make_tuple(e.iteration, e.psnr_ldr, e.psnr_hdr));
        py::dict d;
        d["loss"] = totals;
        d["evals"] = evals;
        d["gaussians"] = report.final_gaussians;
        d["seconds"] = report.wall_seconds;
        return d;
    }, py::arg("scene"), py::arg("checkpoint"), py::arg("overrides") = std::map<std::string, std::string>{});

    m.def("config_text", [](const std::map<std::string, std::string>& overrides) {
        return format_train_config(config_from(overrides));
    }, py::arg("overrides") = std::map<std::string, std::string>{});

    m.def("gradcheck", [](std::size_t max_per_param, double threshold) {
        GradcheckFixture fixture = make_gradcheck_fixture();
        FdCheckOptions o;
        o.max_per_param = max_per_param;
        GradcheckReport r;
        {
            py::gil_scoped_release release;
            r = run_gradcheck(fixture, o, GradOracle::Extended);
        }
        py::dict d;
        d["max_relative_error"] = r.result.max_relative_error;
        d["worst_param"] = r.result.worst_param;
        d["checked"] = r.result.checked;
        d["passed"] = r.result.max_relative_error < threshold;
        d["seconds"] = r.seconds;
        return d;
    }, py::arg("max_per_param") = 4, py::arg("threshold") = 1e-4);

    m.def("psnr", [](const Array& a, const Array& b) {
        return psnr(from_numpy(a, ColorSpace::LdrUnit), from_numpy(b, ColorSpace::LdrUnit));
    });
    m.def("ssim", [](const Array& a, const Array& b) {
        return ssim_metric(from_numpy(a, ColorSpace::LdrUnit), from_numpy(b, ColorSpace::LdrUnit));
    });
    m.def("mu_law", [](const Array& a, double mu) { return to_numpy(mu_law(from_numpy(a, ColorSpace::LinearHdr), mu)); },
          py::arg("hdr"), py::arg("mu") = 5000.0);
    m.def("reference_crf", &reference_crf);
    m.def("scale_factor", &scale_factor, py::arg("l_a"), py::arg("l_hat"), py::arg("s") = 1.0);
    m.def("spearman", [](const std::vector<double>& a, const std::vector<double>& b) { return spearman(a, b); });
}
