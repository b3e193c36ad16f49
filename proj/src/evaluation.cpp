#include "hdrsplat/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <limits>
#include <set>

#include "hdrsplat/dataio.hpp"

namespace hdrsplat {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double ssim_or_nan(const ImageBuffer& a, const ImageBuffer& b) {
    if (a.width < 11 || a.height < 11) return kNaN;
    return ssim_metric(a, b);
}

double mean_of(double sum, std::size_t n) { return n ? sum / static_cast<double>(n) : kNaN; }

}  // namespace

bool is_novel_exposure(double t) {
    for (double e : kTrainExposures)
        if (e == t) return false;
    return true;
}

namespace {

std::vector<double> ranks(std::span<const double> x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
        i = j + 1;
    }
    return r;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("spearman: length mismatch");
    if (a.size() < 2) return kNaN;
    const auto ra = ranks(a), rb = ranks(b);
    const double n = static_cast<double>(a.size());
    const double mean = (n + 1) / 2;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - mean) * (rb[i] - mean);
        saa += (ra[i] - mean) * (ra[i] - mean);
        sbb += (rb[i] - mean) * (rb[i] - mean);
    }
    if (saa == 0 || sbb == 0) return kNaN;
    return sab / std::sqrt(saa * sbb);
}

Rendering render_view(const Model& model, const Camera& camera, double exposure, const PipelineOptions& options) {
    Rendering r;
    r.hdr = render_branches(model, camera, exposure, exposure, options.raster, nullptr, options.gi_enabled);
    r.ldr = tone_map(r.hdr.i_hdr_scaled, r.hdr.i_hdr_relit, model.tonemapper, options.fuse);
    return r;
}

EvalSummary evaluate(const Model& model, std::span<const ViewRecord> views, const PipelineOptions& options) {
    EvalSummary s;
    double oe_p = 0, oe_s = 0, ne_p = 0, ne_s = 0, h_p = 0, h_s = 0;
    std::set<int> hdr_done;
    for (const ViewRecord& v : views) {
        const Rendering r = render_view(model, v.camera, v.exposure_t, options);
        ViewMetrics m;
        m.pose = v.pose;
        m.exposure = v.exposure_t;
        m.novel_exposure = is_novel_exposure(v.exposure_t);
        m.psnr = psnr(r.ldr.i_ldr, v.gt_ldr);
        m.ssim = ssim_or_nan(r.ldr.i_ldr, v.gt_ldr);
        (m.novel_exposure ? ne_p : oe_p) += m.psnr;
        (m.novel_exposure ? ne_s : oe_s) += m.ssim;
        ++(m.novel_exposure ? s.ne_count : s.oe_count);
        s.views.push_back(m);

        if (v.gt_hdr && hdr_done.insert(v.pose).second) {
            const ImageBuffer pred = mu_law(r.hdr.i_hdr);
            const ImageBuffer gt = mu_law(*v.gt_hdr);
            PoseMetrics pm{v.pose, psnr(pred, gt), ssim_or_nan(pred, gt)};
            h_p += pm.psnr;
            h_s += pm.ssim;
            s.hdr.push_back(pm);
        }
    }
    s.oe_psnr = mean_of(oe_p, s.oe_count);
    s.oe_ssim = mean_of(oe_s, s.oe_count);
    s.ne_psnr = mean_of(ne_p, s.ne_count);
    s.ne_ssim = mean_of(ne_s, s.ne_count);
    s.hdr_psnr = mean_of(h_p, s.hdr.size());
    s.hdr_ssim = mean_of(h_s, s.hdr.size());
    return s;
}

double starvation_correlation(const DensifyState& state) {
    std::vector<double> grad, inv_dev;
    for (std::size_t i = 0; i < state.size(); ++i)
        if (state.visible_count[i] > 0) {
            grad.push_back(state.average_gradient(i));
            inv_dev.push_back(1.0 / std::max(state.deviation(i), 1e-12));
        }
    return spearman(grad, inv_dev);
}

}  // namespace hdrsplat
