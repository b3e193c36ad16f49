#include "hdrsplat/reference.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace hdrsplat {

namespace {

using Real = long double;
using Img = std::vector<Real>;  // h x w x 3

Real sig(Real x) { return x >= 0 ? 1 / (1 + std::exp(-x)) : std::exp(x) / (1 + std::exp(x)); }
Real softp(Real x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

constexpr int kMaxWidth = 64;

// y must hold at least the output width
void run_mlp(const MlpParams& p, const Real* x_in, Real* y_out) {
    Real buf[2][kMaxWidth];
    const Real* x = x_in;
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        const DenseLayer& d = p.layers[l];
        const bool last = l + 1 == p.layers.size();
        Real* y = last ? y_out : buf[l % 2];
        for (int o = 0; o < d.out; ++o) {
            Real z = d.bias[o];
            const double* row = d.weight.data() + static_cast<std::size_t>(o) * d.in;
            for (int i = 0; i < d.in; ++i) z += static_cast<Real>(row[i]) * x[i];
            if (!last)
                y[o] = z > 0 ? z : static_cast<Real>(kLeakySlope) * z;
            else if (p.output_map == OutputMap::Softplus)
                y[o] = softp(z);
            else if (p.output_map == OutputMap::Sigmoid)
                y[o] = sig(z);
            else
                y[o] = z;
        }
        x = y;
    }
}

struct RSplat {
    std::size_t index;
    Real depth, u, v, ca, cb, cc, alpha;
    int x0, x1, y0, y1;
};

using M3 = std::array<Real, 9>;

M3 mul(const M3& a, const M3& b) {
    M3 r{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) r[3 * i + j] += a[3 * i + k] * b[3 * k + j];
    return r;
}

M3 tr(const M3& a) { return {a[0], a[3], a[6], a[1], a[4], a[7], a[2], a[5], a[8]}; }

std::vector<RSplat> project_all(const GaussianCloud& c, const Camera& cam, const RasterConfig& rc) {
    std::vector<RSplat> out;
    M3 rw;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) rw[3 * i + j] = cam.world_to_cam[4 * i + j];
    for (std::size_t i = 0; i < c.size(); ++i) {
        Real p[3];
        for (int r = 0; r < 3; ++r) {
            p[r] = cam.world_to_cam[4 * r + 3];
            for (int k = 0; k < 3; ++k) p[r] += rw[3 * r + k] * static_cast<Real>(c.mu[3 * i + k]);
        }
        if (!(p[2] > cam.near) || !(p[2] < cam.far)) continue;
        Real q[4] = {c.rotation[4 * i], c.rotation[4 * i + 1], c.rotation[4 * i + 2], c.rotation[4 * i + 3]};
        const Real qn = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
        for (Real& e : q) e /= qn;
        const Real w = q[0], x = q[1], y = q[2], z = q[3];
        const M3 rot{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
                     2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
                     2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
        M3 s{};
        for (int k = 0; k < 3; ++k) s[4 * k] = std::exp(static_cast<Real>(c.log_scale[3 * i + k]));
        const M3 rs = mul(rot, s);
        const M3 sigma = mul(rs, tr(rs));
        const M3 sc = mul(mul(rw, sigma), tr(rw));
        // J is 2x3; pad to 3x3 with a zero row
        const M3 jac{cam.fx / p[2], 0, -cam.fx * p[0] / (p[2] * p[2]), 0, cam.fy / p[2], -cam.fy * p[1] / (p[2] * p[2]),
                     0, 0, 0};
        const M3 c2 = mul(mul(jac, sc), tr(jac));
        const Real a = c2[0] + static_cast<Real>(rc.low_pass), b = c2[1], cc = c2[4] + static_cast<Real>(rc.low_pass);
        const Real det = a * cc - b * b;
        if (!(det > 0)) continue;
        RSplat sp;
        sp.index = i;
        sp.depth = p[2];
        sp.u = cam.fx * p[0] / p[2] + cam.cx;
        sp.v = cam.fy * p[1] / p[2] + cam.cy;
        sp.ca = cc / det;
        sp.cb = -b / det;
        sp.cc = a / det;
        sp.alpha = sig(c.opacity_logit[i]);
        if (std::isinf(rc.bbox_sigma)) {
            sp.x0 = 0, sp.y0 = 0, sp.x1 = cam.width - 1, sp.y1 = cam.height - 1;
        } else {
            const Real mid = (a + cc) / 2;
            const Real lam = mid + std::sqrt(std::max<Real>(0.1L, mid * mid - det));
            const Real r = static_cast<Real>(rc.bbox_sigma) * std::sqrt(lam);
            sp.x0 = std::max(0, static_cast<int>(std::ceil(sp.u - r - 0.5L)));
            sp.x1 = std::min(cam.width - 1, static_cast<int>(std::floor(sp.u + r - 0.5L)));
            sp.y0 = std::max(0, static_cast<int>(std::ceil(sp.v - r - 0.5L)));
            sp.y1 = std::min(cam.height - 1, static_cast<int>(std::floor(sp.v + r - 0.5L)));
            if (sp.x0 > sp.x1 || sp.y0 > sp.y1) continue;
        }
        out.push_back(sp);
    }
    std::sort(out.begin(), out.end(), [](const RSplat& l, const RSplat& r) {
        return l.depth < r.depth || (l.depth == r.depth && l.index < r.index);
    });
    return out;
}

// Composites both color sets at once.
void render(const std::vector<RSplat>& sp, const std::vector<Real>& col, const std::vector<Real>& col2,
            const Camera& cam, const RasterConfig& rc, Img& out, Img& out2) {
    const int w = cam.width, h = cam.height;
    out.assign(static_cast<std::size_t>(w) * h * 3, 0);
    out2 = out;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            Real T = 1;
            Real* o = &out[(static_cast<std::size_t>(y) * w + x) * 3];
            Real* o2 = &out2[(static_cast<std::size_t>(y) * w + x) * 3];
            for (const RSplat& s : sp) {
                if (x < s.x0 || x > s.x1 || y < s.y0 || y > s.y1) continue;
                const Real dx = x + 0.5L - s.u, dy = y + 0.5L - s.v;
                const Real a = s.alpha * std::exp(-(s.ca * dx * dx + s.cc * dy * dy) / 2 - s.cb * dx * dy);
                if (a < static_cast<Real>(rc.alpha_skip)) continue;
                for (int k = 0; k < 3; ++k) {
                    o[k] += a * T * col[3 * s.index + k];
                    o2[k] += a * T * col2[3 * s.index + k];
                }
                T *= 1 - a;
                if (T < static_cast<Real>(rc.min_transmittance)) break;
            }
            for (int k = 0; k < 3; ++k) {
                o[k] += T * static_cast<Real>(rc.background[k]);
                o2[k] += T * static_cast<Real>(rc.background[k]);
            }
        }
}

std::pair<Img, Img> tm_pair(const Img& hdr, const MlpParams& f_tm) {
    Img g(hdr.size()), l(hdr.size());
    for (std::size_t p = 0; p < hdr.size() / 3; ++p) {
        Real in[3], y[6];
        for (int k = 0; k < 3; ++k) in[k] = std::log(hdr[3 * p + k] + static_cast<Real>(kLogEpsilon));
        run_mlp(f_tm, in, y);
        for (int k = 0; k < 3; ++k) g[3 * p + k] = y[k], l[3 * p + k] = y[3 + k];
    }
    return {g, l};
}

Img mix(const Img& a, const Img& b, const MlpParams& f_mix) {
    Img out(a.size());
    for (std::size_t p = 0; p < a.size() / 3; ++p) {
        const Real in[6] = {a[3 * p], a[3 * p + 1], a[3 * p + 2], b[3 * p], b[3 * p + 1], b[3 * p + 2]};
        Real y[3];
        run_mlp(f_mix, in, y);
        for (int k = 0; k < 3; ++k) out[3 * p + k] = y[k];
    }
    return out;
}

int mirror(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i = ((i % period) + period) % period;
    return i < n ? i : period - i;
}

std::vector<Real> gaussian_taps(Real sigma, int radius) {
    std::vector<Real> t(2 * radius + 1);
    Real s = 0;
    for (int k = -radius; k <= radius; ++k) s += t[k + radius] = std::exp(-Real(k * k) / (2 * sigma * sigma));
    for (Real& v : t) v /= s;
    return t;
}

// 2-D window with reflect padding: offsets[i] is the mirrored coordinate of
// position i - r for each output coordinate.
struct Window {
    std::vector<Real> taps;
    int r;
    std::vector<int> xs, ys;  // (w x (2r+1)), (h x (2r+1))
    Window(Real sigma, int radius, int w, int h) : taps(gaussian_taps(sigma, radius)), r(radius) {
        for (int x = 0; x < w; ++x)
            for (int i = -r; i <= r; ++i) xs.push_back(mirror(x + i, w));
        for (int y = 0; y < h; ++y)
            for (int j = -r; j <= r; ++j) ys.push_back(mirror(y + j, h));
    }
};

Real mse(const Img& a, const std::vector<double>& b) {
    Real s = 0;
    for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    return s / a.size();
}

Real dssim(const Img& a, const std::vector<double>& gt, int w, int h) {
    const Window win(1.5L, 5, w, h);
    const int span = 2 * win.r + 1;
    const Real c1 = 1e-4L, c2 = 9e-4L;
    Real sum = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < 3; ++ch) {
                Real ma = 0, mb = 0;
                for (int j = 0; j < span; ++j)
                    for (int i = 0; i < span; ++i) {
                        const std::size_t q = (static_cast<std::size_t>(win.ys[y * span + j]) * w + win.xs[x * span + i]) * 3 + ch;
                        const Real wt = win.taps[i] * win.taps[j];
                        ma += wt * a[q];
                        mb += wt * gt[q];
                    }
                Real va = 0, vb = 0, cab = 0;
                for (int j = 0; j < span; ++j)
                    for (int i = 0; i < span; ++i) {
                        const std::size_t q = (static_cast<std::size_t>(win.ys[y * span + j]) * w + win.xs[x * span + i]) * 3 + ch;
                        const Real wt = win.taps[i] * win.taps[j];
                        const Real da = a[q] - ma, db = gt[q] - mb;
                        va += wt * da * da;
                        vb += wt * db * db;
                        cab += wt * da * db;
                    }
                const Real num = (2 * ma * mb + c1) * (2 * cab + c2);
                const Real den = (ma * ma + mb * mb + c1) * (va + vb + c2);
                sum += (den - num) / den;
            }
    return sum / (static_cast<Real>(w) * h * 3) / 2;
}

Real consistency(const Img& a, const Img& b, int w, int h, Real sigma, int radius) {
    const Window win(sigma, radius, w, h);
    const int span = 2 * win.r + 1;
    Real sum = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < 3; ++ch) {
                Real d = 0;
                for (int j = 0; j < span; ++j)
                    for (int i = 0; i < span; ++i) {
                        const std::size_t q = (static_cast<std::size_t>(win.ys[y * span + j]) * w + win.xs[x * span + i]) * 3 + ch;
                        d += win.taps[i] * win.taps[j] * (a[q] - b[q]);
                    }
                sum += std::abs(d);
            }
    return sum / (static_cast<Real>(w) * h * 3);
}

}  // namespace

long double reference_loss(const Model& model, const PipelineSample& sample, const PipelineOptions& options) {
    const Camera& cam = *sample.camera;
    const GaussianCloud& c = model.cloud;
    const std::size_t n = c.size();
    const LossWeights& lw = options.weights;
    const int w = cam.width, h = cam.height;

    std::vector<Real> l_a(3 * n), col(3 * n), col2(3 * n);
    for (std::size_t k = 0; k < 3 * n; ++k) l_a[k] = softp(c.l_a_raw[k]);
    for (std::size_t i = 0; i < n; ++i) {
        Real in[3 + kReflectanceDim];
        for (int k = 0; k < 3; ++k) in[k] = l_a[3 * i + k];
        for (int k = 0; k < kReflectanceDim; ++k) in[3 + k] = c.h_r[kReflectanceDim * i + k];
        run_mlp(model.composer, in, &col[3 * i]);
        if (options.gi_enabled) {
            const Real mod_in[4] = {l_a[3 * i], l_a[3 * i + 1], l_a[3 * i + 2], Real(sample.lighting)};
            run_mlp(model.modulator, mod_in, in);
            run_mlp(model.composer, in, &col2[3 * i]);
        }
    }
    Img hdr, relit;
    render(project_all(c, cam, options.raster), col, col2, cam, options.raster, hdr, relit);
    const Real t = sample.exposure;
    Img scaled(hdr.size());
    for (std::size_t k = 0; k < hdr.size(); ++k) scaled[k] = t * hdr[k];
    if (!options.gi_enabled) relit = scaled;

    const auto [glo, loc] = tm_pair(scaled, model.tonemapper.f_tm);
    const auto [glo_hat, loc_hat] = tm_pair(relit, model.tonemapper.f_tm);
    (void)glo_hat;
    const Img ig = mix(glo, loc_hat, model.tonemapper.f_mix);
    const Img gi = mix(glo, loc, model.tonemapper.f_mix);
    Img ldr(ig.size());
    const Real k = options.fuse == FuseMode::Sum ? 1 : 0.5L;
    for (std::size_t q = 0; q < ldr.size(); ++q) ldr[q] = k * (ig[q] + gi[q]);

    const auto& gt = sample.gt_ldr->data;
    Real rec = 0;
    for (const Img* im : {static_cast<const Img*>(&ldr), &ig, &gi}) rec += static_cast<Real>(lw.gamma) * mse(*im, gt) + dssim(*im, gt, w, h);
    Real cons = 0;
    if (lw.lambda2 > 0) cons = consistency(scaled, relit, w, h, lw.blur_sigma, lw.blur_radius);
    Real unit = 0;
    if (lw.lambda3 > 0 && sample.gt_unit) {
        const auto [ug, ul] = tm_pair(hdr, model.tonemapper.f_tm);
        unit = mse(mix(ug, ul, model.tonemapper.f_mix), sample.gt_unit->data);
    }
    return static_cast<Real>(lw.lambda1) * rec + static_cast<Real>(lw.lambda2) * cons +
           static_cast<Real>(lw.lambda3) * unit;
}

}  // namespace hdrsplat
