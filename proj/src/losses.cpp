#include "hdrsplat/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace hdrsplat {

namespace {

constexpr double kSsimSigma = 1.5;
constexpr int kSsimRadius = 5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::vector<double>& ssim_taps() {
    static const std::vector<double> taps = gaussian_kernel(kSsimSigma, kSsimRadius);
    return taps;
}

// One 1-D pass along x (axis 0) or y (axis 1). The adjoint scatters instead of gathers.
ImageBuffer pass(const ImageBuffer& in, std::span<const double> taps, int axis, bool adjoint) {
    ImageBuffer out(in.width, in.height, in.space);
    const int r = static_cast<int>(taps.size() / 2);
    const int w = in.width, h = in.height;
    const int len = axis == 0 ? w : h;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int i = axis == 0 ? x : y;
            for (int k = -r; k <= r; ++k) {
                const int j = reflect_index(i + k, len);
                const int sx = axis == 0 ? j : x, sy = axis == 0 ? y : j;
                const double t = taps[k + r];
                for (int c = 0; c < 3; ++c) {
                    if (adjoint)
                        out.at(sx, sy, c) += t * in.at(x, y, c);
                    else
                        out.at(x, y, c) += t * in.at(sx, sy, c);
                }
            }
        }
    return out;
}

}  // namespace

void LossWeights::validate() const {
    if (!(lambda1 >= 0 && lambda2 >= 0 && lambda3 >= 0 && gamma >= 0))
        throw std::invalid_argument("loss weights must be non-negative");
    if (!(blur_sigma > 0) || blur_radius < 0) throw std::invalid_argument("blur sigma must be positive");
}

std::vector<double> gaussian_kernel(double sigma, int radius) {
    if (!(sigma > 0) || radius < 0) throw std::invalid_argument("gaussian_kernel: invalid sigma or radius");
    std::vector<double> taps(2 * radius + 1);
    double sum = 0.0;
    for (int k = -radius; k <= radius; ++k) sum += taps[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
    for (double& t : taps) t /= sum;
    return taps;
}

int reflect_index(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

ImageBuffer blur(const ImageBuffer& img, std::span<const double> taps) {
    return pass(pass(img, taps, 0, false), taps, 1, false);
}

ImageBuffer blur_adjoint(const ImageBuffer& img, std::span<const double> taps) {
    return pass(pass(img, taps, 1, true), taps, 0, true);
}

double mse(const ImageBuffer& pred, const ImageBuffer& gt, ImageBuffer* grad) {
    require_same_shape(pred, gt, "mse");
    const double n = static_cast<double>(pred.data.size());
    if (grad) *grad = ImageBuffer(pred.width, pred.height);
    double s = 0.0;
    for (std::size_t k = 0; k < pred.data.size(); ++k) {
        const double d = pred.data[k] - gt.data[k];
        s += d * d;
        if (grad) grad->data[k] = 2.0 * d / n;
    }
    return s / n;
}

namespace {

// Mean of 1 - SSIM over the map, and d/d(a) of that mean. 1 - S is formed as
// (d1 B2 + d2 B1 - d1 d2) / (B1 B2) with d1 = (mu_a - mu_b)^2 and
// d2 = var(a - b), which avoids cancelling against 1 when a is close to b.
double mean_dissimilarity(const ImageBuffer& a, const ImageBuffer& b, ImageBuffer* grad) {
    require_same_shape(a, b, "ssim");
    const auto& taps = ssim_taps();
    const std::size_t n = a.data.size();
    ImageBuffer aa(a.width, a.height), bb(a.width, a.height), ab(a.width, a.height);
    ImageBuffer diff(a.width, a.height), diff2(a.width, a.height);
    for (std::size_t k = 0; k < n; ++k) {
        aa.data[k] = a.data[k] * a.data[k];
        bb.data[k] = b.data[k] * b.data[k];
        ab.data[k] = a.data[k] * b.data[k];
        diff.data[k] = a.data[k] - b.data[k];
        diff2.data[k] = diff.data[k] * diff.data[k];
    }
    const ImageBuffer mu_a = blur(a, taps), mu_b = blur(b, taps);
    const ImageBuffer e_aa = blur(aa, taps), e_bb = blur(bb, taps), e_ab = blur(ab, taps);
    const ImageBuffer mu_d = blur(diff, taps), e_dd = blur(diff2, taps);

    ImageBuffer d_mu, d_eaa, d_eab;
    if (grad) d_mu = d_eaa = d_eab = ImageBuffer(a.width, a.height);
    double total = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double ma = mu_a.data[k], mb = mu_b.data[k];
        const double va = e_aa.data[k] - ma * ma, vb = e_bb.data[k] - mb * mb, cab = e_ab.data[k] - ma * mb;
        const double b1 = ma * ma + mb * mb + kC1, b2 = va + vb + kC2;
        const double d1 = mu_d.data[k] * mu_d.data[k];
        const double d2 = e_dd.data[k] - d1;
        total += (d1 * b2 + d2 * b1 - d1 * d2) / (b1 * b2);
        if (grad) {
            const double a1 = 2 * ma * mb + kC1, a2 = 2 * cab + kC2;
            const double s = a1 * a2 / (b1 * b2);
            // derivatives of S; the caller's quantity is 1 - S
            d_mu.data[k] = -inv_n * ((2 * mb * a2 - 2 * mb * a1) / (b1 * b2) - s * (2 * ma / b1 - 2 * ma / b2));
            d_eaa.data[k] = -inv_n * (-s / b2);
            d_eab.data[k] = -inv_n * (2 * a1 / (b1 * b2));
        }
    }
    if (grad) {
        const ImageBuffer g_mu = blur_adjoint(d_mu, taps);
        const ImageBuffer g_aa = blur_adjoint(d_eaa, taps);
        const ImageBuffer g_ab = blur_adjoint(d_eab, taps);
        *grad = ImageBuffer(a.width, a.height);
        for (std::size_t k = 0; k < n; ++k)
            grad->data[k] = g_mu.data[k] + 2 * a.data[k] * g_aa.data[k] + b.data[k] * g_ab.data[k];
    }
    return total * inv_n;
}

}  // namespace

double ssim(const ImageBuffer& a, const ImageBuffer& b, ImageBuffer* grad) {
    const double d = mean_dissimilarity(a, b, grad);
    if (grad)
        for (double& g : grad->data) g = -g;
    return 1.0 - d;
}

double dssim(const ImageBuffer& pred, const ImageBuffer& gt, ImageBuffer* grad) {
    const double d = mean_dissimilarity(pred, gt, grad);
    if (grad)
        for (double& g : grad->data) g *= 0.5;
    return 0.5 * d;
}

double reconstruction_loss(const LdrOutputs& out, const ImageBuffer& gt, double gamma, ReconstructionGrads* grads) {
    const ImageBuffer* preds[3] = {&out.i_ldr, &out.i_ig, &out.i_gi};
    ImageBuffer* dst[3] = {nullptr, nullptr, nullptr};
    if (grads) dst[0] = &grads->d_ldr, dst[1] = &grads->d_ig, dst[2] = &grads->d_gi;
    double loss = 0.0;
    for (int i = 0; i < 3; ++i) {
        require_same_shape(*preds[i], gt, "reconstruction_loss");
        ImageBuffer gm, gs;
        loss += gamma * mse(*preds[i], gt, dst[i] ? &gm : nullptr) + dssim(*preds[i], gt, dst[i] ? &gs : nullptr);
        if (dst[i]) {
            for (std::size_t k = 0; k < gm.data.size(); ++k) gm.data[k] = gamma * gm.data[k] + gs.data[k];
            *dst[i] = std::move(gm);
        }
    }
    return loss;
}

double consistency_loss(const ImageBuffer& scaled, const ImageBuffer& relit, std::span<const double> taps,
                        ImageBuffer* d_scaled, ImageBuffer* d_relit) {
    require_same_shape(scaled, relit, "consistency_loss");
    const ImageBuffer ba = blur(scaled, taps), bb = blur(relit, taps);
    const std::size_t n = ba.data.size();
    const double inv_n = 1.0 / static_cast<double>(n);
    ImageBuffer sign(scaled.width, scaled.height);
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double d = ba.data[k] - bb.data[k];
        s += std::abs(d);
        sign.data[k] = d > 0 ? inv_n : d < 0 ? -inv_n : 0.0;
    }
    if (d_scaled || d_relit) {
        ImageBuffer g = blur_adjoint(sign, taps);
        if (d_relit) {
            *d_relit = g;
            for (double& v : d_relit->data) v = -v;
        }
        if (d_scaled) *d_scaled = std::move(g);
    }
    return s * inv_n;
}

double unit_exposure_loss(const ImageBuffer& pred, const ImageBuffer& gt, ImageBuffer* grad) {
    return mse(pred, gt, grad);
}

LossBreakdown total_loss(double rec, double cons, double unit, const LossWeights& w) {
    w.validate();
    LossBreakdown b{rec, cons, unit, 0.0};
    b.total = w.lambda1 * rec + w.lambda2 * cons + w.lambda3 * unit;
    return b;
}

}  // namespace hdrsplat
