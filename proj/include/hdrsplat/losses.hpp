#pragma once

#include <span>
#include <vector>

#include "hdrsplat/image.hpp"
#include "hdrsplat/tonemap.hpp"

namespace hdrsplat {

struct LossWeights {
    double lambda1 = 1.0;
    double lambda2 = 0.5;
    double lambda3 = 0.5;
    double gamma = 0.2;
    double blur_sigma = 2.0;
    int blur_radius = 5;

    void validate() const;
};

struct LossBreakdown {
    double rec = 0.0;
    double cons = 0.0;
    double unit = 0.0;
    double total = 0.0;
};

/// Normalized 1-D Gaussian taps, length 2*radius + 1.
std::vector<double> gaussian_kernel(double sigma, int radius);

/// Mirror index without repeating the edge sample (-1 -> 1, n -> n-2).
int reflect_index(int i, int n);

/// Separable channelwise blur with reflect padding, and its adjoint.
ImageBuffer blur(const ImageBuffer& img, std::span<const double> taps);
ImageBuffer blur_adjoint(const ImageBuffer& img, std::span<const double> taps);

/// Mean squared error over pixels and channels; `grad` receives d/d(pred).
double mse(const ImageBuffer& pred, const ImageBuffer& gt, ImageBuffer* grad = nullptr);

/// Mean of the SSIM map with an 11x11 Gaussian window (sigma 1.5) and reflect
/// padding, so every pixel has a value. `grad` receives d(mean SSIM)/d(a).
double ssim(const ImageBuffer& a, const ImageBuffer& b, ImageBuffer* grad = nullptr);

/// (1 - ssim) / 2
double dssim(const ImageBuffer& pred, const ImageBuffer& gt, ImageBuffer* grad = nullptr);

struct ReconstructionGrads {
    ImageBuffer d_ldr, d_ig, d_gi;
};

/// Sum over {i_ldr, i_ig, i_gi} of gamma * MSE + D-SSIM against `gt`.
double reconstruction_loss(const LdrOutputs& out, const ImageBuffer& gt, double gamma,
                           ReconstructionGrads* grads = nullptr);

/// Mean |blur(a) - blur(b)|. The subgradient of |0| is taken as 0.
double consistency_loss(const ImageBuffer& scaled, const ImageBuffer& relit, std::span<const double> taps,
                        ImageBuffer* d_scaled = nullptr, ImageBuffer* d_relit = nullptr);

/// MSE between the unit-exposure prediction and its ground truth.
double unit_exposure_loss(const ImageBuffer& pred, const ImageBuffer& gt, ImageBuffer* grad = nullptr);

LossBreakdown total_loss(double rec, double cons, double unit, const LossWeights& w);

}  // namespace hdrsplat
