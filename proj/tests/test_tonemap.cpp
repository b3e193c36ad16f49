#include <gtest/gtest.h>

#include <random>

#include "helpers.hpp"
#include "hdrsplat/gradengine.hpp"
#include "hdrsplat/tonemap.hpp"

using namespace hdrsplat;

namespace {

ToneMapperParams mapper(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return make_model(fixtures::random_cloud(1, rng), seed).tonemapper;
}

ImageBuffer hdr_image(int w, int h, std::mt19937_64& rng) {
    ImageBuffer img(w, h);
    std::uniform_real_distribution<double> u(std::log(0.01), std::log(8.0));
    for (double& v : img.data) v = std::exp(u(rng));
    return img;
}

double weighted(const ImageBuffer& w, const ImageBuffer& img) {
    double s = 0;
    for (std::size_t k = 0; k < img.data.size(); ++k) s += w.data[k] * img.data[k];
    return s;
}

}  // namespace

TEST(MuLaw, ReferenceValues) {
    ImageBuffer img(2, 1);
    img.data = {0.5, 1.0, 0.0, 0.25, 0.5, 1.0};
    const ImageBuffer y = mu_law(img);
    EXPECT_NEAR(y.data[0], 0.9186432718796463, 1e-15);
    EXPECT_DOUBLE_EQ(y.data[1], 1.0);
    EXPECT_DOUBLE_EQ(y.data[2], 0.0);
}

TEST(MuLaw, MonotoneAndZeroImage) {
    ImageBuffer img(100, 1);
    for (int k = 0; k < 300; ++k) img.data[k] = k / 299.0;
    const ImageBuffer y = mu_law(img);
    for (int k = 1; k < 300; ++k) EXPECT_GT(y.data[k], y.data[k - 1]);
    const ImageBuffer z = mu_law(ImageBuffer(3, 3));
    for (double v : z.data) EXPECT_EQ(v, 0.0);
    img.data[7] = -1;
    EXPECT_THROW(mu_law(img), std::invalid_argument);
}

TEST(ToneMap, PairRejectsNegativeRadiance) {
    const ToneMapperParams tm = mapper(1);
    ImageBuffer img(2, 2, ColorSpace::LinearHdr, 0.5);
    img.data[3] = -0.1;
    EXPECT_THROW(tone_map_pair(img, tm.f_tm), std::invalid_argument);
}

TEST(ToneMap, OutputsLieInUnitRange) {
    std::mt19937_64 rng(2);
    const ToneMapperParams tm = mapper(2);
    const ImageBuffer hdr = hdr_image(7, 5, rng);
    const LdrOutputs o = tone_map(hdr, hdr, tm, FuseMode::Mean);
    for (const ImageBuffer* img : {&o.i_glo, &o.i_loc, &o.i_ig, &o.i_gi, &o.i_ldr})
        for (double v : img->data) {
            EXPECT_GT(v, 0.0);
            EXPECT_LT(v, 1.0);
        }
}

TEST(ToneMap, FuseModesDifferByHalf) {
    std::mt19937_64 rng(3);
    const ToneMapperParams tm = mapper(3);
    const ImageBuffer a = hdr_image(4, 4, rng), b = hdr_image(4, 4, rng);
    const LdrOutputs s = tone_map(a, b, tm, FuseMode::Sum);
    const LdrOutputs m = tone_map(a, b, tm, FuseMode::Mean);
    for (std::size_t k = 0; k < s.i_ldr.data.size(); ++k) {
        EXPECT_DOUBLE_EQ(s.i_ldr.data[k], s.i_ig.data[k] + s.i_gi.data[k]);
        EXPECT_DOUBLE_EQ(m.i_ldr.data[k], 0.5 * s.i_ldr.data[k]);
    }
    EXPECT_EQ(fuse_mode_from_string(to_string(FuseMode::Mean)), FuseMode::Mean);
    EXPECT_THROW(fuse_mode_from_string("max"), std::invalid_argument);
}

TEST(ToneMap, CrossFusionPairsGlobalWithBothLocals) {
    std::mt19937_64 rng(4);
    const ToneMapperParams tm = mapper(4);
    const ImageBuffer a = hdr_image(3, 3, rng), b = hdr_image(3, 3, rng);
    const LdrOutputs o = tone_map(a, b, tm);
    EXPECT_EQ(o.i_ig.data, fuse(o.i_glo, o.i_loc_hat, tm.f_mix).data);
    EXPECT_EQ(o.i_gi.data, fuse(o.i_glo, o.i_loc, tm.f_mix).data);
}

TEST(ToneMap, PairBackwardMatchesCentralDifferences) {
    std::mt19937_64 rng(5);
    const ToneMapperParams tm = mapper(5);
    const ImageBuffer hdr = hdr_image(3, 2, rng);
    const ImageBuffer wg = fixtures::random_image(3, 2, rng, -1, 1), wl = fixtures::random_image(3, 2, rng, -1, 1);
    MlpTrace tr;
    tone_map_pair(hdr, tm.f_tm, &tr);
    ImageBuffer d_hdr;
    MlpParams g = zeros_like(tm.f_tm);
    tone_map_pair_backward(tm.f_tm, tr, hdr, &wg, &wl, &g, &d_hdr);
    const auto f = [&](std::span<const double> x) {
        ImageBuffer h = hdr;
        std::copy(x.begin(), x.end(), h.data.begin());
        const LdrPair p = tone_map_pair(h, tm.f_tm);
        return weighted(wg, p.global) + weighted(wl, p.local);
    };
    EXPECT_LT(finite_diff_check(f, hdr.data, d_hdr.data, 1e-6).max_relative_error, 1e-6);
}

TEST(ToneMap, CrossFuseBackwardMatchesCentralDifferences) {
    std::mt19937_64 rng(6);
    const ToneMapperParams tm = mapper(6);
    for (FuseMode mode : {FuseMode::Sum, FuseMode::Mean}) {
        LdrOutputs o;
        o.i_glo = fixtures::random_image(3, 3, rng);
        o.i_loc = fixtures::random_image(3, 3, rng);
        o.i_loc_hat = fixtures::random_image(3, 3, rng);
        o.i_glo_hat = fixtures::random_image(3, 3, rng);
        const ImageBuffer w_ig = fixtures::random_image(3, 3, rng, -1, 1), w_gi = fixtures::random_image(3, 3, rng, -1, 1),
                          w_ldr = fixtures::random_image(3, 3, rng, -1, 1);
        FuseTrace tr;
        cross_fuse(o, tm.f_mix, mode, &tr);
        const FuseCotangents d = cross_fuse_backward(tm.f_mix, tr, mode, &w_ig, &w_gi, &w_ldr, nullptr);
        const auto loss_of = [&](const ImageBuffer& glo, const ImageBuffer& loc, const ImageBuffer& loc_hat) {
            LdrOutputs q;
            q.i_glo = glo;
            q.i_loc = loc;
            q.i_loc_hat = loc_hat;
            q.i_glo_hat = o.i_glo_hat;
            cross_fuse(q, tm.f_mix, mode);
            return weighted(w_ig, q.i_ig) + weighted(w_gi, q.i_gi) + weighted(w_ldr, q.i_ldr);
        };
        const auto with = [&](const ImageBuffer& base, std::span<const double> x) {
            ImageBuffer img = base;
            std::copy(x.begin(), x.end(), img.data.begin());
            return img;
        };
        EXPECT_LT(finite_diff_check([&](auto x) { return loss_of(with(o.i_glo, x), o.i_loc, o.i_loc_hat); },
                                    o.i_glo.data, d.d_glo.data)
                      .max_relative_error,
                  1e-6);
        EXPECT_LT(finite_diff_check([&](auto x) { return loss_of(o.i_glo, with(o.i_loc, x), o.i_loc_hat); },
                                    o.i_loc.data, d.d_loc.data)
                      .max_relative_error,
                  1e-6);
        EXPECT_LT(finite_diff_check([&](auto x) { return loss_of(o.i_glo, o.i_loc, with(o.i_loc_hat, x)); },
                                    o.i_loc_hat.data, d.d_loc_hat.data)
                      .max_relative_error,
                  1e-6);
    }
}
