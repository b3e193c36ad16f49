#include "hdrsplat/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hdrsplat/parallel.hpp"

namespace hdrsplat {

namespace {

constexpr int kRowsPerBlock = 8;

std::size_t row_blocks(int height) { return (static_cast<std::size_t>(height) + kRowsPerBlock - 1) / kRowsPerBlock; }

struct Jacobian {
    double j00, j02, j11, j12;  // J = [[j00, 0, j02], [0, j11, j12]]
};

Jacobian perspective_jacobian(const Camera& camera, const Vec3& t) {
    const double iz = 1.0 / t[2];
    return {camera.fx * iz, -camera.fx * t[0] * iz * iz, camera.fy * iz, -camera.fy * t[1] * iz * iz};
}

/// Rows of T = J M for symmetric M.
void jacobian_times(const Jacobian& j, const Mat3& m, double t0[3], double t1[3]) {
    for (int k = 0; k < 3; ++k) {
        t0[k] = j.j00 * m[0 * 3 + k] + j.j02 * m[2 * 3 + k];
        t1[k] = j.j11 * m[1 * 3 + k] + j.j12 * m[2 * 3 + k];
    }
}

}  // namespace

bool project_one(const GaussianCloud& cloud, std::size_t i, const Camera& camera, const RasterConfig& config,
                 Splat2D& s) {
    const Vec3 t = camera.to_camera(cloud.center(i));
    if (!(t[2] > camera.near) || !(t[2] < camera.far)) return false;

    const Mat3 rw = camera.rotation();
    const Mat3 sigma = covariance(cloud.scale_log(i), cloud.quat(i));
    const Mat3 m = matmul(matmul(rw, sigma), transpose(rw));
    const Jacobian j = perspective_jacobian(camera, t);
    double t0[3], t1[3];
    jacobian_times(j, m, t0, t1);
    const double a = t0[0] * j.j00 + t0[2] * j.j02 + config.low_pass;
    const double b = t0[1] * j.j11 + t0[2] * j.j12;
    const double c = t1[1] * j.j11 + t1[2] * j.j12 + config.low_pass;
    const double det = a * c - b * b;
    if (!(det > 0)) return false;

    s.index = static_cast<std::uint32_t>(i);
    s.cam = t;
    s.depth = t[2];
    s.mean[0] = camera.fx * t[0] / t[2] + camera.cx;
    s.mean[1] = camera.fy * t[1] / t[2] + camera.cy;
    s.ndc = {2.0 * s.mean[0] / camera.width - 1.0, 2.0 * s.mean[1] / camera.height - 1.0,
             (camera.far + camera.near) / (camera.far - camera.near) -
                 2.0 * camera.far * camera.near / ((camera.far - camera.near) * t[2])};
    s.cov[0] = a;
    s.cov[1] = b;
    s.cov[2] = c;
    s.conic[0] = c / det;
    s.conic[1] = -b / det;
    s.conic[2] = a / det;
    s.alpha = cloud.alpha(i);

    if (std::isinf(config.bbox_sigma)) {
        s.xmin = 0;
        s.ymin = 0;
        s.xmax = camera.width - 1;
        s.ymax = camera.height - 1;
    } else {
        const double mid = 0.5 * (a + c);
        const double lambda = mid + std::sqrt(std::max(0.1, mid * mid - det));
        const double r = config.bbox_sigma * std::sqrt(lambda);
        s.xmin = std::max(0, static_cast<int>(std::ceil(s.mean[0] - r - 0.5)));
        s.xmax = std::min(camera.width - 1, static_cast<int>(std::floor(s.mean[0] + r - 0.5)));
        s.ymin = std::max(0, static_cast<int>(std::ceil(s.mean[1] - r - 0.5)));
        s.ymax = std::min(camera.height - 1, static_cast<int>(std::floor(s.mean[1] + r - 0.5)));
        // footprint misses the image: outside the frustum
        if (s.xmin > s.xmax || s.ymin > s.ymax) return false;
    }
    return true;
}

Projection project(const GaussianCloud& cloud, const Camera& camera, const RasterConfig& config) {
    camera.validate();
    Projection p;
    p.in_frustum.assign(cloud.size(), 0);
    p.splats.reserve(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        Splat2D s;
        if (project_one(cloud, i, camera, config, s)) {
            p.splats.push_back(s);
            p.in_frustum[i] = 1;
        }
    }
    std::sort(p.splats.begin(), p.splats.end(), [](const Splat2D& a, const Splat2D& b) {
        return a.depth < b.depth || (a.depth == b.depth && a.index < b.index);
    });
    return p;
}

RasterState rasterize(std::span<const Splat2D> splats, const Camera& camera, const RasterConfig& config) {
    const int w = camera.width;
    const int h = camera.height;
    std::vector<std::vector<std::uint32_t>> rows(h);
    for (std::uint32_t s = 0; s < splats.size(); ++s)
        for (int y = splats[s].ymin; y <= splats[s].ymax; ++y) rows[y].push_back(s);

    const std::size_t blocks = row_blocks(h);
    std::vector<std::vector<Contribution>> block_entries(blocks);
    std::vector<std::uint32_t> counts(static_cast<std::size_t>(w) * h, 0);
    RasterState st;
    st.width = w;
    st.height = h;
    st.final_transmittance.assign(static_cast<std::size_t>(w) * h, 1.0);

    parallel_for_blocks(blocks, [&](std::size_t block) {
        auto& out = block_entries[block];
        const int y0 = static_cast<int>(block) * kRowsPerBlock;
        const int y1 = std::min(h, y0 + kRowsPerBlock);
        for (int y = y0; y < y1; ++y) {
            const double py = y + 0.5;
            for (int x = 0; x < w; ++x) {
                const double px = x + 0.5;
                const std::size_t before = out.size();
                double T = 1.0;
                for (std::uint32_t si : rows[y]) {
                    const Splat2D& s = splats[si];
                    if (x < s.xmin || x > s.xmax) continue;
                    const double dx = px - s.mean[0];
                    const double dy = py - s.mean[1];
                    const double power = -0.5 * (s.conic[0] * dx * dx + s.conic[2] * dy * dy) - s.conic[1] * dx * dy;
                    const double g = std::exp(power);
                    const double a = s.alpha * g;
                    if (a < config.alpha_skip) continue;
                    out.push_back({si, g, T});
                    T *= (1.0 - a);
                    if (T < config.min_transmittance) break;
                }
                const std::size_t pix = static_cast<std::size_t>(y) * w + x;
                counts[pix] = static_cast<std::uint32_t>(out.size() - before);
                st.final_transmittance[pix] = T;
            }
        }
    });

    st.offsets.resize(counts.size() + 1);
    st.offsets[0] = 0;
    for (std::size_t p = 0; p < counts.size(); ++p) st.offsets[p + 1] = st.offsets[p] + counts[p];
    st.entries.reserve(st.offsets.back());
    for (auto& b : block_entries) st.entries.insert(st.entries.end(), b.begin(), b.end());
    return st;
}

ImageBuffer shade(const RasterState& st, std::span<const Splat2D> splats, std::span<const double> colors,
                  const Vec3& background) {
    ImageBuffer img(st.width, st.height, ColorSpace::LinearHdr);
    const std::size_t n_pix = img.pixels();
    for (std::size_t p = 0; p < n_pix; ++p) {
        double c0 = 0, c1 = 0, c2 = 0;
        for (std::uint32_t k = st.offsets[p]; k < st.offsets[p + 1]; ++k) {
            const Contribution& e = st.entries[k];
            const Splat2D& s = splats[e.splat];
            const double w = s.alpha * e.g * e.transmittance;
            const double* c = colors.data() + 3 * static_cast<std::size_t>(s.index);
            c0 += w * c[0];
            c1 += w * c[1];
            c2 += w * c[2];
        }
        const double tf = st.final_transmittance[p];
        img.data[3 * p] = c0 + tf * background[0];
        img.data[3 * p + 1] = c1 + tf * background[1];
        img.data[3 * p + 2] = c2 + tf * background[2];
    }
    return img;
}

ImageBuffer composite(std::span<const Splat2D> splats, std::span<const double> colors, const Camera& camera,
                      const RasterConfig& config) {
    return shade(rasterize(splats, camera, config), splats, colors, config.background);
}

ImageBuffer composite_reference(std::span<const Splat2D> splats, std::span<const double> colors,
                                const Camera& camera, const Vec3& background) {
    ImageBuffer img(camera.width, camera.height, ColorSpace::LinearHdr);
    std::vector<std::size_t> order(splats.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (splats[a].depth != splats[b].depth) return splats[a].depth < splats[b].depth;
        return splats[a].index < splats[b].index;
    });
    for (int y = 0; y < camera.height; ++y) {
        for (int x = 0; x < camera.width; ++x) {
            double rgb[3] = {0, 0, 0};
            double T = 1.0;
            for (std::size_t k : order) {
                const Splat2D& s = splats[k];
                const double det = s.cov[0] * s.cov[2] - s.cov[1] * s.cov[1];
                const double ixx = s.cov[2] / det, ixy = -s.cov[1] / det, iyy = s.cov[0] / det;
                const double dx = x + 0.5 - s.mean[0];
                const double dy = y + 0.5 - s.mean[1];
                const double g = std::exp(-0.5 * (ixx * dx * dx + 2.0 * ixy * dx * dy + iyy * dy * dy));
                const double a = s.alpha * g;
                for (int c = 0; c < 3; ++c) rgb[c] += T * a * colors[3 * s.index + c];
                T *= 1.0 - a;
            }
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = rgb[c] + T * background[c];
        }
    }
    return img;
}

std::vector<double> accumulated_weight(const RasterState& st, std::span<const Splat2D> splats) {
    std::vector<double> w(static_cast<std::size_t>(st.width) * st.height, 0.0);
    for (std::size_t p = 0; p < w.size(); ++p)
        for (std::uint32_t k = st.offsets[p]; k < st.offsets[p + 1]; ++k) {
            const Contribution& e = st.entries[k];
            w[p] += splats[e.splat].alpha * e.g * e.transmittance;
        }
    return w;
}

SplatGrads composite_backward(const RasterState& st, std::span<const Splat2D> splats,
                              std::span<const ShadeBranch> branches, const Vec3& background) {
    const std::size_t n_splats = splats.size();
    const std::size_t blocks = row_blocks(st.height);
    const std::size_t nb = branches.size();

    std::size_t n_gauss = 0;
    for (const auto& s : splats) n_gauss = std::max<std::size_t>(n_gauss, s.index + 1);
    for (const auto& b : branches) n_gauss = std::max(n_gauss, b.colors.size() / 3);

    // per-block partials: [alpha, mean x2, conic x3] per splat, colors per branch per Gaussian
    struct Partial {
        std::vector<double> geo;
        std::vector<std::uint8_t> contributed;
        std::vector<std::vector<double>> colors;
    };
    std::vector<Partial> partials(blocks);

    parallel_for_blocks(blocks, [&](std::size_t block) {
        Partial& part = partials[block];
        part.geo.assign(6 * n_splats, 0.0);
        part.contributed.assign(n_splats, 0);
        part.colors.assign(nb, {});
        for (std::size_t b = 0; b < nb; ++b)
            if (branches[b].d_colors) part.colors[b].assign(3 * n_gauss, 0.0);

        std::vector<double> acc(3 * nb), dc(3 * nb);
        const int y0 = static_cast<int>(block) * kRowsPerBlock;
        const int y1 = std::min(st.height, y0 + kRowsPerBlock);
        for (int y = y0; y < y1; ++y) {
            for (int x = 0; x < st.width; ++x) {
                const std::size_t p = static_cast<std::size_t>(y) * st.width + x;
                const std::uint32_t begin = st.offsets[p];
                const std::uint32_t end = st.offsets[p + 1];
                if (begin == end) continue;
                for (std::size_t b = 0; b < nb; ++b)
                    for (int c = 0; c < 3; ++c) {
                        acc[3 * b + c] = background[c];
                        dc[3 * b + c] = branches[b].cotangent->data[3 * p + c];
                    }
                for (std::uint32_t k = end; k-- > begin;) {
                    const Contribution& e = st.entries[k];
                    const Splat2D& s = splats[e.splat];
                    const double a = s.alpha * e.g;
                    const double T = e.transmittance;
                    const double w = a * T;
                    double da = 0;
                    for (std::size_t b = 0; b < nb; ++b) {
                        const double* col = branches[b].colors.data() + 3 * static_cast<std::size_t>(s.index);
                        double* gcol = part.colors[b].empty() ? nullptr : part.colors[b].data() + 3 * s.index;
                        for (int c = 0; c < 3; ++c) {
                            const double g_c = dc[3 * b + c];
                            if (gcol) gcol[c] += w * g_c;
                            da += T * g_c * (col[c] - acc[3 * b + c]);
                            acc[3 * b + c] = a * col[c] + (1.0 - a) * acc[3 * b + c];
                        }
                    }
                    double* geo = part.geo.data() + 6 * e.splat;
                    geo[0] += da * e.g;
                    const double dpower = da * s.alpha * e.g;
                    const double dx = x + 0.5 - s.mean[0];
                    const double dy = y + 0.5 - s.mean[1];
                    geo[1] += dpower * (s.conic[0] * dx + s.conic[1] * dy);
                    geo[2] += dpower * (s.conic[1] * dx + s.conic[2] * dy);
                    geo[3] += dpower * (-0.5 * dx * dx);
                    geo[4] += dpower * (-dx * dy);
                    geo[5] += dpower * (-0.5 * dy * dy);
                    part.contributed[e.splat] = 1;
                }
            }
        }
    });

    SplatGrads out;
    out.alpha.assign(n_splats, 0.0);
    out.mean.assign(2 * n_splats, 0.0);
    out.conic.assign(3 * n_splats, 0.0);
    out.contributed.assign(n_splats, 0);
    for (std::size_t b = 0; b < nb; ++b)
        if (branches[b].d_colors && branches[b].d_colors->size() < 3 * n_gauss) branches[b].d_colors->resize(3 * n_gauss, 0.0);
    for (const Partial& part : partials) {
        for (std::size_t s = 0; s < n_splats; ++s) {
            const double* g = part.geo.data() + 6 * s;
            out.alpha[s] += g[0];
            out.mean[2 * s] += g[1];
            out.mean[2 * s + 1] += g[2];
            out.conic[3 * s] += g[3];
            out.conic[3 * s + 1] += g[4];
            out.conic[3 * s + 2] += g[5];
            out.contributed[s] |= part.contributed[s];
        }
        for (std::size_t b = 0; b < nb; ++b) {
            if (!branches[b].d_colors) continue;
            auto& dst = *branches[b].d_colors;
            for (std::size_t k = 0; k < part.colors[b].size(); ++k) dst[k] += part.colors[b][k];
        }
    }
    return out;
}

void project_backward(const GaussianCloud& cloud, const Camera& camera, const Projection& projection,
                      const SplatGrads& sg, GaussianCloud& grad, std::vector<double>& ndc_norm,
                      std::vector<std::uint8_t>& visible) {
    const Mat3 rw = camera.rotation();
    ndc_norm.assign(cloud.size(), 0.0);
    visible.assign(cloud.size(), 0);
    for (std::size_t si = 0; si < projection.splats.size(); ++si) {
        if (!sg.contributed[si]) continue;
        const Splat2D& s = projection.splats[si];
        const std::size_t i = s.index;

        const double alpha = s.alpha;
        grad.opacity_logit[i] += sg.alpha[si] * alpha * (1.0 - alpha);

        const double du = sg.mean[2 * si];
        const double dv = sg.mean[2 * si + 1];
        const double gx = du * 0.5 * camera.width;
        const double gy = dv * 0.5 * camera.height;
        ndc_norm[i] = std::sqrt(gx * gx + gy * gy);
        visible[i] = 1;

        // conic -> screen covariance
        const double a = s.cov[0], b = s.cov[1], c = s.cov[2];
        const double det = a * c - b * b;
        const double id2 = 1.0 / (det * det);
        const double gA = sg.conic[3 * si], gB = sg.conic[3 * si + 1], gC = sg.conic[3 * si + 2];
        const double ga = id2 * (-c * c * gA + b * c * gB - b * b * gC);
        const double gb = id2 * (2 * b * c * gA - (a * c + b * b) * gB + 2 * a * b * gC);
        const double gc = id2 * (-b * b * gA + a * b * gB - a * a * gC);
        // symmetric matrix gradient
        const double G[2][2] = {{ga, 0.5 * gb}, {0.5 * gb, gc}};

        const Vec3& t = s.cam;
        const Jacobian j = perspective_jacobian(camera, t);
        const double J[2][3] = {{j.j00, 0, j.j02}, {0, j.j11, j.j12}};
        const Mat3 sigma = covariance(cloud.scale_log(i), cloud.quat(i));
        const Mat3 m = matmul(matmul(rw, sigma), transpose(rw));

        // dM = J^T G J
        Mat3 dm{};
        for (int r = 0; r < 3; ++r)
            for (int q = 0; q < 3; ++q) {
                double v = 0;
                for (int u = 0; u < 2; ++u)
                    for (int w = 0; w < 2; ++w) v += J[u][r] * G[u][w] * J[w][q];
                dm[r * 3 + q] = v;
            }
        // dJ = 2 G J M
        double gj[2][3];
        for (int u = 0; u < 2; ++u)
            for (int q = 0; q < 3; ++q) {
                double v = 0;
                for (int w = 0; w < 2; ++w)
                    for (int r = 0; r < 3; ++r) v += G[u][w] * J[w][r] * m[r * 3 + q];
                gj[u][q] = 2.0 * v;
            }

        const Mat3 dsigma = matmul(matmul(transpose(rw), dm), rw);
        const CovarianceGrad cg = covariance_vjp(cloud.scale_log(i), cloud.quat(i), dsigma);
        for (int k = 0; k < 3; ++k) grad.log_scale[3 * i + k] += cg.log_scale[k];
        grad.rotation[4 * i] += cg.rotation.w;
        grad.rotation[4 * i + 1] += cg.rotation.x;
        grad.rotation[4 * i + 2] += cg.rotation.y;
        grad.rotation[4 * i + 3] += cg.rotation.z;

        const double iz = 1.0 / t[2];
        const double iz2 = iz * iz;
        const double iz3 = iz2 * iz;
        Vec3 dt{};
        dt[0] = du * camera.fx * iz + gj[0][2] * (-camera.fx * iz2);
        dt[1] = dv * camera.fy * iz + gj[1][2] * (-camera.fy * iz2);
        dt[2] = -du * camera.fx * t[0] * iz2 - dv * camera.fy * t[1] * iz2 + gj[0][0] * (-camera.fx * iz2) +
                gj[0][2] * (2.0 * camera.fx * t[0] * iz3) + gj[1][1] * (-camera.fy * iz2) +
                gj[1][2] * (2.0 * camera.fy * t[1] * iz3);
        const Vec3 dmu = matTvec(rw, dt);
        for (int k = 0; k < 3; ++k) grad.mu[3 * i + k] += dmu[k];
    }
}

}  // namespace hdrsplat
