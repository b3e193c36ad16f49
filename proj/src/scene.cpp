#include "hdrsplat/scene.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace hdrsplat {

void GaussianCloud::resize(std::size_t n) {
    mu.resize(3 * n);
    log_scale.resize(3 * n);
    rotation.resize(4 * n);
    opacity_logit.resize(n);
    h_r.resize(kReflectanceDim * n);
    l_a_raw.resize(kIlluminationDim * n);
}

void GaussianCloud::validate() const {
    const std::size_t n = size();
    if (mu.size() != 3 * n || log_scale.size() != 3 * n || rotation.size() != 4 * n ||
        h_r.size() != kReflectanceDim * n || l_a_raw.size() != kIlluminationDim * n)
        throw std::invalid_argument("GaussianCloud: field lengths disagree");
}

void renormalize_rotations(GaussianCloud& cloud) {
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        double* q = cloud.rotation.data() + 4 * i;
        const double n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
        for (int k = 0; k < 4; ++k) q[k] /= n;
    }
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int width, int height, double focal) {
    const Vec3 forward = normalized(target - eye);
    // camera y points down, x = y cross z
    const Vec3 right = normalized(cross(forward, up));
    const Vec3 down = cross(forward, right);
    Camera c;
    c.width = width;
    c.height = height;
    c.fx = focal;
    c.fy = focal;
    c.cx = 0.5 * width;
    c.cy = 0.5 * height;
    const Mat3 r{right[0], right[1], right[2], down[0], down[1], down[2], forward[0], forward[1], forward[2]};
    const Vec3 t = -1.0 * matvec(r, eye);
    c.world_to_cam = {r[0], r[1], r[2], t[0], r[3], r[4], r[5], t[1], r[6], r[7], r[8], t[2], 0, 0, 0, 1};
    return c;
}

void Camera::validate() const {
    if (width <= 0 || height <= 0) throw std::invalid_argument("Camera: empty image");
    if (!(fx > 0) || !(fy > 0)) throw std::invalid_argument("Camera: focal lengths must be positive");
    if (!(near > 0) || !(near < far)) throw std::invalid_argument("Camera: need 0 < near < far");
}

GaussianCloud init_cloud(std::span<const Vec3> seeds, const InitConfig& config) {
    if (seeds.empty()) throw std::invalid_argument("init_cloud: empty seed set");
    const std::size_t n = seeds.size();
    GaussianCloud cloud;
    cloud.resize(n);

    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> feature(0.0, config.reflectance_std);
    const double logit_alpha = logit(config.opacity);
    const double raw_ambient = softplus_inverse(config.ambient);

    const auto k_max = static_cast<std::size_t>(std::max(1, config.nearest_neighbors));
    std::vector<double> dist;
    for (std::size_t i = 0; i < n; ++i) {
        double scale = config.lone_point_scale;
        if (n > 1) {
            dist.clear();
            for (std::size_t j = 0; j < n; ++j)
                if (j != i) dist.push_back(norm(seeds[i] - seeds[j]));
            const std::size_t k = std::min(k_max, dist.size());
            std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
            double sum = 0;
            for (std::size_t m = 0; m < k; ++m) sum += dist[m];
            scale = std::max(sum / static_cast<double>(k), 1e-7);
        }
        for (int a = 0; a < 3; ++a) {
            cloud.mu[3 * i + a] = seeds[i][a];
            cloud.log_scale[3 * i + a] = std::log(scale);
            cloud.l_a_raw[3 * i + a] = raw_ambient;
        }
        cloud.rotation[4 * i] = 1.0;
        cloud.opacity_logit[i] = logit_alpha;
        for (int f = 0; f < kReflectanceDim; ++f) cloud.h_r[kReflectanceDim * i + f] = feature(rng);
    }
    return cloud;
}

Mat3 covariance(const Vec3& log_scale, const Quat& rotation) {
    const Mat3 r = rotation_matrix(quat_normalized(rotation));
    const Vec3 s{std::exp(log_scale[0]), std::exp(log_scale[1]), std::exp(log_scale[2])};
    // M = R S, Sigma = M M^T
    Mat3 m{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m[i * 3 + j] = r[i * 3 + j] * s[j];
    Mat3 sigma{};
    for (int i = 0; i < 3; ++i)
        for (int j = i; j < 3; ++j) {
            const double v = m[i * 3] * m[j * 3] + m[i * 3 + 1] * m[j * 3 + 1] + m[i * 3 + 2] * m[j * 3 + 2];
            sigma[i * 3 + j] = v;
            sigma[j * 3 + i] = v;
        }
    return sigma;
}

CovarianceGrad covariance_vjp(const Vec3& log_scale, const Quat& rotation, const Mat3& d_sigma) {
    const double qn = quat_norm(rotation);
    const Quat q = quat_normalized(rotation);
    const Mat3 r = rotation_matrix(q);
    const Vec3 s{std::exp(log_scale[0]), std::exp(log_scale[1]), std::exp(log_scale[2])};
    Mat3 m{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m[i * 3 + j] = r[i * 3 + j] * s[j];

    // Sigma = M M^T: dM = (G + G^T) M
    Mat3 gs{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) gs[i * 3 + j] = d_sigma[i * 3 + j] + d_sigma[j * 3 + i];
    const Mat3 dm = matmul(gs, m);

    CovarianceGrad out;
    Mat3 dr{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) dr[i * 3 + j] = dm[i * 3 + j] * s[j];
    for (int j = 0; j < 3; ++j) {
        double ds = 0;
        for (int i = 0; i < 3; ++i) ds += dm[i * 3 + j] * r[i * 3 + j];
        out.log_scale[j] = ds * s[j];
    }
    const Quat dqn = rotation_matrix_vjp(q, dr);
    // through q / |q|
    const double proj = dqn.w * q.w + dqn.x * q.x + dqn.y * q.y + dqn.z * q.z;
    out.rotation = {(dqn.w - q.w * proj) / qn, (dqn.x - q.x * proj) / qn, (dqn.y - q.y * proj) / qn,
                    (dqn.z - q.z * proj) / qn};
    return out;
}

}  // namespace hdrsplat
