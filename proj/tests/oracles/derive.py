"""Independent reference values frozen into the C++ unit tests.

Run with numpy, scipy and scikit-image available; prints the constants.
"""
import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.spatial.transform import Rotation
from skimage.metrics import structural_similarity


def formula_pair(w, h):
    y, x = np.mgrid[0:h, 0:w].astype(float)
    a = np.stack([0.5 + 0.4 * np.sin(0.7 * x + 1.3 * y + c) for c in range(3)], axis=-1)
    b = np.stack([np.clip(0.5 + 0.4 * np.sin(0.7 * x + 1.3 * y + c) + 0.1 * np.cos(0.5 * x * y + c), 0, 1)
                  for c in range(3)], axis=-1)
    return a, b


def splat(mu, log_scale, quat_wxyz, opacity_logit, eye, focal, low_pass=0.3):
    # camera at eye looking down +z with identity rotation
    t = np.asarray(mu) - np.asarray(eye)
    w, x, y, z = quat_wxyz
    R = Rotation.from_quat([x, y, z, w]).as_matrix()
    S = np.diag(np.exp(log_scale))
    cov3 = R @ S @ S.T @ R.T
    J = np.array([[focal / t[2], 0, -focal * t[0] / t[2] ** 2],
                  [0, focal / t[2], -focal * t[1] / t[2] ** 2]])
    cov2 = J @ cov3 @ J.T + low_pass * np.eye(2)
    mean = np.array([focal * t[0] / t[2], focal * t[1] / t[2]])
    alpha = 1 / (1 + np.exp(-opacity_logit))
    return t[2], mean, np.linalg.inv(cov2), alpha


def composite(splats, colors, px, py, cx, cy):
    order = np.argsort([s[0] for s in splats], kind="stable")
    out = np.zeros(3)
    T = 1.0
    for i in order:
        _, mean, conic, alpha = splats[i]
        d = np.array([px + 0.5 - (mean[0] + cx), py + 0.5 - (mean[1] + cy)])
        a = alpha * np.exp(-0.5 * d @ conic @ d)
        out += T * a * np.asarray(colors[i])
        T *= 1 - a
    return out


def leaky(x):
    return np.where(x > 0, x, 0.01 * x)


def main():
    np.set_printoptions(precision=17)
    # rasterizer: two Gaussians, 8x8, focal 10, eye (0, 0, -3)
    g1 = splat([0.1, -0.2, 0.3], np.log([0.2, 0.3, 0.25]), [0.9, 0.1, -0.2, 0.3], 0.4, [0, 0, -3], 10)
    g2 = splat([-0.15, 0.05, -0.4], np.log([0.35, 0.15, 0.2]), [0.7, -0.3, 0.2, 0.1], 1.2, [0, 0, -3], 10)
    cols = [[1.0, 0.5, 0.25], [0.2, 0.9, 0.6]]
    for p in [(3, 4), (4, 3), (0, 0), (5, 5)]:
        print("composite", p, repr(composite([g1, g2], cols, *p, 4, 4).tolist()))

    # MLP 2 -> 3 -> 2, leaky hidden, sigmoid head
    W0 = np.array([[0.5, -0.3], [0.8, 0.1], [-0.6, 0.4]]); b0 = np.array([0.1, -0.2, 0.05])
    W1 = np.array([[0.3, -0.7, 0.2], [-0.4, 0.6, 0.9]]); b1 = np.array([0.0, 0.1])
    x = np.array([0.7, -1.2])
    y = 1 / (1 + np.exp(-(W1 @ leaky(W0 @ x + b0) + b1)))
    print("mlp", repr(y.tolist()))

    print("mu_law(0.5)", repr(np.log1p(5000 * 0.5) / np.log1p(5000)))
    print("crf(0.25)", repr(0.25 ** (1 / 2.2)), "byte(0.5)", round(255 * 0.5 ** (1 / 2.2)))

    a, b = formula_pair(16, 16)
    print("ssim_metric", repr(structural_similarity(a, b, channel_axis=2, data_range=1.0, gaussian_weights=True,
                                                   sigma=1.5, use_sample_covariance=False)))

    def blur(img, sigma, radius):
        return np.stack([gaussian_filter(img[..., c], sigma, mode="mirror", truncate=radius / sigma)
                         for c in range(3)], axis=-1)

    mu_a, mu_b = blur(a, 1.5, 5), blur(b, 1.5, 5)
    saa = blur(a * a, 1.5, 5) - mu_a ** 2
    sbb = blur(b * b, 1.5, 5) - mu_b ** 2
    sab = blur(a * b, 1.5, 5) - mu_a * mu_b
    c1, c2 = 1e-4, 9e-4
    smap = (2 * mu_a * mu_b + c1) * (2 * sab + c2) / ((mu_a ** 2 + mu_b ** 2 + c1) * (saa + sbb + c2))
    print("loss_ssim", repr(smap.mean()))
    print("consistency", repr(np.abs(blur(a, 2.0, 5) - blur(b, 2.0, 5)).mean()))

    k = np.exp(-0.5 * (np.arange(-5, 6) / 1.5) ** 2)
    print("kernel_center", repr((k / k.sum())[5]))

    p, q = 0.3, 0.6
    print("const_ssim", repr((2 * p * q + c1) * c2 / ((p * p + q * q + c1) * c2)))


if __name__ == "__main__":
    main()
