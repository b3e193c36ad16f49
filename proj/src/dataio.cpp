#include "hdrsplat/dataio.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "hdrsplat/losses.hpp"

namespace hdrsplat {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

double reference_crf(double x) { return std::pow(std::clamp(x, 0.0, 1.0), 1.0 / 2.2); }

ImageBuffer expose(const ImageBuffer& hdr, double t) {
    ImageBuffer out(hdr.width, hdr.height, ColorSpace::LdrUnit);
    for (std::size_t k = 0; k < hdr.data.size(); ++k) out.data[k] = reference_crf(t * hdr.data[k]);
    return out;
}

void SceneSpec::validate() const {
    if (n_views < 3) throw std::invalid_argument("scene needs at least 3 views");
    if (n_gaussians < 1) throw std::invalid_argument("scene needs at least 1 Gaussian");
    if (image_size < 1) throw std::invalid_argument("image size must be positive");
    if (test_every < 0) throw std::invalid_argument("test_every must be non-negative");
    if (seed_points_per_gaussian < 1) throw std::invalid_argument("need at least one seed point per Gaussian");
    if (!(min_radiance > 0) || !(max_radiance > min_radiance)) throw std::invalid_argument("invalid radiance range");
}

ImageBuffer SyntheticScene::render_hdr(std::size_t pose) const {
    const Camera& cam = cameras.at(pose);
    const Projection p = project(gt_cloud, cam, RasterConfig::exact());
    return composite_reference(p.splats, radiance, cam, {0, 0, 0});
}

SyntheticScene generate_scene(const SceneSpec& spec) {
    spec.validate();
    SyntheticScene sc;
    sc.spec = spec;
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    const std::size_t n = static_cast<std::size_t>(spec.n_gaussians);
    GaussianCloud& c = sc.gt_cloud;
    c.resize(n);
    sc.radiance.resize(3 * n);
    const double log_lo = std::log(spec.min_radiance), log_hi = std::log(spec.max_radiance);
    for (std::size_t i = 0; i < n; ++i) {
        Vec3 p;
        do {
            p = {2 * unit(rng) - 1, 2 * unit(rng) - 1, 2 * unit(rng) - 1};
        } while (dot(p, p) > 1.0);
        for (int k = 0; k < 3; ++k) {
            c.mu[3 * i + k] = p[k];
            c.log_scale[3 * i + k] = std::log(0.06 + 0.14 * unit(rng));
        }
        Quat q{normal(rng), normal(rng), normal(rng), normal(rng)};
        q = quat_normalized(q);
        c.rotation[4 * i] = q.w, c.rotation[4 * i + 1] = q.x, c.rotation[4 * i + 2] = q.y, c.rotation[4 * i + 3] = q.z;
        c.opacity_logit[i] = logit(0.6 + 0.35 * unit(rng));
        // log-uniform intensity times a chroma with max channel 1
        const double intensity = std::exp(log_lo + (log_hi - log_lo) * unit(rng));
        Vec3 chroma{0.3 + 0.7 * unit(rng), 0.3 + 0.7 * unit(rng), 0.3 + 0.7 * unit(rng)};
        const double peak = std::max({chroma[0], chroma[1], chroma[2]});
        for (int k = 0; k < 3; ++k) sc.radiance[3 * i + k] = intensity * chroma[k] / peak;
    }

    Vec3 centroid{0, 0, 0};
    for (int v = 0; v < spec.n_views; ++v) {
        const double a = 2.0 * M_PI * v / spec.n_views;
        const Vec3 eye{spec.ring_radius * std::cos(a), (v % 2 ? -0.8 : 0.8), spec.ring_radius * std::sin(a)};
        sc.cameras.push_back(Camera::look_at(eye, {0, 0, 0}, {0, -1, 0}, spec.image_size, spec.image_size,
                                             spec.focal_scale * spec.image_size));
        sc.is_test.push_back(spec.test_every > 0 && v % spec.test_every == spec.test_every - 1);
        centroid = centroid + (1.0 / spec.n_views) * eye;
    }
    double far = 0;
    for (int v = 0; v < spec.n_views; ++v) {
        const Camera& cam = sc.cameras[v];
        // camera center = -R^T t
        const Mat3 r = cam.rotation();
        const Vec3 t = cam.translation();
        const Vec3 center{-(r[0] * t[0] + r[3] * t[1] + r[6] * t[2]), -(r[1] * t[0] + r[4] * t[1] + r[7] * t[2]),
                          -(r[2] * t[0] + r[5] * t[1] + r[8] * t[2])};
        far = std::max(far, norm(center - centroid));
    }
    sc.extent = 1.1 * far;

    for (std::size_t i = 0; i < n; ++i) {
        const Mat3 r = rotation_matrix(c.quat(i));
        for (int s = 0; s < spec.seed_points_per_gaussian; ++s) {
            const Vec3 z{normal(rng) * std::exp(c.log_scale[3 * i]), normal(rng) * std::exp(c.log_scale[3 * i + 1]),
                         normal(rng) * std::exp(c.log_scale[3 * i + 2])};
            sc.seed_points.push_back(c.center(i) + matvec(r, z));
        }
    }
    return sc;
}

SceneViews make_views(const SyntheticScene& scene) {
    SceneViews views;
    for (std::size_t v = 0; v < scene.cameras.size(); ++v) {
        const ImageBuffer hdr = scene.render_hdr(v);
        const bool test = scene.is_test[v];
        for (double t : kExposureLadder) {
            const bool train_exposure = std::find(kTrainExposures.begin(), kTrainExposures.end(), t) != kTrainExposures.end();
            if (!test && !train_exposure) continue;
            ViewRecord r;
            r.pose = static_cast<int>(v);
            r.camera = scene.cameras[v];
            r.exposure_t = t;
            r.lighting_l = t;
            r.gt_ldr = expose(hdr, t);
            for (double& v : r.gt_ldr.data) v = decode_ldr(encode_ldr(v));  // as stored on disk
            r.gt_hdr = hdr;
            (test ? views.test : views.train).push_back(std::move(r));
        }
    }
    return views;
}

namespace {

std::string num(double v) { return fmt::format("{:.17g}", v); }

std::string join(std::span<const double> v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + num(v[i]);
    return s;
}

std::vector<double> split_numbers(const std::string& s) {
    std::istringstream is(s);
    std::vector<double> out;
    double x;
    while (is >> x) out.push_back(x);
    if (!is.eof()) throw IoError("malformed number list '" + s + "'");
    return out;
}

std::string ldr_name(int pose, std::size_t exposure_index) { return fmt::format("view_{:02d}_t{}.ppm", pose, exposure_index + 1); }
std::string hdr_name(int pose) { return fmt::format("view_{:02d}_hdr.pfm", pose); }

std::size_t ladder_index(double t) {
    for (std::size_t i = 0; i < kExposureLadder.size(); ++i)
        if (kExposureLadder[i] == t) return i;
    throw std::invalid_argument("exposure not on the ladder: " + num(t));
}

void write_camera(pt::ptree& sec, const Camera& c) {
    sec.put("width", c.width);
    sec.put("height", c.height);
    sec.put("fx", num(c.fx));
    sec.put("fy", num(c.fy));
    sec.put("cx", num(c.cx));
    sec.put("cy", num(c.cy));
    sec.put("near", num(c.near));
    sec.put("far", num(c.far));
    sec.put("world_to_cam", join(c.world_to_cam));
}

Camera read_camera(const pt::ptree& sec) {
    Camera c;
    c.width = sec.get<int>("width");
    c.height = sec.get<int>("height");
    c.fx = sec.get<double>("fx");
    c.fy = sec.get<double>("fy");
    c.cx = sec.get<double>("cx");
    c.cy = sec.get<double>("cy");
    c.near = sec.get<double>("near");
    c.far = sec.get<double>("far");
    const auto m = split_numbers(sec.get<std::string>("world_to_cam"));
    if (m.size() != 16) throw IoError("world_to_cam needs 16 numbers");
    std::copy(m.begin(), m.end(), c.world_to_cam.begin());
    c.validate();
    return c;
}

}  // namespace

void write_scene(const fs::path& dir, const SyntheticScene& scene, const SceneViews& views) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

    pt::ptree root;
    const SceneSpec& s = scene.spec;
    root.put("scene.seed", s.seed);
    root.put("scene.gaussians", s.n_gaussians);
    root.put("scene.size", s.image_size);
    root.put("scene.views", s.n_views);
    root.put("scene.test_every", s.test_every);
    root.put("scene.extent", num(scene.extent));
    root.put("scene.background", "0 0 0");
    root.put("scene.exposures", join(kExposureLadder));
    root.put("scene.train_exposures", join(kTrainExposures));
    root.put("scene.points", "points.csv");

    std::vector<std::vector<const ViewRecord*>> per_pose(scene.cameras.size());
    for (const auto* list : {&views.train, &views.test})
        for (const auto& v : *list) per_pose.at(v.pose).push_back(&v);

    for (std::size_t p = 0; p < scene.cameras.size(); ++p) {
        pt::ptree sec;
        sec.put("split", scene.is_test[p] ? "test" : "train");
        write_camera(sec, scene.cameras[p]);
        sec.put("hdr", hdr_name(static_cast<int>(p)));
        write_pfm(dir / hdr_name(static_cast<int>(p)), scene.render_hdr(p));
        std::vector<double> ts;
        std::string files;
        for (const ViewRecord* v : per_pose[p]) {
            const std::string name = ldr_name(v->pose, ladder_index(v->exposure_t));
            write_ppm(dir / name, v->gt_ldr);
            ts.push_back(v->exposure_t);
            files += (files.empty() ? "" : " ") + name;
        }
        sec.put("exposures", join(ts));
        sec.put("ldr", files);
        root.add_child(fmt::format("pose_{:02d}", p), sec);
    }

    std::ofstream pts(dir / "points.csv");
    if (!pts) throw IoError("cannot write points.csv");
    pts << "x,y,z\n";
    for (const auto& q : scene.seed_points) pts << num(q[0]) << ',' << num(q[1]) << ',' << num(q[2]) << '\n';

    try {
        pt::write_ini((dir / "manifest.txt").string(), root);
    } catch (const pt::ptree_error& e) {
        throw IoError(std::string("cannot write manifest: ") + e.what());
    }
}

LoadedScene load_scene(const fs::path& dir) {
    pt::ptree root;
    try {
        pt::read_ini((dir / "manifest.txt").string(), root);
    } catch (const pt::ptree_error& e) {
        throw IoError(std::string("cannot read scene manifest: ") + e.what());
    }
    LoadedScene out;
    try {
        const auto& sc = root.get_child("scene");
        out.spec.seed = sc.get<std::uint64_t>("seed");
        out.spec.n_gaussians = sc.get<int>("gaussians");
        out.spec.image_size = sc.get<int>("size");
        out.spec.n_views = sc.get<int>("views");
        out.spec.test_every = sc.get<int>("test_every");
        out.extent = sc.get<double>("extent");
        const auto bg = split_numbers(sc.get<std::string>("background", "0 0 0"));
        if (bg.size() != 3) throw IoError("background needs 3 numbers");
        out.background = {bg[0], bg[1], bg[2]};

        std::ifstream pts(dir / sc.get<std::string>("points"));
        if (!pts) throw IoError("cannot read seed points");
        std::string line;
        std::getline(pts, line);
        while (std::getline(pts, line)) {
            if (line.empty()) continue;
            std::replace(line.begin(), line.end(), ',', ' ');
            const auto v = split_numbers(line);
            if (v.size() != 3) throw IoError("malformed seed point line");
            out.seed_points.push_back({v[0], v[1], v[2]});
        }

        for (const auto& [name, sec] : root) {
            if (name.rfind("pose_", 0) != 0) continue;
            const int pose = std::stoi(name.substr(5));
            const Camera cam = read_camera(sec);
            if (static_cast<int>(out.cameras.size()) <= pose) out.cameras.resize(pose + 1);
            out.cameras[pose] = cam;
            const bool test = sec.get<std::string>("split") == "test";
            const ImageBuffer hdr = read_pfm(dir / sec.get<std::string>("hdr"));
            const auto ts = split_numbers(sec.get<std::string>("exposures"));
            std::istringstream files(sec.get<std::string>("ldr"));
            for (double t : ts) {
                std::string file;
                if (!(files >> file)) throw IoError(name + ": fewer LDR files than exposures");
                ViewRecord r;
                r.pose = pose;
                r.camera = cam;
                r.exposure_t = t;
                r.lighting_l = t;
                r.gt_ldr = read_ppm(dir / file);
                r.gt_hdr = hdr;
                require_same_shape(r.gt_ldr, hdr, "load_scene");
                (test ? out.views.test : out.views.train).push_back(std::move(r));
            }
        }
    } catch (const pt::ptree_error& e) {
        throw IoError(std::string("malformed scene manifest: ") + e.what());
    }
    if (out.views.train.empty()) throw IoError("scene has no training views");
    return out;
}

void write_pfm(const fs::path& path, const ImageBuffer& img) {
    for (double v : img.data)
        if (!std::isfinite(v)) throw std::domain_error("write_pfm: non-finite pixel value");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << "PF\n" << img.width << ' ' << img.height << "\n-1.0\n";
    std::vector<float> row(static_cast<std::size_t>(img.width) * 3);
    for (int y = img.height - 1; y >= 0; --y) {
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) row[3 * x + c] = static_cast<float>(img.at(x, y, c));
        if constexpr (std::endian::native == std::endian::big)
            for (float& f : row) f = std::bit_cast<float>(__builtin_bswap32(std::bit_cast<std::uint32_t>(f)));
        os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    if (!os) throw IoError("write failed for " + path.string());
}

ImageBuffer read_pfm(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    std::string magic;
    int w = 0, h = 0;
    double scale = 0;
    if (!(is >> magic >> w >> h >> scale) || magic != "PF" || w <= 0 || h <= 0 || scale == 0)
        throw IoError("malformed PFM header in " + path.string());
    is.get();  // single whitespace after the scale
    const bool little = scale < 0;
    ImageBuffer img(w, h, ColorSpace::LinearHdr);
    std::vector<float> row(static_cast<std::size_t>(w) * 3);
    for (int y = h - 1; y >= 0; --y) {
        is.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
        if (is.gcount() != static_cast<std::streamsize>(row.size() * sizeof(float)))
            throw IoError("truncated PFM payload in " + path.string());
        const bool swap = little != (std::endian::native == std::endian::little);
        for (std::size_t k = 0; k < row.size(); ++k) {
            float f = row[k];
            if (swap) f = std::bit_cast<float>(__builtin_bswap32(std::bit_cast<std::uint32_t>(f)));
            img.data[(static_cast<std::size_t>(y) * w) * 3 + k] = f;
        }
    }
    return img;
}

std::uint8_t encode_ldr(double v) {
    return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
}

double decode_ldr(std::uint8_t b) { return b / 255.0; }

void write_ppm(const fs::path& path, const ImageBuffer& img) {
    for (double v : img.data)
        if (!std::isfinite(v)) throw std::domain_error("write_ppm: non-finite pixel value");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << "P6\n" << img.width << ' ' << img.height << "\n255\n";
    std::vector<std::uint8_t> bytes(img.data.size());
    for (std::size_t k = 0; k < bytes.size(); ++k) bytes[k] = encode_ldr(img.data[k]);
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("write failed for " + path.string());
}

namespace {

// next header token, skipping '#' comments
std::string ppm_token(std::istream& is) {
    std::string tok;
    char ch;
    while (is.get(ch)) {
        if (ch == '#') {
            std::string rest;
            std::getline(is, rest);
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!tok.empty()) break;
            continue;
        }
        tok += ch;
    }
    return tok;
}

}  // namespace

ImageBuffer read_ppm(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    int w = 0, h = 0, maxval = 0;
    try {
        if (ppm_token(is) != "P6") throw IoError("not a binary PPM: " + path.string());
        w = std::stoi(ppm_token(is));
        h = std::stoi(ppm_token(is));
        maxval = std::stoi(ppm_token(is));
    } catch (const std::logic_error&) {
        throw IoError("malformed PPM header in " + path.string());
    }
    if (w <= 0 || h <= 0 || maxval != 255) throw IoError("unsupported PPM geometry or depth in " + path.string());
    ImageBuffer img(w, h, ColorSpace::LdrUnit);
    std::vector<std::uint8_t> bytes(img.data.size());
    is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (is.gcount() != static_cast<std::streamsize>(bytes.size())) throw IoError("truncated PPM payload in " + path.string());
    for (std::size_t k = 0; k < bytes.size(); ++k) img.data[k] = decode_ldr(bytes[k]);
    return img;
}

double psnr(const ImageBuffer& a, const ImageBuffer& b) {
    const double m = mse(a, b);
    if (m == 0.0) return kPsnrIdentical;
    return -10.0 * std::log10(m);
}

double ssim_metric(const ImageBuffer& a, const ImageBuffer& b) {
    require_same_shape(a, b, "ssim");
    constexpr int r = 5;
    if (a.width < 2 * r + 1 || a.height < 2 * r + 1) throw std::invalid_argument("ssim: image smaller than the 11x11 window");
    const auto taps = gaussian_kernel(1.5, r);
    const double c1 = 1e-4, c2 = 9e-4;
    double sum = 0;
    std::size_t count = 0;
    for (int y = r; y < a.height - r; ++y)
        for (int x = r; x < a.width - r; ++x)
            for (int c = 0; c < 3; ++c) {
                double ma = 0, mb = 0;
                for (int j = -r; j <= r; ++j)
                    for (int i = -r; i <= r; ++i) {
                        const double w = taps[i + r] * taps[j + r];
                        ma += w * a.at(x + i, y + j, c);
                        mb += w * b.at(x + i, y + j, c);
                    }
                double va = 0, vb = 0, cab = 0;
                for (int j = -r; j <= r; ++j)
                    for (int i = -r; i <= r; ++i) {
                        const double w = taps[i + r] * taps[j + r];
                        const double da = a.at(x + i, y + j, c) - ma, db = b.at(x + i, y + j, c) - mb;
                        va += w * da * da;
                        vb += w * db * db;
                        cab += w * da * db;
                    }
                sum += (2 * ma * mb + c1) * (2 * cab + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                ++count;
            }
    return sum / static_cast<double>(count);
}

}  // namespace hdrsplat
