#include "hdrsplat/checkpoint.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <bit>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cstring>
#include <fstream>
#include <type_traits>

#include "hdrsplat/dataio.hpp"

namespace hdrsplat {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'P', 'H', 'G', 'S'};

template <class T>
T to_little(T v) {
    if constexpr (std::endian::native == std::endian::big) {
        auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
        std::reverse(bytes.begin(), bytes.end());
        return std::bit_cast<T>(bytes);
    }
    return v;
}

class Writer {
public:
    explicit Writer(std::ostream& os) : os_(os) {}
    template <class T>
        requires std::is_arithmetic_v<T>
    void put(T v) {
        v = to_little(v);
        os_.write(reinterpret_cast<const char*>(&v), sizeof(T));
    }
    void put_all(std::span<const double> xs) {
        for (double x : xs) put(x);
    }

private:
    std::ostream& os_;
};

class Reader {
public:
    Reader(std::istream& is, std::string name) : is_(is), name_(std::move(name)) {}
    template <class T>
    T get() {
        T v;
        is_.read(reinterpret_cast<char*>(&v), sizeof(T));
        if (is_.gcount() != static_cast<std::streamsize>(sizeof(T))) throw IoError("truncated checkpoint " + name_);
        return to_little(v);
    }
    void get(std::vector<double>& xs, std::size_t n) {
        xs.resize(n);
        for (double& x : xs) x = get<double>();
    }

private:
    std::istream& is_;
    std::string name_;
};

void write_mlp(Writer& w, const MlpParams& p) {
    w.put(static_cast<std::uint32_t>(p.output_map));
    w.put(static_cast<std::uint32_t>(p.layers.size()));
    for (const auto& l : p.layers) {
        w.put(static_cast<std::uint32_t>(l.in));
        w.put(static_cast<std::uint32_t>(l.out));
        w.put_all(l.weight);
        w.put_all(l.bias);
    }
}

MlpParams read_mlp(Reader& r) {
    MlpParams p;
    const auto map = r.get<std::uint32_t>();
    if (map > 2) throw IoError("checkpoint: unknown output map");
    p.output_map = static_cast<OutputMap>(map);
    const auto n = r.get<std::uint32_t>();
    if (n == 0 || n > 64) throw IoError("checkpoint: implausible layer count");
    p.layers.resize(n);
    for (auto& l : p.layers) {
        l.in = static_cast<int>(r.get<std::uint32_t>());
        l.out = static_cast<int>(r.get<std::uint32_t>());
        if (l.in <= 0 || l.out <= 0 || l.in > 4096 || l.out > 4096) throw IoError("checkpoint: implausible layer size");
        r.get(l.weight, static_cast<std::size_t>(l.in) * l.out);
        r.get(l.bias, static_cast<std::size_t>(l.out));
    }
    try {
        p.validate();
    } catch (const std::invalid_argument& e) {
        throw IoError(std::string("checkpoint: ") + e.what());
    }
    return p;
}

}  // namespace

fs::path meta_path(const fs::path& checkpoint) { return fs::path(checkpoint.string() + ".meta"); }

void save_checkpoint(const fs::path& path, const Model& model, const CheckpointMeta& meta) {
    model.cloud.validate();
    {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw IoError("cannot open " + path.string() + " for writing");
        Writer w(os);
        os.write(kMagic, 4);
        w.put(kCheckpointVersion);
        w.put(static_cast<std::uint64_t>(model.cloud.size()));
        const GaussianCloud& c = model.cloud;
        for (const auto* f : {&c.mu, &c.log_scale, &c.rotation, &c.opacity_logit, &c.h_r, &c.l_a_raw}) w.put_all(*f);
        write_mlp(w, model.composer);
        write_mlp(w, model.modulator);
        write_mlp(w, model.tonemapper.f_tm);
        write_mlp(w, model.tonemapper.f_mix);
        if (!os) throw IoError("write failed for " + path.string());
    }
    std::ofstream ms(meta_path(path));
    if (!ms) throw IoError("cannot write " + meta_path(path).string());
    const auto& lw = meta.weights;
    ms << "iteration = " << meta.iteration << '\n'
       << "seed = " << meta.seed << '\n'
       << "gaussians = " << model.cloud.size() << '\n'
       << fmt::format("lambda1 = {:.17g}\nlambda2 = {:.17g}\nlambda3 = {:.17g}\ngamma = {:.17g}\n", lw.lambda1,
                      lw.lambda2, lw.lambda3, lw.gamma)
       << fmt::format("blur_sigma = {:.17g}\nblur_radius = {}\n", lw.blur_sigma, lw.blur_radius)
       << "fuse = " << to_string(meta.fuse) << '\n'
       << "gi_enabled = " << (meta.gi_enabled ? "true" : "false") << '\n'
       << fmt::format("extent = {:.17g}\n", meta.extent);
    if (!ms) throw IoError("write failed for " + meta_path(path).string());
}

Checkpoint load_checkpoint(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) throw IoError("not a checkpoint: " + path.string());
    Reader r(is, path.string());
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) throw IoError(fmt::format("unsupported checkpoint version {}", version));
    const auto n = r.get<std::uint64_t>();
    if (n > (1u << 26)) throw IoError("checkpoint: implausible Gaussian count");

    Checkpoint ck;
    GaussianCloud& c = ck.model.cloud;
    r.get(c.mu, 3 * n);
    r.get(c.log_scale, 3 * n);
    r.get(c.rotation, 4 * n);
    r.get(c.opacity_logit, n);
    r.get(c.h_r, kReflectanceDim * n);
    r.get(c.l_a_raw, kIlluminationDim * n);
    ck.model.composer = read_mlp(r);
    ck.model.modulator = read_mlp(r);
    ck.model.tonemapper.f_tm = read_mlp(r);
    ck.model.tonemapper.f_mix = read_mlp(r);
    if (is.peek() != std::char_traits<char>::eof()) throw IoError("trailing bytes in checkpoint " + path.string());

    namespace pt = boost::property_tree;
    pt::ptree meta;
    try {
        pt::read_ini(meta_path(path).string(), meta);
        CheckpointMeta& m = ck.meta;
        m.iteration = meta.get<int>("iteration");
        m.seed = meta.get<std::uint64_t>("seed");
        m.weights.lambda1 = meta.get<double>("lambda1");
        m.weights.lambda2 = meta.get<double>("lambda2");
        m.weights.lambda3 = meta.get<double>("lambda3");
        m.weights.gamma = meta.get<double>("gamma");
        m.weights.blur_sigma = meta.get<double>("blur_sigma");
        m.weights.blur_radius = meta.get<int>("blur_radius");
        m.fuse = fuse_mode_from_string(meta.get<std::string>("fuse"));
        m.gi_enabled = meta.get<bool>("gi_enabled");
        m.extent = meta.get<double>("extent");
    } catch (const pt::ptree_error& e) {
        throw IoError(std::string("bad checkpoint metadata: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw IoError(std::string("bad checkpoint metadata: ") + e.what());
    }
    return ck;
}

PipelineOptions inference_options(const CheckpointMeta& meta, const Vec3& background) {
    PipelineOptions o;
    o.weights = meta.weights;
    o.fuse = meta.fuse;
    o.gi_enabled = meta.gi_enabled;
    o.raster.background = background;
    return o;
}

}  // namespace hdrsplat
