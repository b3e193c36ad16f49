#include "hdrsplat/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "hdrsplat/linalg.hpp"
#include "hdrsplat/parallel.hpp"

namespace hdrsplat {

namespace {

constexpr int kRowsPerBlock = 256;

inline double leaky(double z) { return z > 0 ? z : kLeakySlope * z; }
inline double leaky_grad(double z) { return z > 0 ? 1.0 : kLeakySlope; }

inline double apply_output(OutputMap m, double z) {
    switch (m) {
        case OutputMap::Softplus: return softplus(z);
        case OutputMap::Sigmoid: return sigmoid(z);
        case OutputMap::Identity: break;
    }
    return z;
}

inline double output_grad(OutputMap m, double z, double y) {
    switch (m) {
        case OutputMap::Softplus: return sigmoid(z);
        case OutputMap::Sigmoid: return y * (1.0 - y);
        case OutputMap::Identity: break;
    }
    return 1.0;
}

std::size_t blocks_for(int batch) { return (static_cast<std::size_t>(batch) + kRowsPerBlock - 1) / kRowsPerBlock; }

}  // namespace

std::size_t MlpParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
}

void MlpParams::validate() const {
    if (layers.empty()) throw std::invalid_argument("MlpParams: no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        if (l.in <= 0 || l.out <= 0) throw std::invalid_argument("MlpParams: empty layer " + std::to_string(i));
        if (l.weight.size() != static_cast<std::size_t>(l.in) * l.out || l.bias.size() != static_cast<std::size_t>(l.out))
            throw std::invalid_argument("MlpParams: layer " + std::to_string(i) + " storage does not match its shape");
        if (i > 0 && layers[i - 1].out != l.in)
            throw std::invalid_argument("MlpParams: layer " + std::to_string(i) + " input does not chain");
        for (double v : l.weight)
            if (!std::isfinite(v)) throw std::invalid_argument("MlpParams: non-finite weight");
        for (double v : l.bias)
            if (!std::isfinite(v)) throw std::invalid_argument("MlpParams: non-finite bias");
    }
}

MlpParams make_mlp(std::span<const int> dims, OutputMap output_map, std::mt19937_64& rng, double output_bias) {
    if (dims.size() < 2) throw std::invalid_argument("make_mlp: need at least input and output dims");
    MlpParams p;
    p.output_map = output_map;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        DenseLayer l;
        l.in = dims[i];
        l.out = dims[i + 1];
        const double limit = std::sqrt(6.0 / (l.in + l.out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        l.weight.resize(static_cast<std::size_t>(l.in) * l.out);
        for (double& w : l.weight) w = dist(rng);
        l.bias.assign(l.out, 0.0);
        p.layers.push_back(std::move(l));
    }
    std::fill(p.layers.back().bias.begin(), p.layers.back().bias.end(), output_bias);
    return p;
}

MlpParams zeros_like(const MlpParams& p) {
    MlpParams z = p;
    set_zero(z);
    return z;
}

void set_zero(MlpParams& p) {
    for (auto& l : p.layers) {
        std::fill(l.weight.begin(), l.weight.end(), 0.0);
        std::fill(l.bias.begin(), l.bias.end(), 0.0);
    }
}

std::vector<double> mlp_forward(const MlpParams& p, std::span<const double> x, int batch, MlpTrace* trace) {
    const int in_dim = p.input_dim();
    const int out_dim = p.output_dim();
    if (x.size() != static_cast<std::size_t>(batch) * in_dim)
        throw std::invalid_argument("mlp_forward: input size does not match batch x input_dim");

    const std::size_t n_layers = p.layers.size();
    std::vector<std::vector<double>> pre(n_layers);
    for (std::size_t l = 0; l < n_layers; ++l) pre[l].resize(static_cast<std::size_t>(batch) * p.layers[l].out);
    std::vector<double> out(static_cast<std::size_t>(batch) * out_dim);

    int widest = in_dim;
    for (const auto& l : p.layers) widest = std::max(widest, l.out);

    parallel_for_blocks(blocks_for(batch), [&](std::size_t block) {
        const int r0 = static_cast<int>(block) * kRowsPerBlock;
        const int r1 = std::min(batch, r0 + kRowsPerBlock);
        std::vector<double> act(widest), next(widest);
        for (int r = r0; r < r1; ++r) {
            std::copy_n(x.data() + static_cast<std::size_t>(r) * in_dim, in_dim, act.data());
            for (std::size_t li = 0; li < n_layers; ++li) {
                const DenseLayer& L = p.layers[li];
                double* z = pre[li].data() + static_cast<std::size_t>(r) * L.out;
                for (int j = 0; j < L.out; ++j) {
                    const double* w = L.weight.data() + static_cast<std::size_t>(j) * L.in;
                    double s = L.bias[j];
                    for (int i = 0; i < L.in; ++i) s += w[i] * act[i];
                    z[j] = s;
                }
                if (li + 1 < n_layers) {
                    for (int j = 0; j < L.out; ++j) next[j] = leaky(z[j]);
                    std::swap(act, next);
                } else {
                    double* o = out.data() + static_cast<std::size_t>(r) * out_dim;
                    for (int j = 0; j < L.out; ++j) o[j] = apply_output(p.output_map, z[j]);
                }
            }
        }
    });

    if (trace) {
        trace->batch = batch;
        trace->input.assign(x.begin(), x.end());
        trace->pre = std::move(pre);
        trace->output = out;
    }
    return out;
}

void mlp_backward(const MlpParams& p, const MlpTrace& trace, std::span<const double> d_output, MlpParams* grad,
                  std::vector<double>* d_input) {
    const int batch = trace.batch;
    const int in_dim = p.input_dim();
    const int out_dim = p.output_dim();
    const std::size_t n_layers = p.layers.size();
    if (trace.pre.size() != n_layers) throw std::logic_error("mlp_backward: trace does not belong to this network");
    if (d_output.size() != static_cast<std::size_t>(batch) * out_dim)
        throw std::invalid_argument("mlp_backward: cotangent size mismatch");

    if (d_input) d_input->assign(static_cast<std::size_t>(batch) * in_dim, 0.0);

    int widest = in_dim;
    for (const auto& l : p.layers) widest = std::max(widest, l.out);

    // Per-block parameter-gradient partials, merged in block order below.
    const std::size_t blocks = blocks_for(batch);
    const std::size_t n_params = p.parameter_count();
    std::vector<std::vector<double>> partial(grad ? blocks : 0);

    parallel_for_blocks(blocks, [&](std::size_t block) {
        const int r0 = static_cast<int>(block) * kRowsPerBlock;
        const int r1 = std::min(batch, r0 + kRowsPerBlock);
        double* g = nullptr;
        if (grad) {
            partial[block].assign(n_params, 0.0);
            g = partial[block].data();
        }
        std::vector<double> dz(widest), da(widest), a_prev(widest);
        for (int r = r0; r < r1; ++r) {
            {
                const DenseLayer& L = p.layers.back();
                const double* z = trace.pre.back().data() + static_cast<std::size_t>(r) * L.out;
                const double* y = trace.output.data() + static_cast<std::size_t>(r) * out_dim;
                const double* dy = d_output.data() + static_cast<std::size_t>(r) * out_dim;
                for (int j = 0; j < L.out; ++j) dz[j] = dy[j] * output_grad(p.output_map, z[j], y[j]);
            }
            // offset of each layer's block inside the flat partial
            std::size_t offset = n_params;
            for (std::size_t li = n_layers; li-- > 0;) {
                const DenseLayer& L = p.layers[li];
                offset -= L.weight.size() + L.bias.size();
                if (li == 0) {
                    std::copy_n(trace.input.data() + static_cast<std::size_t>(r) * in_dim, in_dim, a_prev.data());
                } else {
                    const double* zp = trace.pre[li - 1].data() + static_cast<std::size_t>(r) * L.in;
                    for (int i = 0; i < L.in; ++i) a_prev[i] = leaky(zp[i]);
                }
                if (g) {
                    double* gw = g + offset;
                    double* gb = gw + L.weight.size();
                    for (int j = 0; j < L.out; ++j) {
                        const double dj = dz[j];
                        double* row = gw + static_cast<std::size_t>(j) * L.in;
                        for (int i = 0; i < L.in; ++i) row[i] += dj * a_prev[i];
                        gb[j] += dj;
                    }
                }
                if (li == 0 && !d_input) break;
                std::fill_n(da.data(), L.in, 0.0);
                for (int j = 0; j < L.out; ++j) {
                    const double dj = dz[j];
                    const double* w = L.weight.data() + static_cast<std::size_t>(j) * L.in;
                    for (int i = 0; i < L.in; ++i) da[i] += w[i] * dj;
                }
                if (li == 0) {
                    std::copy_n(da.data(), in_dim, d_input->data() + static_cast<std::size_t>(r) * in_dim);
                } else {
                    const double* zp = trace.pre[li - 1].data() + static_cast<std::size_t>(r) * L.in;
                    for (int i = 0; i < L.in; ++i) dz[i] = da[i] * leaky_grad(zp[i]);
                }
            }
        }
    });

    if (!grad) return;
    for (std::size_t b = 0; b < blocks; ++b) {
        const double* src = partial[b].data();
        for (auto& L : grad->layers) {
            for (double& w : L.weight) w += *src++;
            for (double& v : L.bias) v += *src++;
        }
    }
}

}  // namespace hdrsplat
