#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace hdrsplat {

/// Final nonlinearity of an MLP. Values are part of the checkpoint format.
enum class OutputMap : std::uint32_t { Identity = 0, Softplus = 1, Sigmoid = 2 };

inline constexpr double kLeakySlope = 0.01;

struct DenseLayer {
    int in = 0;
    int out = 0;
    std::vector<double> weight;  // out x in, row-major
    std::vector<double> bias;    // out
};

/// Fully connected network, leaky-ReLU on hidden layers.
struct MlpParams {
    std::vector<DenseLayer> layers;
    OutputMap output_map = OutputMap::Identity;

    int input_dim() const { return layers.empty() ? 0 : layers.front().in; }
    int output_dim() const { return layers.empty() ? 0 : layers.back().out; }
    std::size_t parameter_count() const;

    /// Throws std::invalid_argument if dimensions do not chain or any entry is non-finite.
    void validate() const;
};

/// Glorot-uniform weights, zero biases, final bias set to `output_bias`.
MlpParams make_mlp(std::span<const int> dims, OutputMap output_map, std::mt19937_64& rng, double output_bias);

/// Same shape, all zeros.
MlpParams zeros_like(const MlpParams& p);

void set_zero(MlpParams& p);

/// Saved activations of one batched forward pass.
struct MlpTrace {
    int batch = 0;
    std::vector<double> input;                 // batch x in
    std::vector<std::vector<double>> pre;      // per layer: batch x out (before activation)
    std::vector<double> output;                // batch x out_dim (after output map)
};

/// Evaluates the network on `batch` rows of `x` (batch x input_dim).
std::vector<double> mlp_forward(const MlpParams& p, std::span<const double> x, int batch, MlpTrace* trace = nullptr);

/// VJP of mlp_forward. Accumulates parameter gradients into `grad` when non-null
/// and writes the input cotangent into `d_input` when non-null.
void mlp_backward(const MlpParams& p, const MlpTrace& trace, std::span<const double> d_output, MlpParams* grad,
                  std::vector<double>* d_input);

}  // namespace hdrsplat
