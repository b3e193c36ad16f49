#pragma once

#include <concepts>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hdrsplat/model.hpp"

namespace hdrsplat {

class MissingActivation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Non-finite value in a forward or backward pass.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A differentiable map R^n -> R^m with a vector-Jacobian product.
/// `vjp(x, dy)` must return dL/dx given dL/dy at input x.
template <class T>
concept DiffOp = requires(const T& op, std::span<const double> x, std::span<const double> dy) {
    { op.forward(x) } -> std::convertible_to<std::vector<double>>;
    { op.vjp(x, dy) } -> std::convertible_to<std::vector<double>>;
};

/// Type-erased DiffOp.
class AnyDiffOp {
public:
    template <DiffOp T>
    AnyDiffOp(T op) : self_(std::make_shared<Model_<T>>(std::move(op))) {}

    std::vector<double> forward(std::span<const double> x) const { return self_->forward(x); }
    std::vector<double> vjp(std::span<const double> x, std::span<const double> dy) const { return self_->vjp(x, dy); }

private:
    struct Concept {
        virtual ~Concept() = default;
        virtual std::vector<double> forward(std::span<const double> x) const = 0;
        virtual std::vector<double> vjp(std::span<const double> x, std::span<const double> dy) const = 0;
    };
    template <class T>
    struct Model_ final : Concept {
        explicit Model_(T o) : op(std::move(o)) {}
        std::vector<double> forward(std::span<const double> x) const override { return op.forward(x); }
        std::vector<double> vjp(std::span<const double> x, std::span<const double> dy) const override {
            return op.vjp(x, dy);
        }
        T op;
    };
    std::shared_ptr<const Concept> self_;
};

/// Sequential composition. forward() saves each stage input; backprop()
/// walks them in reverse and throws MissingActivation without a prior forward.
class Chain {
public:
    Chain() = default;
    explicit Chain(std::vector<AnyDiffOp> ops) : ops_(std::move(ops)) {}

    Chain& then(AnyDiffOp op) {
        ops_.push_back(std::move(op));
        saved_.clear();
        return *this;
    }
    std::size_t size() const { return ops_.size(); }

    std::vector<double> forward(std::span<const double> x);
    std::vector<double> backprop(std::span<const double> dy) const;
    /// Scalar-output convenience: cotangent `seed` on the single output.
    std::vector<double> backprop(double seed = 1.0) const;
    void clear_activations() { saved_.clear(); }

    /// A Chain is itself a DiffOp (re-running forward internally for vjp).
    std::vector<double> forward(std::span<const double> x) const;
    std::vector<double> vjp(std::span<const double> x, std::span<const double> dy) const;

private:
    std::vector<AnyDiffOp> ops_;
    std::vector<std::vector<double>> saved_;  // input of each stage, plus the final output
};

/// Gradients of every learnable parameter plus per-view NDC gradient samples.
struct GradTape {
    struct NdcView {
        std::vector<double> norm;            // per Gaussian, |dL_k / d mu_ndc|
        std::vector<std::uint8_t> visible;   // nonzero compositing weight in view k
    };

    Model grads;
    std::vector<NdcView> ndc_views;

    GradTape() = default;
    explicit GradTape(const Model& shape) : grads(zeros_like(shape)) {}

    void zero();
    /// Gradient array for a parameter id such as "cloud.mu" or "f_mix.0.weight".
    std::span<double> param(const std::string& id);
    std::span<const double> param(const std::string& id) const;
    /// Sum of samples and visibility count M_i over the recorded views.
    std::vector<double> ndc_sum() const;
    std::vector<std::uint32_t> ndc_count() const;
};

struct FdCheckOptions {
    double step = 1e-5;
    double floor = 1e-8;                 // denominator floor of the relative error
    std::vector<std::string> params;     // ids or group names; empty selects everything
    std::size_t max_per_param = 0;       // 0 checks every coordinate
};

struct FdCheckResult {
    double max_relative_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t checked = 0;
};

/// Test hook: multiplies the cotangent flowing into the illumination
/// modulator by `factor` (1 disables). Used to prove the check can fail.
void set_vjp_fault(double factor);
double vjp_fault();

/// True when `r` matches an id, a group name, a dotted prefix or "all".
bool param_selected(const FdCheckOptions& options, const ConstParamRef& r);

/// |analytic - central| / max(|analytic|, |central|, floor)
double relative_error(double analytic, double numeric, double floor = 1e-8);

/// Central differences on a scalar function of a flat vector.
FdCheckResult finite_diff_check(const std::function<double(std::span<const double>)>& f,
                                std::span<const double> x, std::span<const double> analytic, double step = 1e-5);

/// Central differences over model parameters. `loss` is evaluated on a
/// perturbed copy of `model`; `analytic` holds the gradients to check. The
/// difference quotient is formed in long double.
FdCheckResult finite_diff_check(const std::function<long double(const Model&)>& loss, const Model& model,
                                const Model& analytic, const FdCheckOptions& options);

}  // namespace hdrsplat
