#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "hdrsplat/gradengine.hpp"

using namespace hdrsplat;

namespace {

struct Square {
    std::vector<double> forward(std::span<const double> x) const {
        std::vector<double> y(x.begin(), x.end());
        for (double& v : y) v *= v;
        return y;
    }
    std::vector<double> vjp(std::span<const double> x, std::span<const double> dy) const {
        std::vector<double> d(x.size());
        for (std::size_t k = 0; k < x.size(); ++k) d[k] = 2 * x[k] * dy[k];
        return d;
    }
};

struct Sum {
    std::vector<double> forward(std::span<const double> x) const {
        double s = 0;
        for (double v : x) s += v;
        return {s};
    }
    std::vector<double> vjp(std::span<const double> x, std::span<const double> dy) const {
        return std::vector<double>(x.size(), dy[0]);
    }
};

struct Sin {
    std::vector<double> forward(std::span<const double> x) const {
        std::vector<double> y(x.size());
        for (std::size_t k = 0; k < x.size(); ++k) y[k] = std::sin(x[k]);
        return y;
    }
    std::vector<double> vjp(std::span<const double> x, std::span<const double> dy) const {
        std::vector<double> d(x.size());
        for (std::size_t k = 0; k < x.size(); ++k) d[k] = std::cos(x[k]) * dy[k];
        return d;
    }
};

static_assert(DiffOp<Square>);
static_assert(DiffOp<Chain>);

}  // namespace

TEST(Chain, ComposesForwardAndBackward) {
    Chain c;
    c.then(Sin{}).then(Square{}).then(Sum{});
    const std::vector<double> x{0.3, -1.1, 2.0};
    const auto y = c.forward(std::span<const double>(x));
    double ref = 0;
    for (double v : x) ref += std::sin(v) * std::sin(v);
    ASSERT_EQ(y.size(), 1u);
    EXPECT_NEAR(y[0], ref, 1e-15);
    const auto g = c.backprop();
    for (std::size_t k = 0; k < x.size(); ++k) EXPECT_NEAR(g[k], 2 * std::sin(x[k]) * std::cos(x[k]), 1e-15);
    const auto fd = finite_diff_check([&](std::span<const double> p) { return std::as_const(c).forward(p)[0]; }, x, g);
    EXPECT_LT(fd.max_relative_error, 1e-8);
}

TEST(Chain, BackpropWithoutForwardThrows) {
    Chain c;
    c.then(Square{});
    EXPECT_THROW(c.backprop(std::vector<double>{1.0}), MissingActivation);
    const std::vector<double> x{1.0};
    c.forward(std::span<const double>(x));
    c.clear_activations();
    EXPECT_THROW(c.backprop(std::vector<double>{1.0}), MissingActivation);
}

TEST(Chain, NestsAsOperator) {
    Chain inner;
    inner.then(Sin{}).then(Square{});
    Chain outer;
    outer.then(inner).then(Sum{});
    const std::vector<double> x{0.5, 0.25};
    outer.forward(std::span<const double>(x));
    const auto g = outer.backprop();
    EXPECT_NEAR(g[1], std::sin(2 * 0.25), 1e-15);
}

TEST(RelativeError, UsesFloor) {
    EXPECT_DOUBLE_EQ(relative_error(1.0, 1.0), 0.0);
    EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0), 0.5);
    EXPECT_DOUBLE_EQ(relative_error(0.0, 1e-10), 1e-10 / 1e-8);
}

TEST(FiniteDiff, DetectsWrongGradient) {
    const std::vector<double> x{0.4, 0.9};
    const auto f = [](std::span<const double> p) { return p[0] * p[0] + std::exp(p[1]); };
    const std::vector<double> good{0.8, std::exp(0.9)}, bad{0.8, 1.1 * std::exp(0.9)};
    EXPECT_LT(finite_diff_check(f, x, good).max_relative_error, 1e-9);
    const FdCheckResult r = finite_diff_check(f, x, bad);
    EXPECT_GT(r.max_relative_error, 0.05);
    EXPECT_EQ(r.worst_index, 1u);
}

TEST(Params, SelectionByIdGroupAndPrefix) {
    std::mt19937_64 rng(1);
    const Model m = make_model(fixtures::random_cloud(3, rng), 1);
    FdCheckOptions o;
    std::size_t all = 0;
    for (const auto& r : param_refs(m)) all += param_selected(o, r);
    EXPECT_EQ(all, param_refs(m).size());
    o.params = {"cloud.mu", "composer"};
    std::size_t n = 0;
    for (const auto& r : param_refs(m))
        if (param_selected(o, r)) {
            ++n;
            EXPECT_TRUE(r.id == "cloud.mu" || r.id.rfind("composer.", 0) == 0) << r.id;
        }
    EXPECT_EQ(n, 1u + 2u * (std::size(kComposerDims) - 1));
}

TEST(Tape, ParamLookup) {
    std::mt19937_64 rng(2);
    const Model m = make_model(fixtures::random_cloud(4, rng), 2);
    GradTape tape(m);
    EXPECT_EQ(tape.param("cloud.rotation").size(), 16u);
    tape.param("cloud.mu")[2] = 5;
    tape.zero();
    EXPECT_EQ(tape.param("cloud.mu")[2], 0.0);
    EXPECT_THROW(tape.param("cloud.nope"), std::out_of_range);
}

TEST(Fault, HookRoundTrips) {
    EXPECT_EQ(vjp_fault(), 1.0);
    set_vjp_fault(1.5);
    EXPECT_EQ(vjp_fault(), 1.5);
    set_vjp_fault(1.0);
}
