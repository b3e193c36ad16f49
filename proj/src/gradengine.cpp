#include "hdrsplat/gradengine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

namespace hdrsplat {

std::vector<double> Chain::forward(std::span<const double> x) {
    saved_.clear();
    saved_.emplace_back(x.begin(), x.end());
    for (const auto& op : ops_) saved_.push_back(op.forward(saved_.back()));
    return saved_.back();
}

std::vector<double> Chain::backprop(std::span<const double> dy) const {
    if (saved_.size() != ops_.size() + 1) throw MissingActivation("backprop called before forward");
    if (dy.size() != saved_.back().size()) throw std::invalid_argument("backprop: cotangent size mismatch");
    std::vector<double> g(dy.begin(), dy.end());
    for (std::size_t k = ops_.size(); k-- > 0;) g = ops_[k].vjp(saved_[k], g);
    return g;
}

std::vector<double> Chain::backprop(double seed) const {
    if (saved_.size() != ops_.size() + 1) throw MissingActivation("backprop called before forward");
    if (saved_.back().size() != 1) throw std::invalid_argument("backprop: scalar seed needs a scalar output");
    const double dy[1] = {seed};
    return backprop(std::span<const double>(dy, 1));
}

std::vector<double> Chain::forward(std::span<const double> x) const {
    std::vector<double> v(x.begin(), x.end());
    for (const auto& op : ops_) v = op.forward(v);
    return v;
}

std::vector<double> Chain::vjp(std::span<const double> x, std::span<const double> dy) const {
    Chain tmp(ops_);
    tmp.forward(x);
    return tmp.backprop(dy);
}

void GradTape::zero() {
    set_zero(grads);
    ndc_views.clear();
}

std::span<double> GradTape::param(const std::string& id) {
    for (auto& r : param_refs(grads))
        if (r.id == id) return r.values;
    throw std::out_of_range("unknown parameter id '" + id + "'");
}

std::span<const double> GradTape::param(const std::string& id) const {
    for (const auto& r : param_refs(grads))
        if (r.id == id) return r.values;
    throw std::out_of_range("unknown parameter id '" + id + "'");
}

std::vector<double> GradTape::ndc_sum() const {
    std::vector<double> s(grads.cloud.size(), 0.0);
    for (const auto& v : ndc_views)
        for (std::size_t i = 0; i < s.size(); ++i)
            if (v.visible[i]) s[i] += v.norm[i];
    return s;
}

std::vector<std::uint32_t> GradTape::ndc_count() const {
    std::vector<std::uint32_t> c(grads.cloud.size(), 0);
    for (const auto& v : ndc_views)
        for (std::size_t i = 0; i < c.size(); ++i) c[i] += v.visible[i] ? 1 : 0;
    return c;
}

double relative_error(double analytic, double numeric, double floor) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

namespace {

void record(FdCheckResult& r, const std::string& id, std::size_t i, double a, double n, double floor) {
    const double e = relative_error(a, n, floor);
    if (r.checked++ == 0 || e > r.max_relative_error) {
        r.max_relative_error = e;
        r.worst_param = id;
        r.worst_index = i;
        r.worst_analytic = a;
        r.worst_numeric = n;
    }
}

}  // namespace

namespace {
std::atomic<double> g_vjp_fault{1.0};
}

void set_vjp_fault(double factor) { g_vjp_fault = factor; }
double vjp_fault() { return g_vjp_fault; }

bool param_selected(const FdCheckOptions& o, const ConstParamRef& r) {
    if (o.params.empty()) return true;
    for (const auto& p : o.params) {
        if (p == "all" || p == r.id || p == to_string(r.group)) return true;
        if (r.id.rfind(p + ".", 0) == 0) return true;  // prefix such as "cloud" or "f_tm"
    }
    return false;
}

FdCheckResult finite_diff_check(const std::function<double(std::span<const double>)>& f,
                                std::span<const double> x, std::span<const double> analytic, double step) {
    if (!(step > 0)) throw std::invalid_argument("finite_diff_check: step must be positive");
    if (x.size() != analytic.size()) throw std::invalid_argument("finite_diff_check: size mismatch");
    std::vector<double> xp(x.begin(), x.end());
    FdCheckResult r;
    for (std::size_t i = 0; i < xp.size(); ++i) {
        const double x0 = xp[i];
        xp[i] = x0 + step;
        const double fp = f(xp);
        xp[i] = x0 - step;
        const double fm = f(xp);
        xp[i] = x0;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericalError("finite_diff_check: non-finite value at coordinate " + std::to_string(i));
        record(r, "x", i, analytic[i], (fp - fm) / (2 * step), 1e-8);
    }
    return r;
}

FdCheckResult finite_diff_check(const std::function<long double(const Model&)>& loss, const Model& model,
                                const Model& analytic, const FdCheckOptions& options) {
    if (!(options.step > 0)) throw std::invalid_argument("finite_diff_check: step must be positive");
    Model work = model;
    auto work_refs = param_refs(work);
    const auto grad_refs = param_refs(analytic);
    const auto model_refs = param_refs(model);
    FdCheckResult r;
    for (std::size_t p = 0; p < work_refs.size(); ++p) {
        if (!param_selected(options, model_refs[p])) continue;
        auto values = work_refs[p].values;
        std::size_t count = values.size();
        std::size_t stride = 1;
        if (options.max_per_param > 0 && count > options.max_per_param) stride = (count + options.max_per_param - 1) / options.max_per_param;
        for (std::size_t i = 0; i < count; i += stride) {
            const double x0 = values[i];
            values[i] = x0 + options.step;
            const long double fp = loss(work);
            values[i] = x0 - options.step;
            const long double fm = loss(work);
            values[i] = x0;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw NumericalError("finite_diff_check: non-finite loss when perturbing " + work_refs[p].id + "[" +
                                     std::to_string(i) + "]");
            const double numeric = static_cast<double>((fp - fm) / (2.0L * options.step));
            record(r, work_refs[p].id, i, grad_refs[p].values[i], numeric, options.floor);
        }
    }
    return r;
}

}  // namespace hdrsplat
