#pragma once

// Central finite-difference oracle for reverse-mode gradients. Test-only: it
// evaluates the loss through the forward path alone and never consults the
// backward rules it is checking.

#include "hrf/ops.hpp"
#include "hrf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace hrf::testing {

struct GradCheckResult {
    double max_rel_error = 0.0;  // over elements whose absolute error exceeds abs_tol
    double max_abs_error = 0.0;
    std::size_t checked = 0;
    std::size_t failures = 0;
    [[nodiscard]] bool passed() const { return failures == 0; }
};

struct GradCheckOptions {
    double eps = 1e-5;
    double rel_tol = 1e-4;
    double abs_tol = 1e-6;
    // Check at most this many elements per tensor (evenly strided); 0 = all.
    std::size_t max_per_tensor = 0;
};

inline GradCheckResult check_gradients(const std::function<Tensor()>& loss_fn, std::vector<Tensor> inputs,
                                       GradCheckOptions opt = {}) {
    GradGraph::current().reset();
    for (auto& t : inputs) t.zero_grad();
    Tensor loss = loss_fn();
    backward(loss);

    GradCheckResult result;
    for (auto& t : inputs) {
        const std::vector<double> analytic =
            t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end()) : std::vector<double>(t.numel(), 0.0);
        const std::size_t n = t.numel();
        const std::size_t step = (opt.max_per_tensor == 0 || n <= opt.max_per_tensor) ? 1 : n / opt.max_per_tensor;
        for (std::size_t i = 0; i < n; i += step) {
            double& slot = t.mutable_data()[i];
            const double saved = slot;
            double plus = 0.0, minus = 0.0;
            {
                NoGradGuard guard;
                slot = saved + opt.eps;
                plus = loss_fn().item();
                slot = saved - opt.eps;
                minus = loss_fn().item();
            }
            slot = saved;
            const double numeric = (plus - minus) / (2.0 * opt.eps);
            const double diff = std::abs(numeric - analytic[i]);
            result.max_abs_error = std::max(result.max_abs_error, diff);
            ++result.checked;
            if (diff <= opt.abs_tol) continue;
            const double rel = diff / std::max(std::abs(numeric), std::abs(analytic[i]));
            result.max_rel_error = std::max(result.max_rel_error, rel);
            if (rel >= opt.rel_tol) ++result.failures;
        }
    }
    GradGraph::current().reset();
    return result;
}

/// Tensor of uniform values in [-1, 1] that requires a gradient.
inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, bool requires_grad = true) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) v = dist(rng);
    return Tensor::from(std::move(shape), std::move(values), requires_grad);
}

/// sum(w * y); with a fixed random w every output element reaches the loss.
inline Tensor weighted_sum(const Tensor& y, const Tensor& w) {
    Tensor flat = ops::reshape(ops::mul(y, w), {1, y.numel()});
    Tensor ones = Tensor::full({y.numel(), 1}, 1.0);
    return ops::matmul(flat, ones);
}

}  // namespace hrf::testing
