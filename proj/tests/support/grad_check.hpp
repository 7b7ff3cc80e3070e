#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include <torch/torch.h>

namespace spn::testing {

// Largest relative error between autograd and central differences (step h)
// over every element of `x`. The denominator is floored at 1 so entries with
// tiny gradients are compared absolutely.
inline double max_relative_gradient_error(const std::function<torch::Tensor(const torch::Tensor&)>& f,
                                          const torch::Tensor& at, double h = 1e-4) {
    auto x = at.detach().to(torch::kFloat64).clone().set_requires_grad(true);
    auto analytic = torch::autograd::grad({f(x)}, {x})[0].contiguous().view(-1);
    double worst = 0.0;
    for (int64_t i = 0; i < x.numel(); ++i) {
        auto plus = x.detach().clone(), minus = x.detach().clone();
        plus.view(-1)[i] += h;
        minus.view(-1)[i] -= h;
        const double numeric = (f(plus).item<double>() - f(minus).item<double>()) / (2 * h);
        const double a = analytic[i].item<double>();
        worst = std::max(worst, std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)}));
    }
    return worst;
}

} // namespace spn::testing
