#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "pixmamba/autodiff.hpp"

namespace pixmamba {

struct GradcheckResult {
    double max_rel_error = 0;
    double max_abs_error = 0;
    std::size_t checked = 0;
};

/// Compares the tape gradient of the scalar `loss_fn()` with respect to each
/// of `inputs` against fourth-order central finite differences. Inputs are
/// perturbed in place and restored. The relative error of one entry is
/// |analytic - numeric| / max(|analytic|, |numeric|, floor), where floor is
/// 1e-3 of the largest numeric gradient magnitude of that input.
template <typename F>
GradcheckResult gradcheck(F&& loss_fn, std::vector<Tensor<double>> inputs, double step = 3e-4) {
    for (auto& t : inputs) {
        t.set_requires_grad(true);
        t.zero_grad();
    }
    {
        GradTape<double> tape;
        auto loss = loss_fn();
        tape.backward(loss);
    }
    GradcheckResult r;
    NoGradGuard<double> no_grad;
    for (auto& t : inputs) {
        std::vector<double> analytic(t.grad().begin(), t.grad().end());
        std::vector<double> numeric(analytic.size());
        auto data = t.mutable_data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double saved = data[i];
            auto at = [&](double offset) {
                data[i] = saved + offset;
                return loss_fn().item();
            };
            const double f1 = at(step) - at(-step);
            const double f2 = at(2 * step) - at(-2 * step);
            data[i] = saved;
            numeric[i] = (8 * f1 - f2) / (12 * step);
        }
        double scale = 0;
        for (double v : numeric) scale = std::max(scale, std::abs(v));
        const double floor = std::max(1e-3 * scale, 1e-12);
        for (std::size_t i = 0; i < numeric.size(); ++i) {
            const double diff = std::abs(analytic[i] - numeric[i]);
            const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
            r.max_abs_error = std::max(r.max_abs_error, diff);
            r.max_rel_error = std::max(r.max_rel_error, diff / denom);
        }
        r.checked += numeric.size();
        t.zero_grad();
    }
    return r;
}

}  // namespace pixmamba
