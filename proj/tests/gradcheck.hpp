#pragma once

// Central finite differences against a double-precision scalar function.

#include <functional>
#include <vector>

#include "miot/nn/tensor.hpp"
#include "ref_ops.hpp"

namespace gradcheck {

// f evaluates the scalar objective from flat double copies of the checked
// tensors (same order). Returns the max relative error between the engine's
// analytic gradients and central differences with the given step.
inline double max_rel_error(std::vector<miot::nn::Tensor> checked,
                            const std::function<double(const std::vector<refop::Vec>&)>& f,
                            double step = 1e-3, double floor = 1e-2) {
    std::vector<refop::Vec> point;
    point.reserve(checked.size());
    for (auto& t : checked) point.emplace_back(t.values().begin(), t.values().end());

    double worst = 0.0;
    for (std::size_t ti = 0; ti < checked.size(); ++ti) {
        const auto& agrad = checked[ti].grad_values();
        for (std::size_t i = 0; i < point[ti].size(); ++i) {
            double keep = point[ti][i];
            point[ti][i] = keep + step;
            double fp = f(point);
            point[ti][i] = keep - step;
            double fm = f(point);
            point[ti][i] = keep;
            double fd = (fp - fm) / (2.0 * step);
            double an = agrad.empty() ? 0.0 : static_cast<double>(agrad[i]);
            double denom = std::max({std::abs(fd), std::abs(an), floor});
            worst = std::max(worst, std::abs(fd - an) / denom);
        }
    }
    return worst;
}

}  // namespace gradcheck
