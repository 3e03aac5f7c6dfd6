#pragma once

// Adam with bias correction. One state object per parameter set.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "miot/nn/tensor.hpp"

namespace miot::nn {

struct AdamState {
    float lr = 1e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    std::int64_t step_count = 0;
    std::vector<std::vector<float>> m, v;

    explicit AdamState(std::span<const Tensor> params, float learning_rate = 1e-4f)
        : lr(learning_rate) {
        m.reserve(params.size());
        v.reserve(params.size());
        for (const Tensor& p : params) {
            m.emplace_back(p.numel(), 0.0f);
            v.emplace_back(p.numel(), 0.0f);
        }
    }
};

inline void adam_step(std::span<Tensor> params, AdamState& st) {
    require(params.size() == st.m.size(), "Adam state does not match parameter list");
    ++st.step_count;
    double bc1 = 1.0 - std::pow(static_cast<double>(st.beta1), static_cast<double>(st.step_count));
    double bc2 = 1.0 - std::pow(static_cast<double>(st.beta2), static_cast<double>(st.step_count));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& p = params[pi];
        require(p.numel() == st.m[pi].size(), "parameter shape changed under Adam");
        float* w = p.data();
        const float* g = p.has_grad() ? p.grad_values().data() : nullptr;
        if (!g) continue;
        float* mp = st.m[pi].data();
        float* vp = st.v[pi].data();
        std::size_t n = p.numel();
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
            float gi = g[i];
            mp[i] = st.beta1 * mp[i] + (1.0f - st.beta1) * gi;
            vp[i] = st.beta2 * vp[i] + (1.0f - st.beta2) * gi * gi;
            float mhat = mp[i] / static_cast<float>(bc1);
            float vhat = vp[i] / static_cast<float>(bc2);
            w[i] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
        }
    }
}

inline void zero_grads(std::span<Tensor> params) {
    for (Tensor& p : params) p.zero_grad();
}

}  // namespace miot::nn
