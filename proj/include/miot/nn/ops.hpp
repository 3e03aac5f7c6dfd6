#pragma once

// The operator set the restoration model needs: convolution (with a grouped
// variant so densely-connected blocks never materialize their concatenated
// inputs), ReLU, channel concat, elementwise add, sub-pixel shuffle, and the
// training losses.

#include <cmath>
#include <cstring>
#include <span>
#include <vector>

#include "miot/nn/kernels.hpp"
#include "miot/nn/tensor.hpp"

namespace miot::nn {

namespace detail {

struct ConvDims {
    int batch = 1;
    int H = 0, W = 0;
    int total_c = 0;
    bool batched = false;
};

inline ConvDims group_dims(std::span<const Tensor> xs) {
    require(!xs.empty(), "conv needs at least one input");
    ConvDims d;
    const auto& s0 = xs.front().shape();
    require(s0.size() == 3 || s0.size() == 4, "conv input must be (C,H,W) or (B,C,H,W)");
    d.batched = s0.size() == 4;
    d.batch = d.batched ? s0[0] : 1;
    d.H = s0[d.batched ? 2 : 1];
    d.W = s0[d.batched ? 3 : 2];
    for (const Tensor& x : xs) {
        const auto& s = x.shape();
        require(s.size() == s0.size(), "conv group inputs must share rank");
        require(s[d.batched ? 2 : 1] == d.H && s[d.batched ? 3 : 2] == d.W,
                "conv group inputs must share spatial dims");
        require(!d.batched || s[0] == d.batch, "conv group inputs must share batch");
        d.total_c += s[d.batched ? 1 : 0];
    }
    return d;
}

inline thread_local std::vector<float> tl_panel;
inline thread_local std::vector<float> tl_dcols;

}  // namespace detail

// Grouped convolution: behaves exactly like conv2d(concat_channels(xs), w, b)
// but reads the group planes in place. Stride 1, same padding, k in {1,3}.
inline Tensor conv2d_group(std::span<const Tensor> xs, const Tensor& w, const Tensor& b,
                           bool fuse_relu) {
    detail::ConvDims dims = detail::group_dims(xs);
    require(w.rank() == 4, "conv weights must be (out,in,k,k)");
    int oc = w.dim(0), ic = w.dim(1), k = w.dim(2);
    require(k == w.dim(3) && (k == 1 || k == 3), "kernel must be 1x1 or 3x3");
    require(ic == dims.total_c, "conv weight channels do not match input channels");
    require(b.rank() == 1 && b.dim(0) == oc, "bias must be (out)");

    int ngroups = static_cast<int>(xs.size());
    require(ngroups <= 16, "conv group fan-in limit is 16");
    std::vector<int> gch(ngroups);
    for (int g = 0; g < ngroups; ++g)
        gch[g] = xs[g].dim(dims.batched ? 1 : 0);

    kern::ConvShape cs{dims.H, dims.W, k, dims.total_c * k * k};
    kern::PackedWeights pw = kern::pack_weights(w.data(), oc, cs.K);

    Tensor out = dims.batched ? Tensor::zeros({dims.batch, oc, dims.H, dims.W})
                              : Tensor::zeros({oc, dims.H, dims.W});

    std::size_t hw = static_cast<std::size_t>(dims.H) * dims.W;
    std::size_t in_stride_mul = hw;  // per-channel plane stride
    const float* bias = b.data();

    // flattened (sample, row) tasks; every output row has exactly one writer
    int tasks = dims.batch * dims.H;
#pragma omp parallel for schedule(static)
    for (int t = 0; t < tasks; ++t) {
        int sample = t / dims.H, y = t % dims.H;
        const float* groups[16];
        for (int g = 0; g < ngroups; ++g)
            groups[g] = xs[g].data() + static_cast<std::size_t>(sample) * gch[g] * in_stride_mul;
        float* out_base = out.data() + static_cast<std::size_t>(sample) * oc * hw;
        detail::tl_panel.resize(static_cast<std::size_t>(cs.K) * kern::kLanes);
        kern::conv_row_forward(groups, gch.data(), ngroups, cs, y, pw, bias, fuse_relu, out_base,
                               detail::tl_panel.data());
    }

    std::vector<Tensor> node_inputs(xs.begin(), xs.end());
    node_inputs.push_back(w);
    node_inputs.push_back(b);
    Tensor w_cap = w, b_cap = b;
    std::vector<Tensor> xs_cap(xs.begin(), xs.end());
    attach_node(out, node_inputs, [xs_cap, w_cap, b_cap, dims, gch, cs, pw, oc, fuse_relu,
                                   ngroups](const TensorImpl& o) mutable {
        std::size_t hw = static_cast<std::size_t>(dims.H) * dims.W;
        std::size_t out_sample = static_cast<std::size_t>(oc) * hw;

        // effective upstream gradient: mask by the fused activation if any
        const std::vector<float>* dout_all = &o.grad;
        std::vector<float> masked;
        if (fuse_relu) {
            masked.resize(o.grad.size());
            const float* ov = o.value.data();
            const float* og = o.grad.data();
            float* m = masked.data();
#pragma omp parallel for schedule(static)
            for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(masked.size()); ++i)
                m[i] = ov[i] > 0.0f ? og[i] : 0.0f;
            dout_all = &masked;
        }

        bool need_w = w_cap.requires_grad();
        bool need_b = b_cap.requires_grad();
        bool group_needs[16];
        bool any_x = false;
        for (int g = 0; g < ngroups; ++g) {
            group_needs[g] = xs_cap[g].requires_grad();
            any_x = any_x || group_needs[g];
        }
        for (int g = 0; g < ngroups; ++g)
            if (group_needs[g]) xs_cap[g].grad();  // allocate before the parallel region

        int blocks = (oc + kern::kLanes - 1) / kern::kLanes;
        std::size_t dwT_size = static_cast<std::size_t>(blocks) * cs.K * kern::kLanes;
        std::vector<std::vector<float>> dwT_per_sample;
        std::vector<std::vector<float>> dbias_per_sample;
        if (need_w || need_b) {
            dwT_per_sample.assign(dims.batch, std::vector<float>(dwT_size, 0.0f));
            dbias_per_sample.assign(dims.batch, std::vector<float>(oc, 0.0f));
        }

        // one thread owns one sample: scatter-adds stay race-free
#pragma omp parallel for schedule(static)
        for (int sample = 0; sample < dims.batch; ++sample) {
            const float* dout = dout_all->data() + static_cast<std::size_t>(sample) * out_sample;
            const float* groups[16];
            float* dgroups[16];
            for (int g = 0; g < ngroups; ++g) {
                std::size_t off = static_cast<std::size_t>(sample) * gch[g] * hw;
                groups[g] = xs_cap[g].data() + off;
                dgroups[g] = group_needs[g] ? xs_cap[g].grad() + off : nullptr;
            }
            detail::tl_panel.resize(static_cast<std::size_t>(cs.K) * kern::kLanes);
            detail::tl_dcols.resize(static_cast<std::size_t>(cs.K) * kern::kLanes);
            kern::conv_sample_backward(
                groups, gch.data(), ngroups, dout, pw, cs, dgroups, group_needs, any_x,
                need_w, need_w ? dwT_per_sample[sample].data() : nullptr,
                (need_w || need_b) ? dbias_per_sample[sample].data() : nullptr,
                detail::tl_panel.data(), detail::tl_dcols.data());
        }

        if (need_w) {
            float* dw = w_cap.grad();
            for (int s = 0; s < dims.batch; ++s)
                kern::fold_dwT(dwT_per_sample[s].data(), oc, cs.K, dw);
        }
        if (need_b) {
            float* db = b_cap.grad();
            for (int s = 0; s < dims.batch; ++s)
                for (int o2 = 0; o2 < oc; ++o2) db[o2] += dbias_per_sample[s][o2];
        }
    });
    return out;
}

inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b) {
    const Tensor xs[1] = {x};
    return conv2d_group(std::span<const Tensor>(xs, 1), w, b, false);
}

inline Tensor relu(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    const float* src = x.data();
    float* dst = out.data();
    std::size_t n = x.numel();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
        dst[i] = src[i] > 0.0f ? src[i] : 0.0f;
    Tensor x_cap = x;
    attach_node(out, {x}, [x_cap](const TensorImpl& o) mutable {
        float* dx = x_cap.grad();
        std::size_t n = o.grad.size();
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
            if (o.value[i] > 0.0f) dx[i] += o.grad[i];
    });
    return out;
}

inline Tensor concat_channels(std::span<const Tensor> xs) {
    detail::ConvDims dims = detail::group_dims(xs);
    Tensor out = dims.batched ? Tensor::zeros({dims.batch, dims.total_c, dims.H, dims.W})
                              : Tensor::zeros({dims.total_c, dims.H, dims.W});
    std::size_t hw = static_cast<std::size_t>(dims.H) * dims.W;
    std::size_t out_sample = static_cast<std::size_t>(dims.total_c) * hw;
    std::size_t coff = 0;
    for (const Tensor& x : xs) {
        int c = x.dim(dims.batched ? 1 : 0);
        for (int s = 0; s < dims.batch; ++s)
            std::memcpy(out.data() + s * out_sample + coff * hw,
                        x.data() + static_cast<std::size_t>(s) * c * hw,
                        static_cast<std::size_t>(c) * hw * sizeof(float));
        coff += static_cast<std::size_t>(c);
    }
    std::vector<Tensor> xs_cap(xs.begin(), xs.end());
    attach_node(out, xs_cap, [xs_cap, dims, hw, out_sample](const TensorImpl& o) mutable {
        std::size_t coff = 0;
        for (Tensor& x : xs_cap) {
            int c = x.shape()[dims.batched ? 1 : 0];
            if (x.requires_grad()) {
                float* dx = x.grad();
                for (int s = 0; s < dims.batch; ++s) {
                    const float* src = o.grad.data() + s * out_sample + coff * hw;
                    float* dst = dx + static_cast<std::size_t>(s) * c * hw;
                    std::size_t n = static_cast<std::size_t>(c) * hw;
                    for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
                }
            }
            coff += static_cast<std::size_t>(c);
        }
    });
    return out;
}

inline Tensor add(const Tensor& a, const Tensor& c) {
    require(a.shape() == c.shape(), "add needs matching shapes");
    Tensor out = Tensor::zeros(a.shape());
    const float* pa = a.data();
    const float* pc = c.data();
    float* dst = out.data();
    std::size_t n = a.numel();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) dst[i] = pa[i] + pc[i];
    Tensor a_cap = a, c_cap = c;
    attach_node(out, {a, c}, [a_cap, c_cap](const TensorImpl& o) mutable {
        for (Tensor* t : {&a_cap, &c_cap}) {
            if (!t->requires_grad()) continue;
            float* dx = t->grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) dx[i] += o.grad[i];
        }
    });
    return out;
}

// depth-to-space: (r^2*C, H, W) -> (C, r*H, r*W)
inline Tensor pixel_shuffle(const Tensor& x, int r) {
    bool batched = x.rank() == 4;
    require(x.rank() == 3 || batched, "pixel_shuffle input must be (C,H,W) or (B,C,H,W)");
    int batch = batched ? x.dim(0) : 1;
    int c_in = x.dim(batched ? 1 : 0), h = x.dim(batched ? 2 : 1), w = x.dim(batched ? 3 : 2);
    require(r >= 1 && c_in % (r * r) == 0, "channels must be divisible by r^2");
    int c_out = c_in / (r * r);

    Tensor out = batched ? Tensor::zeros({batch, c_out, r * h, r * w})
                         : Tensor::zeros({c_out, r * h, r * w});
    std::size_t in_sample = static_cast<std::size_t>(c_in) * h * w;
    std::size_t out_sample = static_cast<std::size_t>(c_out) * (r * h) * (r * w);
    auto in_index = [=](int c, int y, int x2) {
        // out(c, y, x) <- in(c*r^2 + (y%r)*r + x%r, y/r, x/r)
        int ch = c * r * r + (y % r) * r + (x2 % r);
        return (static_cast<std::size_t>(ch) * h + static_cast<std::size_t>(y / r)) * w + x2 / r;
    };
    for (int s = 0; s < batch; ++s) {
        const float* src = x.data() + s * in_sample;
        float* dst = out.data() + s * out_sample;
#pragma omp parallel for schedule(static)
        for (int c = 0; c < c_out; ++c)
            for (int y = 0; y < r * h; ++y)
                for (int x2 = 0; x2 < r * w; ++x2)
                    dst[(static_cast<std::size_t>(c) * (r * h) + y) * (r * w) + x2] =
                        src[in_index(c, y, x2)];
    }
    Tensor x_cap = x;
    attach_node(out, {x}, [x_cap, batch, c_out, r, h, w, in_sample, out_sample,
                           in_index](const TensorImpl& o) mutable {
        float* dx = x_cap.grad();
        for (int s = 0; s < batch; ++s) {
            const float* src = o.grad.data() + s * out_sample;
            float* dst = dx + s * in_sample;
            for (int c = 0; c < c_out; ++c)
                for (int y = 0; y < r * h; ++y)
                    for (int x2 = 0; x2 < r * w; ++x2)
                        dst[in_index(c, y, x2)] +=
                            src[(static_cast<std::size_t>(c) * (r * h) + y) * (r * w) + x2];
        }
    });
    return out;
}

namespace detail {

template <bool kSquared>
inline Tensor reduction_loss(const Tensor& pred, const Tensor& target) {
    require(pred.shape() == target.shape(), "loss needs matching shapes");
    std::size_t n = pred.numel();
    double acc = 0.0;
    const float* p = pred.data();
    const float* t = target.data();
    for (std::size_t i = 0; i < n; ++i) {
        double d = static_cast<double>(p[i]) - static_cast<double>(t[i]);
        acc += kSquared ? d * d : std::abs(d);
    }
    Tensor out = Tensor::from({static_cast<float>(acc / static_cast<double>(n))}, {1});
    Tensor p_cap = pred, t_cap = target;
    attach_node(out, {pred, target}, [p_cap, t_cap, n](const TensorImpl& o) mutable {
        float g = o.grad[0] / static_cast<float>(n);
        const float* p = p_cap.data();
        const float* t = t_cap.data();
        float* dp = p_cap.requires_grad() ? p_cap.grad() : nullptr;
        float* dt = t_cap.requires_grad() ? t_cap.grad() : nullptr;
        for (std::size_t i = 0; i < n; ++i) {
            float d = p[i] - t[i];
            float gi;
            if constexpr (kSquared)
                gi = 2.0f * d * g;
            else
                gi = d > 0.0f ? g : (d < 0.0f ? -g : 0.0f);
            if (dp) dp[i] += gi;
            if (dt) dt[i] -= gi;
        }
    });
    return out;
}

}  // namespace detail

// mean absolute error
inline Tensor l1_loss(const Tensor& pred, const Tensor& target) {
    return detail::reduction_loss<false>(pred, target);
}

// mean squared error
inline Tensor l2_loss(const Tensor& pred, const Tensor& target) {
    return detail::reduction_loss<true>(pred, target);
}

}  // namespace miot::nn
