#pragma once

// Reverse-mode autodiff over dense float tensors. Tensors are cheap handles
// onto shared storage; every op that sees a grad-requiring input records a
// node holding its inputs and a backward closure. backward() walks the
// recorded graph in reverse topological order and accumulates gradients
// additively, so fan-out just works.

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "miot/common.hpp"

namespace miot::nn {

struct TensorImpl;

struct OpNode {
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    // reads out.grad, accumulates into inputs' grads
    std::function<void(const TensorImpl& out)> backward;
};

struct TensorImpl {
    std::vector<int> shape;
    std::vector<float> value;
    std::vector<float> grad;  // allocated on first use
    bool requires_grad = false;
    std::unique_ptr<OpNode> producer;

    std::size_t numel() const {
        std::size_t n = 1;
        for (int d : shape) n *= static_cast<std::size_t>(d);
        return n;
    }

    float* grad_data() {
        if (grad.empty()) grad.assign(value.size(), 0.0f);
        return grad.data();
    }
};

class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
        Tensor t;
        t.impl_ = std::make_shared<TensorImpl>();
        t.impl_->shape = std::move(shape);
        t.impl_->value.assign(t.impl_->numel(), 0.0f);
        t.impl_->requires_grad = requires_grad;
        return t;
    }

    static Tensor from(std::vector<float> data, std::vector<int> shape,
                       bool requires_grad = false) {
        Tensor t;
        t.impl_ = std::make_shared<TensorImpl>();
        t.impl_->shape = std::move(shape);
        t.impl_->value = std::move(data);
        require(t.impl_->value.size() == t.impl_->numel(), "data length must match shape");
        t.impl_->requires_grad = requires_grad;
        return t;
    }

    bool defined() const { return impl_ != nullptr; }
    const std::vector<int>& shape() const { return impl_->shape; }
    int dim(int i) const { return impl_->shape[static_cast<std::size_t>(i)]; }
    int rank() const { return static_cast<int>(impl_->shape.size()); }
    std::size_t numel() const { return impl_->numel(); }
    bool requires_grad() const { return impl_->requires_grad; }

    float* data() { return impl_->value.data(); }
    const float* data() const { return impl_->value.data(); }
    std::vector<float>& values() { return impl_->value; }
    const std::vector<float>& values() const { return impl_->value; }

    float* grad() { return impl_->grad_data(); }
    const std::vector<float>& grad_values() const { return impl_->grad; }
    bool has_grad() const { return !impl_->grad.empty(); }

    void zero_grad() {
        if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f);
    }

    std::shared_ptr<TensorImpl> impl() const { return impl_; }
    TensorImpl& raw() { return *impl_; }
    const TensorImpl& raw() const { return *impl_; }

  private:
    std::shared_ptr<TensorImpl> impl_;
};

// Graph recording can be suspended for pure inference; activations then die
// as soon as their handles go out of scope.
inline thread_local bool g_grad_enabled = true;

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(g_grad_enabled) { g_grad_enabled = false; }
    ~NoGradGuard() { g_grad_enabled = prev; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Attach a producer node when any input carries gradient demand.
inline void attach_node(Tensor& out, std::vector<Tensor> inputs,
                        std::function<void(const TensorImpl&)> backward) {
    if (!g_grad_enabled) return;
    bool need = false;
    for (const Tensor& t : inputs) need = need || t.requires_grad();
    if (!need) return;
    out.raw().requires_grad = true;
    auto node = std::make_unique<OpNode>();
    node->inputs.reserve(inputs.size());
    for (Tensor& t : inputs) node->inputs.push_back(t.impl());
    node->backward = std::move(backward);
    out.raw().producer = std::move(node);
}

// Reverse-topological gradient accumulation from a scalar loss.
inline void backward(Tensor& loss) {
    require(loss.numel() == 1, "backward starts from a scalar loss");
    require(loss.raw().producer != nullptr || loss.requires_grad(),
            "loss is not connected to any graph");

    // iterative post-order DFS
    std::vector<TensorImpl*> order;
    std::unordered_set<TensorImpl*> seen;
    std::vector<std::pair<TensorImpl*, std::size_t>> stack;
    stack.emplace_back(loss.impl().get(), 0);
    seen.insert(loss.impl().get());
    while (!stack.empty()) {
        auto& [node, child] = stack.back();
        if (node->producer && child < node->producer->inputs.size()) {
            TensorImpl* next = node->producer->inputs[child++].get();
            if (next->producer && !seen.count(next)) {
                seen.insert(next);
                stack.emplace_back(next, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss.grad()[0] = 1.0f;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl* node = *it;
        if (node->producer && !node->grad.empty()) node->producer->backward(*node);
    }
}

}  // namespace miot::nn
