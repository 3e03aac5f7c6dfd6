#include <catch2/catch_amalgamated.hpp>

#include "miot/common.hpp"
#include "miot/nn/adam.hpp"
#include "miot/nn/ops.hpp"
#include "gradcheck.hpp"
#include "ref_ops.hpp"

using namespace miot;
using namespace miot::nn;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, bool grad, float scale = 1.0f) {
    Tensor t = Tensor::zeros(std::move(shape), grad);
    for (auto& v : t.values()) v = static_cast<float>(scale * (rng.unit() * 2.0 - 1.0));
    return t;
}

refop::Vec to_vec(const Tensor& t) {
    return refop::Vec(t.values().begin(), t.values().end());
}

}  // namespace

TEST_CASE("conv2d trivial kernels") {
    SECTION("1x1 identity") {
        Rng rng(1);
        Tensor x = random_tensor({1, 4, 5}, rng, false);
        Tensor w = Tensor::from({1.0f}, {1, 1, 1, 1});
        Tensor b = Tensor::zeros({1});
        Tensor y = conv2d(x, w, b);
        REQUIRE(y.shape() == x.shape());
        for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);
    }
    SECTION("3x3 zero weights give constant bias") {
        Rng rng(2);
        Tensor x = random_tensor({2, 6, 7}, rng, false);
        Tensor w = Tensor::zeros({3, 2, 3, 3});
        Tensor b = Tensor::from({0.5f, -1.0f, 2.0f}, {3});
        Tensor y = conv2d(x, w, b);
        for (int c = 0; c < 3; ++c)
            for (int i = 0; i < 42; ++i) CHECK(y.data()[c * 42 + i] == b.data()[c]);
    }
    SECTION("channel mismatch rejected") {
        Tensor x = Tensor::zeros({2, 4, 4});
        Tensor w = Tensor::zeros({1, 3, 3, 3});
        Tensor b = Tensor::zeros({1});
        CHECK_THROWS_AS(conv2d(x, w, b), contract_error);
    }
}

TEST_CASE("conv2d forward matches the naive double reference") {
    Rng rng(7);
    int C = 5, H = 9, W = 21, OC = 19;  // odd W exercises partial panels
    Tensor x = random_tensor({C, H, W}, rng, false);
    Tensor w = random_tensor({OC, C, 3, 3}, rng, false, 0.3f);
    Tensor b = random_tensor({OC}, rng, false, 0.1f);
    Tensor y = conv2d(x, w, b);
    refop::Vec ref = refop::conv2d(to_vec(x), C, H, W, to_vec(w), OC, 3, to_vec(b));
    for (std::size_t i = 0; i < ref.size(); ++i)
        CHECK(std::abs(y.data()[i] - ref[i]) < 1e-4);
}

TEST_CASE("conv2d gradients match finite differences") {
    Rng rng(11);
    int B = 2, C = 3, H = 5, W = 5, OC = 4;
    Tensor x = random_tensor({B, C, H, W}, rng, true);
    Tensor w = random_tensor({OC, C, 3, 3}, rng, true, 0.5f);
    Tensor b = random_tensor({OC}, rng, true, 0.2f);
    Tensor target = random_tensor({B, OC, H, W}, rng, false);

    Tensor loss = l2_loss(conv2d(x, w, b), target);
    backward(loss);

    refop::Vec tvec = to_vec(target);
    auto f = [&](const std::vector<refop::Vec>& p) {
        const auto& xs = p[0];
        refop::Vec out;
        for (int s = 0; s < B; ++s) {
            refop::Vec xi(xs.begin() + s * C * H * W, xs.begin() + (s + 1) * C * H * W);
            refop::Vec oi = refop::conv2d(xi, C, H, W, p[1], OC, 3, p[2]);
            out.insert(out.end(), oi.begin(), oi.end());
        }
        return refop::l2(out, tvec);
    };
    CHECK(gradcheck::max_rel_error({x, w, b}, f) <= 1e-4);
}

TEST_CASE("1x1 conv gradients match finite differences") {
    Rng rng(13);
    int C = 6, H = 4, W = 7, OC = 3;
    Tensor x = random_tensor({C, H, W}, rng, true);
    Tensor w = random_tensor({OC, C, 1, 1}, rng, true, 0.5f);
    Tensor b = random_tensor({OC}, rng, true, 0.2f);
    Tensor target = random_tensor({OC, H, W}, rng, false);
    Tensor loss = l2_loss(conv2d(x, w, b), target);
    backward(loss);
    refop::Vec tvec = to_vec(target);
    auto f = [&](const std::vector<refop::Vec>& p) {
        return refop::l2(refop::conv2d(p[0], C, H, W, p[1], OC, 1, p[2]), tvec);
    };
    CHECK(gradcheck::max_rel_error({x, w, b}, f) <= 1e-4);
}

TEST_CASE("grouped conv equals conv over concatenated inputs") {
    Rng rng(17);
    int H = 6, W = 18;
    Tensor a = random_tensor({3, H, W}, rng, true);
    Tensor c = random_tensor({5, H, W}, rng, true);
    Tensor w = random_tensor({16, 8, 3, 3}, rng, true, 0.3f);
    Tensor b = random_tensor({16}, rng, true, 0.1f);

    const Tensor group[2] = {a, c};
    Tensor fused = conv2d_group(std::span<const Tensor>(group, 2), w, b, true);
    Tensor cat = concat_channels(std::span<const Tensor>(group, 2));
    Tensor plain = relu(conv2d(cat, w, b));

    REQUIRE(fused.shape() == plain.shape());
    for (std::size_t i = 0; i < fused.numel(); ++i)
        CHECK(fused.data()[i] == Catch::Approx(plain.data()[i]).margin(1e-6));

    Tensor target = random_tensor({16, H, W}, rng, false);
    Tensor l1v = l2_loss(fused, target);
    backward(l1v);
    std::vector<float> ga(a.grad_values()), gw(w.grad_values());

    a.zero_grad();
    c.zero_grad();
    w.zero_grad();
    b.zero_grad();
    Tensor l2v = l2_loss(plain, target);
    backward(l2v);
    for (std::size_t i = 0; i < ga.size(); ++i)
        CHECK(ga[i] == Catch::Approx(a.grad_values()[i]).margin(1e-5));
    for (std::size_t i = 0; i < gw.size(); ++i)
        CHECK(gw[i] == Catch::Approx(w.grad_values()[i]).margin(1e-5));
}

TEST_CASE("relu forward and gradient") {
    Tensor x = Tensor::from({-1.0f, 0.0f, 2.0f}, {3, 1, 1}, true);
    Tensor y = relu(x);
    CHECK(y.data()[0] == 0.0f);
    CHECK(y.data()[1] == 0.0f);
    CHECK(y.data()[2] == 2.0f);

    SECTION("all-negative input blocks gradient flow") {
        Tensor neg = Tensor::from({-3.0f, -1.0f, -0.5f, -2.0f}, {4, 1, 1}, true);
        Tensor out = relu(neg);
        Tensor target = Tensor::zeros({4, 1, 1});
        Tensor loss = l2_loss(out, target);
        backward(loss);
        for (float g : neg.grad_values()) CHECK(g == 0.0f);
        for (float v : out.values()) CHECK(v == 0.0f);
    }
    SECTION("finite differences away from the kink") {
        Rng rng(23);
        Tensor in = Tensor::zeros({3, 4, 5}, true);
        for (auto& v : in.values()) {
            double u = rng.unit() * 1.9 - 0.95;
            v = static_cast<float>(u + (u >= 0 ? 0.1 : -0.1));  // keep |x| > 0.1
        }
        Tensor target = random_tensor({3, 4, 5}, rng, false, 2.0f);
        Tensor loss = l2_loss(relu(in), target);
        backward(loss);
        refop::Vec tvec = to_vec(target);
        auto f = [&](const std::vector<refop::Vec>& p) {
            return refop::l2(refop::relu(p[0]), tvec);
        };
        CHECK(gradcheck::max_rel_error({in}, f) <= 1e-4);
    }
}

TEST_CASE("concat and add semantics") {
    Rng rng(29);
    Tensor a = random_tensor({3, 4, 6}, rng, true);
    Tensor b = random_tensor({5, 4, 6}, rng, true);
    const Tensor group[2] = {a, b};
    Tensor cat = concat_channels(std::span<const Tensor>(group, 2));
    REQUIRE(cat.shape() == std::vector<int>{8, 4, 6});

    Tensor z = Tensor::zeros({3, 4, 6});
    Tensor same = add(a, z);
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(same.data()[i] == a.data()[i]);

    SECTION("add fan-in duplicates the upstream gradient") {
        Tensor c = random_tensor({3, 4, 6}, rng, true);
        Tensor s = add(a, c);
        Tensor target = random_tensor({3, 4, 6}, rng, false);
        Tensor loss = l2_loss(s, target);
        backward(loss);
        for (std::size_t i = 0; i < a.numel(); ++i)
            CHECK(a.grad_values()[i] == c.grad_values()[i]);
    }
    SECTION("shape mismatch rejected") {
        Tensor c = Tensor::zeros({2, 4, 6});
        CHECK_THROWS_AS(add(a, c), contract_error);
    }
    SECTION("concat gradient splits by channel") {
        Tensor target = random_tensor({8, 4, 6}, rng, false);
        Tensor loss = l2_loss(cat, target);
        backward(loss);
        refop::Vec tvec = to_vec(target);
        auto f = [&](const std::vector<refop::Vec>& p) {
            return refop::l2(refop::concat({&p[0], &p[1]}), tvec);
        };
        CHECK(gradcheck::max_rel_error({a, b}, f) <= 1e-4);
    }
}

TEST_CASE("gradient accumulation is additive on a diamond") {
    Rng rng(31);
    Tensor x = random_tensor({2, 3, 3}, rng, true, 0.8f);
    for (auto& v : x.values()) v += v >= 0 ? 0.2f : -0.2f;  // stay off the relu kink
    Tensor left = relu(x);
    Tensor right = add(x, x);  // fan-out of x twice more
    Tensor merged = add(left, right);
    Tensor target = random_tensor({2, 3, 3}, rng, false);
    Tensor loss = l2_loss(merged, target);
    backward(loss);
    refop::Vec tvec = to_vec(target);
    auto f = [&](const std::vector<refop::Vec>& p) {
        return refop::l2(refop::add(refop::relu(p[0]), refop::add(p[0], p[0])), tvec);
    };
    CHECK(gradcheck::max_rel_error({x}, f) <= 1e-4);
}

TEST_CASE("pixel_shuffle rearrangement") {
    Tensor x = Tensor::from({1.0f, 2.0f, 3.0f, 4.0f}, {4, 1, 1}, true);
    Tensor y = pixel_shuffle(x, 2);
    REQUIRE(y.shape() == std::vector<int>{1, 2, 2});
    CHECK(y.data()[0] == 1.0f);
    CHECK(y.data()[1] == 2.0f);
    CHECK(y.data()[2] == 3.0f);
    CHECK(y.data()[3] == 4.0f);

    SECTION("bijection restores input") {
        Rng rng(37);
        Tensor big = random_tensor({8, 3, 5}, rng, false);
        Tensor shuffled = pixel_shuffle(big, 2);
        // manual inverse of the rearrangement
        for (int c = 0; c < 8; ++c)
            for (int y2 = 0; y2 < 3; ++y2)
                for (int x2 = 0; x2 < 5; ++x2) {
                    int oc = c / 4, oy = y2 * 2 + (c % 4) / 2, ox = x2 * 2 + c % 2;
                    CHECK(big.data()[(c * 3 + y2) * 5 + x2] ==
                          shuffled.data()[(oc * 6 + oy) * 10 + ox]);
                }
    }
    SECTION("gradient check") {
        Rng rng(41);
        Tensor in = random_tensor({2, 8, 2, 3}, rng, true);
        Tensor target = random_tensor({2, 2, 4, 6}, rng, false);
        Tensor loss = l2_loss(pixel_shuffle(in, 2), target);
        backward(loss);
        refop::Vec tvec = to_vec(target);
        auto f = [&](const std::vector<refop::Vec>& p) {
            refop::Vec out;
            for (int s = 0; s < 2; ++s) {
                refop::Vec xi(p[0].begin() + s * 8 * 6, p[0].begin() + (s + 1) * 8 * 6);
                refop::Vec oi = refop::pixel_shuffle(xi, 2, 2, 3, 2);
                out.insert(out.end(), oi.begin(), oi.end());
            }
            return refop::l2(out, tvec);
        };
        CHECK(gradcheck::max_rel_error({in}, f) <= 1e-4);
    }
    SECTION("divisibility enforced") {
        Tensor in = Tensor::zeros({6, 2, 2});
        CHECK_THROWS_AS(pixel_shuffle(in, 2), contract_error);
    }
}

TEST_CASE("l1 loss values and gradient") {
    Rng rng(43);
    Tensor pred = random_tensor({3, 4, 4}, rng, true);
    CHECK(l1_loss(pred, pred).data()[0] == 0.0f);

    Tensor shifted = Tensor::zeros({3, 4, 4});
    for (std::size_t i = 0; i < pred.numel(); ++i) shifted.data()[i] = pred.data()[i] + 0.75f;
    CHECK(l1_loss(pred, shifted).data()[0] == Catch::Approx(0.75).margin(1e-6));

    SECTION("finite differences with a safe margin") {
        Tensor target = Tensor::zeros({3, 4, 4});
        for (std::size_t i = 0; i < pred.numel(); ++i)
            target.data()[i] = pred.data()[i] + (rng.unit() < 0.5 ? -1.0f : 1.0f) *
                                                    static_cast<float>(0.5 + rng.unit());
        Tensor loss = l1_loss(pred, target);
        backward(loss);
        refop::Vec tvec = to_vec(target);
        auto f = [&](const std::vector<refop::Vec>& p) { return refop::l1(p[0], tvec); };
        CHECK(gradcheck::max_rel_error({pred}, f) <= 1e-4);
    }
}

TEST_CASE("backward of a linear map gives the input exactly") {
    // loss = |w * x - t| with w*x > t, single element: d(loss)/dw = x
    Tensor x = Tensor::from({3.0f}, {1, 1, 1});
    Tensor w = Tensor::from({2.0f}, {1, 1, 1, 1}, true);
    Tensor b = Tensor::zeros({1});
    Tensor t = Tensor::from({1.0f}, {1, 1, 1});
    Tensor loss = l1_loss(conv2d(x, w, b), t);
    backward(loss);
    CHECK(w.grad_values()[0] == 3.0f);
}

TEST_CASE("backward requires a scalar") {
    Tensor x = Tensor::zeros({2, 2, 2}, true);
    Tensor y = relu(x);
    CHECK_THROWS_AS(backward(y), contract_error);
}

TEST_CASE("one Adam step descends") {
    // f(w) = w^2 from w=1, lr = 1e-4
    Tensor x = Tensor::from({1.0f}, {1, 1, 1});
    Tensor w = Tensor::from({1.0f}, {1, 1, 1, 1}, true);
    Tensor b = Tensor::zeros({1});
    Tensor t = Tensor::zeros({1, 1, 1});
    std::vector<Tensor> params{w};
    AdamState st(params, 1e-4f);
    Tensor loss = l2_loss(conv2d(x, w, b), t);
    backward(loss);
    adam_step(params, st);
    CHECK(w.data()[0] < 1.0f);
    CHECK(w.data()[0] > 0.99f);
}

TEST_CASE("Adam overfits a fixed batch") {
    Rng rng(47);
    Tensor x = random_tensor({8, 3, 8, 8}, rng, false);
    // learnable linear target: t = 0.5 * x + 0.1
    Tensor target = Tensor::zeros({8, 3, 8, 8});
    for (std::size_t i = 0; i < x.numel(); ++i) target.data()[i] = 0.5f * x.data()[i] + 0.1f;

    Tensor w1 = random_tensor({8, 3, 3, 3}, rng, true, 0.15f);
    Tensor b1 = Tensor::zeros({8}, true);
    Tensor w2 = random_tensor({3, 8, 3, 3}, rng, true, 0.15f);
    Tensor b2 = Tensor::zeros({3}, true);
    std::vector<Tensor> params{w1, b1, w2, b2};
    AdamState st(params, 2e-3f);

    double initial = 0.0, final_loss = 0.0;
    for (int step = 0; step < 500; ++step) {
        zero_grads(params);
        Tensor h = relu(conv2d(x, w1, b1));
        Tensor out = conv2d(h, w2, b2);
        Tensor loss = l1_loss(out, target);
        backward(loss);
        adam_step(params, st);
        if (step == 0) initial = loss.data()[0];
        if (step == 499) final_loss = loss.data()[0];
    }
    CHECK(final_loss < 0.3 * initial);
}

TEST_CASE("forward and backward are deterministic") {
    Rng rng(53);
    Tensor x = random_tensor({2, 4, 16, 16}, rng, true);
    Tensor w = random_tensor({8, 4, 3, 3}, rng, true, 0.3f);
    Tensor b = random_tensor({8}, rng, true, 0.1f);
    Tensor target = random_tensor({2, 8, 16, 16}, rng, false);

    auto run = [&](std::vector<float>& gw) {
        x.zero_grad();
        w.zero_grad();
        b.zero_grad();
        Tensor loss = l1_loss(relu(conv2d(x, w, b)), target);
        backward(loss);
        gw = w.grad_values();
        return loss.data()[0];
    };
    std::vector<float> g1, g2;
    float l1v = run(g1);
    float l2v = run(g2);
    CHECK(l1v == l2v);
    CHECK(g1 == g2);
}
