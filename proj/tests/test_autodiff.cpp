#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "tilematte/autodiff.hpp"
#include "tilematte/rng.hpp"

using namespace tilematte;

namespace {

using GraphFn = std::function<ad::Value(ad::Tape&, std::vector<ad::Value>&)>;

double eval_scalar(const GraphFn& f, const std::vector<Tensor>& inputs) {
    ad::Tape t;
    std::vector<ad::Value> leaves;
    for (const auto& x : inputs) leaves.push_back(t.parameter(x, "x"));
    return f(t, leaves)->value[0];
}

// central-difference check of every coordinate of every input
void gradcheck(const GraphFn& f, std::vector<Tensor> inputs, double tol = 2e-6) {
    ad::Tape t;
    std::vector<ad::Value> leaves;
    for (const auto& x : inputs) leaves.push_back(t.parameter(x, "x"));
    ad::Value loss = f(t, leaves);
    t.backward(loss);

    const double h = 1e-5;
    for (size_t k = 0; k < inputs.size(); ++k) {
        const Tensor analytic =
            leaves[k]->has_grad ? leaves[k]->grad : Tensor::zeros(inputs[k].shape());
        for (std::int64_t i = 0; i < inputs[k].size(); ++i) {
            auto plus = inputs;
            auto minus = inputs;
            plus[k][i] += h;
            minus[k][i] -= h;
            double num = (eval_scalar(f, plus) - eval_scalar(f, minus)) / (2.0 * h);
            double scale = std::max({1.0, std::fabs(num), std::fabs(analytic[i])});
            CHECK(std::fabs(num - analytic[i]) <= tol * scale);
        }
    }
}

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// reduce any node to a scalar through fixed random weights so every output
// coordinate carries a distinct gradient
ad::Value reduce(ad::Tape& t, const ad::Value& x, std::uint64_t seed = 99) {
    Rng rng(seed);
    Tensor w(x->value.shape());
    for (std::int64_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-1.0, 1.0);
    return ad::weighted_sum(t, x, w);
}

} // namespace

TEST_SUITE_BEGIN("autodiff");

TEST_CASE("elementwise ops match finite differences") {
    Rng rng(1);
    Tensor a = random_tensor({2, 3}, rng), b = random_tensor({2, 3}, rng);
    gradcheck([](ad::Tape& t, std::vector<ad::Value>& v) {
        return reduce(t, ad::add(t, v[0], v[1]));
    }, {a, b});
    gradcheck([](ad::Tape& t, std::vector<ad::Value>& v) {
        return reduce(t, ad::sub(t, v[0], v[1]));
    }, {a, b});
    gradcheck([](ad::Tape& t, std::vector<ad::Value>& v) {
        return reduce(t, ad::mul(t, v[0], v[1]));
    }, {a, b});
    gradcheck([](ad::Tape& t, std::vector<ad::Value>& v) {
        return reduce(t, ad::scale(t, ad::add_scalar(t, v[0], 0.3), -1.7));
    }, {a});
    gradcheck([](ad::Tape& t, std::vector<ad::Value>& v) {
        return reduce(t, ad::sigmoid(t, v[0]));
    }, {a});
    // keep activations away from the relu kink
    Tensor far = random_tensor({3, 3}, rng);
    for (std::int64_t i = 0; i < far.size(); ++i) far[i] += far[i] > 0 ? 0.5 : -0.5;
    gradcheck([](ad::Tape& t, std::vector<ad::Value>& v) {
        return reduce(t, ad::relu(t, v[0]));
    }, {far});
    Tensor pos = random_tensor({2, 2}, rng, 0.2, 2.0);
    gradcheck([](ad::Tape& t, std::vector<ad::Value>& v) {
        return reduce(t, ad::sqrt_shift(t, v[0], 1e-3));
    }, {pos});
}

TEST_CASE("matmul, transpose and softmax match finite differences") {
    Rng rng(2);
    Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
    gradcheck([](ad::Tape& t, std::vector<ad::Value>& v) {
        return reduce(t, ad::matmul(t, v[0], v[1]));
    }, {a, b});
    gradcheck([](ad::Tape& t, std::vector<ad::Value>& v) {
        return reduce(t, ad::transpose(t, v[0]));
    }, {a});
    gradcheck([](ad::Tape& t, std::vector<ad::Value>& v) {
        return reduce(t, ad::softmax_rows(t, v[0]));
    }, {random_tensor({3, 5}, rng, -2.0, 2.0)});
}

TEST_CASE("softmax rows sum to one and are shift invariant") {
    Rng rng(3);
    Tensor a = random_tensor({4, 6}, rng, -3.0, 3.0);
    Tensor out;
    ad::softmax_rows_forward(a, out);
    for (int i = 0; i < 4; ++i) {
        double s = 0.0;
        for (int j = 0; j < 6; ++j) s += out.at2(i, j);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
    Tensor shifted = a;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 6; ++j) shifted.at2(i, j) += 7.5;
    Tensor out2;
    ad::softmax_rows_forward(shifted, out2);
    for (std::int64_t i = 0; i < out.size(); ++i)
        CHECK(out2[i] == doctest::Approx(out[i]).epsilon(1e-12));
}

TEST_CASE("conv2d matches finite differences, including dilation") {
    Rng rng(4);
    Tensor x = random_tensor({2, 6, 5}, rng);
    Tensor w = random_tensor({3, 2, 3, 3}, rng);
    Tensor b = random_tensor({3}, rng);
    for (int dilation : {1, 2}) {
        gradcheck([dilation](ad::Tape& t, std::vector<ad::Value>& v) {
            return reduce(t, ad::conv2d(t, v[0], v[1], v[2], dilation));
        }, {x, w, b});
    }
    // 1x1 kernel
    Tensor w1 = random_tensor({2, 2, 1, 1}, rng);
    Tensor b1 = random_tensor({2}, rng);
    gradcheck([](ad::Tape& t, std::vector<ad::Value>& v) {
        return reduce(t, ad::conv2d(t, v[0], v[1], v[2]));
    }, {x, w1, b1});
}

TEST_CASE("unpool places the value at the recorded index") {
    ad::Tape t;
    Tensor x({1, 1, 1}, {5.0});
    auto idx = std::make_shared<std::vector<int>>(std::vector<int>{1}); // (0,1) in a 2x2
    ad::Value out = ad::maxunpool2(t, t.constant(x), idx, 2, 2);
    CHECK(out->value[0] == 0.0);
    CHECK(out->value[1] == 5.0);
    CHECK(out->value[2] == 0.0);
    CHECK(out->value[3] == 0.0);
}

TEST_CASE("pool then unpool recovers a one-hot map exactly") {
    Rng rng(5);
    for (int iter = 0; iter < 5; ++iter) {
        Tensor x = Tensor::zeros({1, 4, 4});
        int hot = (int)rng.uniform_int(0, 15);
        x[hot] = 1.0;
        ad::Tape t;
        auto pooled = ad::maxpool2(t, t.constant(x));
        ad::Value back = ad::maxunpool2(t, pooled.out, pooled.indices, 4, 4);
        for (std::int64_t i = 0; i < x.size(); ++i) CHECK(back->value[i] == x[i]);
    }
}

TEST_CASE("maxpool gradients route to the argmax and match finite differences") {
    Rng rng(6);
    // keep entries well separated so the argmax never flips under +-h
    Tensor x({1, 4, 4});
    std::vector<int> perm(16);
    for (int i = 0; i < 16; ++i) perm[(size_t)i] = i;
    for (int i = 15; i > 0; --i) std::swap(perm[(size_t)i], perm[(size_t)rng.uniform_int(0, i)]);
    for (int i = 0; i < 16; ++i) x[i] = perm[(size_t)i] * 0.25;
    gradcheck([](ad::Tape& t, std::vector<ad::Value>& v) {
        auto pooled = ad::maxpool2(t, v[0]);
        return reduce(t, ad::maxunpool2(t, pooled.out, pooled.indices, 4, 4));
    }, {x});
}

TEST_CASE("layout ops match finite differences") {
    Rng rng(7);
    Tensor a = random_tensor({2, 3, 3}, rng), b = random_tensor({1, 3, 3}, rng);
    gradcheck([](ad::Tape& t, std::vector<ad::Value>& v) {
        return reduce(t, ad::concat_ch(t, {v[0], v[1]}));
    }, {a, b});
    gradcheck([](ad::Tape& t, std::vector<ad::Value>& v) {
        return reduce(t, ad::channel_sum(t, v[0]));
    }, {a});
    gradcheck([](ad::Tape& t, std::vector<ad::Value>& v) {
        return reduce(t, ad::repeat_ch(t, v[0], 3));
    }, {b});
    gradcheck([](ad::Tape& t, std::vector<ad::Value>& v) {
        return reduce(t, ad::gather_rows(t, v[0], {0, 4, 7}));
    }, {a});
    Tensor rows = random_tensor({3, 2}, rng), rows2 = random_tensor({2, 2}, rng);
    gradcheck([](ad::Tape& t, std::vector<ad::Value>& v) {
        return reduce(t, ad::concat_rows(t, {v[0], v[1]}));
    }, {rows, rows2});
    gradcheck([](ad::Tape& t, std::vector<ad::Value>& v) {
        return reduce(t, ad::scatter_rows(t, v[0], {1, 5, 6}, 3, 3));
    }, {rows});
    gradcheck([](ad::Tape& t, std::vector<ad::Value>& v) {
        return ad::sum_all(t, ad::mul(t, v[0], v[0]));
    }, {a});
}

TEST_CASE("constant loss has zero gradients") {
    ad::Tape t;
    Rng rng(8);
    ad::Value p = t.parameter(random_tensor({3}, rng), "p");
    ad::Value c = t.constant(Tensor({1}, {2.5}));
    ad::Value loss = ad::scale(t, c, 2.0); // independent of p
    t.backward(loss);
    CHECK_FALSE(p->has_grad);
}

TEST_CASE("single linear layer has the closed-form gradient") {
    // loss = (w*x - y)^2, dL/dw = 2*x*(w*x - y)
    double w = 0.7, x = 1.3, y = -0.4;
    ad::Tape t;
    ad::Value wv = t.parameter(Tensor({1}, {w}), "w");
    ad::Value pred = ad::scale(t, wv, x);
    ad::Value diff = ad::add_scalar(t, pred, -y);
    ad::Value loss = ad::mul(t, diff, diff);
    t.backward(loss);
    CHECK(wv->grad[0] == doctest::Approx(2.0 * x * (w * x - y)).epsilon(1e-12));
}

TEST_SUITE_END();
