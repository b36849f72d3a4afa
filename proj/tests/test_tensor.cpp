// Copyright (C) 2026 paradiff contributors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "paradiff/adam.hpp"
#include "paradiff/error.hpp"
#include "paradiff/rng.hpp"
#include "paradiff/tensor.hpp"
#include "testutil.hpp"

using namespace paradiff;

TEST_CASE("matmul matches hand multiplication") {
    Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    Tensor b = Tensor::from_data({2, 2}, {5, 6, 7, 8});
    Tensor c = matmul(a, b);
    CHECK(c.data() == std::vector<double>{19, 22, 43, 50});
}

TEST_CASE("matmul identity and annihilator") {
    Rng rng(7);
    Tensor a = Tensor::randn({3, 3}, rng);
    Tensor eye = Tensor::from_data({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    CHECK(matmul(a, eye).data() == a.data());
    Tensor zero = Tensor::zeros({3, 4});
    Tensor annihilated = matmul(a, zero);
    for (double v : annihilated.data()) CHECK(v == 0.0);
}

TEST_CASE("matmul rejects mismatched inner extents") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({2, 2});
    CHECK_THROWS_AS(matmul(a, b), Error);
}

TEST_CASE("softmax oracle values") {
    Tensor x = Tensor::from_data({1, 2}, {0, 0});
    auto y = softmax(x, 1).data();
    CHECK(y[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(y[1] == doctest::Approx(0.5).epsilon(1e-12));

    Tensor logs = Tensor::from_data({1, 2}, {std::log(1.0), std::log(3.0)});
    auto p = softmax(logs, 1).data();
    CHECK(p[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("softmax shift invariance and simplex") {
    Rng rng(3);
    Tensor x = Tensor::randn({4, 6}, rng);
    std::vector<double> shifted = x.data();
    for (auto& v : shifted) v += 123.5;
    Tensor xs = Tensor::from_data({4, 6}, shifted);
    auto a = softmax(x, 1).data();
    auto b = softmax(xs, 1).data();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
    for (std::size_t r = 0; r < 4; ++r) {
        double sum = 0;
        for (std::size_t c = 0; c < 6; ++c) sum += a[r * 6 + c];
        CHECK(std::fabs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("layer_norm moments and affine shift") {
    Tensor gain = Tensor::full({2}, 1.0);
    Tensor bias = Tensor::zeros({2});
    Tensor x = Tensor::from_data({1, 2}, {1, 3});
    auto y = layer_norm(x, gain, bias).data();
    // mean 2, variance 1; epsilon pulls the magnitude slightly under 1
    CHECK(y[0] == doctest::Approx(-1.0).epsilon(1e-4));
    CHECK(y[1] == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(y[0] == -y[1]);

    Tensor constant = Tensor::full({1, 5}, 4.2);
    Tensor g5 = Tensor::full({5}, 1.0), b5 = Tensor::zeros({5});
    Tensor flat = layer_norm(constant, g5, b5);
    for (double v : flat.data()) CHECK(std::fabs(v) < 1e-10);

    Rng rng(11);
    Tensor arb = Tensor::randn({3, 5}, rng);
    Tensor bshift = Tensor::full({5}, 0.7);
    auto out = layer_norm(arb, g5, bshift).data();
    for (std::size_t r = 0; r < 3; ++r) {
        double mean = 0;
        for (std::size_t c = 0; c < 5; ++c) mean += out[r * 5 + c];
        mean /= 5;
        CHECK(mean == doctest::Approx(0.7).epsilon(1e-9));
    }
}

TEST_CASE("cross_entropy closed forms") {
    // confident correct prediction
    Tensor conf = Tensor::from_data({1, 4}, {100, 0, 0, 0});
    CHECK(cross_entropy(conf, {0}, -1).item() == doctest::Approx(0.0).epsilon(1e-12));
    // uniform logits over V=4
    Tensor uniform = Tensor::zeros({2, 4});
    CHECK(cross_entropy(uniform, {1, 3}, -1).item() ==
          doctest::Approx(std::log(4.0)).epsilon(1e-12));
    // every position ignored
    Tensor l = Tensor::zeros({2, 4});
    CHECK_THROWS_AS(cross_entropy(l, {9, 9}, 9), Error);
}

TEST_CASE("backward linear and quadratic oracles") {
    Tensor w = Tensor::from_data({1, 3}, {1, 2, 5}, true);
    {
        Tape tape;
        Tensor loss = sum_all(w);
        tape.backward(loss);
    }
    CHECK(w.grad() == std::vector<double>{1, 1, 1});

    Tensor w2 = Tensor::from_data({1, 2}, {1, 2}, true);
    {
        Tape tape;
        Tensor loss = sum_all(mul(w2, w2));
        tape.backward(loss);
    }
    CHECK(w2.grad() == std::vector<double>{2, 4});
}

TEST_CASE("backward requires a scalar on the active tape") {
    Tensor w = Tensor::from_data({2, 1}, {1, 2}, true);
    Tape tape;
    Tensor y = mul(w, w);
    CHECK_THROWS_AS(tape.backward(y), Error);
}

TEST_CASE("finite-difference gradcheck per op") {
    Rng rng(42);
    Tensor a = Tensor::randn({3, 4}, rng, 1.0, true);
    Tensor b = Tensor::randn({3, 4}, rng, 1.0, true);
    Tensor m = Tensor::randn({4, 5}, rng, 1.0, true);
    Tensor v = Tensor::randn({4}, rng, 1.0, true);
    Tensor gain = Tensor::randn({4}, rng, 0.3, true);
    Tensor bias = Tensor::randn({4}, rng, 0.3, true);

    SUBCASE("add/sub/mul/scale") {
        auto loss = [&]() { return sum_all(mul(add(a, b), sub(scale(a, 0.7), b))); };
        CHECK(testutil::max_grad_rel_error(loss, {a, b}) < 1e-4);
    }
    SUBCASE("matmul and transpose") {
        auto loss = [&]() { return sum_all(mul(matmul(a, m), matmul(a, m))); };
        CHECK(testutil::max_grad_rel_error(loss, {a, m}) < 1e-4);
        auto loss_t = [&]() { return sum_all(matmul(transpose(a), b)); };
        CHECK(testutil::max_grad_rel_error(loss_t, {a, b}) < 1e-4);
    }
    SUBCASE("matmul_bt") {
        auto loss = [&]() { return sum_all(mul(matmul_bt(a, b), matmul_bt(a, b))); };
        CHECK(testutil::max_grad_rel_error(loss, {a, b}) < 1e-4);
    }
    SUBCASE("softmax") {
        auto loss = [&]() {
            Tensor s = softmax(a, 1);
            return sum_all(mul(s, b));
        };
        CHECK(testutil::max_grad_rel_error(loss, {a}) < 1e-4);
    }
    SUBCASE("softmax axis 0") {
        auto loss = [&]() { return sum_all(mul(softmax(a, 0), b)); };
        CHECK(testutil::max_grad_rel_error(loss, {a}) < 1e-4);
    }
    SUBCASE("layer_norm") {
        auto loss = [&]() { return sum_all(mul(layer_norm(a, gain, bias), b)); };
        CHECK(testutil::max_grad_rel_error(loss, {a, gain, bias}) < 1e-4);
    }
    SUBCASE("gelu") {
        auto loss = [&]() { return sum_all(mul(gelu(a), b)); };
        CHECK(testutil::max_grad_rel_error(loss, {a}) < 1e-4);
    }
    SUBCASE("add_rowvec and mul_rows") {
        auto loss = [&]() {
            return sum_all(mul(mul_rows(add_rowvec(a, v), {0.5, 2.0, 1.5}), b));
        };
        CHECK(testutil::max_grad_rel_error(loss, {a, v}) < 1e-4);
    }
    SUBCASE("embedding_rows") {
        Tensor table = Tensor::randn({6, 4}, rng, 1.0, true);
        auto loss = [&]() { return sum_all(mul(embedding_rows(table, {1, 4, 1}), a)); };
        CHECK(testutil::max_grad_rel_error(loss, {table}) < 1e-4);
    }
    SUBCASE("slices and concat") {
        auto loss = [&]() {
            Tensor left = col_slice(a, 0, 2);
            Tensor right = col_slice(a, 2, 2);
            Tensor joined = concat_cols({right, left});
            return sum_all(mul(row_slice(joined, 1, 2), row_slice(b, 0, 2)));
        };
        CHECK(testutil::max_grad_rel_error(loss, {a}) < 1e-4);
    }
    SUBCASE("cross_entropy") {
        Tensor logits = Tensor::randn({3, 5}, rng, 1.0, true);
        auto loss = [&]() { return cross_entropy(logits, {2, 0, 4}, -1); };
        CHECK(testutil::max_grad_rel_error(loss, {logits}) < 1e-4);
        auto loss_ignore = [&]() { return cross_entropy(logits, {2, 0, 0}, 0); };
        CHECK(testutil::max_grad_rel_error(loss_ignore, {logits}) < 1e-4);
    }
}

TEST_CASE("no operation emits NaN silently") {
    Tensor big = Tensor::full({1, 2}, 1e308);
    CHECK_THROWS_AS(add(big, big), Error);
    CHECK_THROWS_AS(mul(big, big), Error);
}

TEST_CASE("determinism: same seed, same results") {
    auto run = [](std::uint64_t seed) {
        Rng rng(seed);
        Tensor a = Tensor::randn({4, 4}, rng, 1.0, true);
        Tensor b = Tensor::randn({4, 4}, rng);
        Tape tape;
        Tensor loss = sum_all(mul(matmul(a, b), gelu(a)));
        tape.backward(loss);
        auto out = a.grad();
        out.push_back(loss.item());
        return out;
    };
    CHECK(run(123) == run(123));
    CHECK(run(123) != run(124));
}

TEST_CASE("adam first step and zero-gradient fixed point") {
    NamedTensors params;
    params["w"] = Tensor::from_data({1}, {1.0}, true);
    AdamConfig cfg;
    cfg.lr = 0.1;
    AdamState adam(cfg);

    SUBCASE("zero gradient leaves parameters unchanged") {
        params["w"].grad_buffer()[0] = 0.0;
        adam.step(params);
        CHECK(params["w"].data()[0] == 1.0);
        CHECK(adam.step_count() == 1);
    }
    SUBCASE("first step with unit gradient moves by about -lr") {
        params["w"].grad_buffer()[0] = 1.0;
        adam.step(params);
        // bias correction makes mhat/sqrt(vhat) exactly 1 up to eps
        CHECK(params["w"].data()[0] == doctest::Approx(1.0 - 0.1).epsilon(1e-7));
        CHECK(params["w"].data()[0] > 0.899999);
    }
    SUBCASE("two identical gradients keep the step bounded") {
        params["w"].grad_buffer()[0] = 1.0;
        adam.step(params);
        double d1 = std::fabs(1.0 - params["w"].data()[0]);
        double before = params["w"].data()[0];
        params["w"].zero_grad();
        params["w"].grad_buffer()[0] = 1.0;
        adam.step(params);
        double d2 = std::fabs(before - params["w"].data()[0]);
        CHECK(d2 <= d1 * 1.0001);
    }
    SUBCASE("nan gradient refuses the step") {
        params["w"].grad_buffer()[0] = std::nan("");
        CHECK_THROWS_AS(adam.step(params), Error);
        CHECK(params["w"].data()[0] == 1.0);
        CHECK(adam.step_count() == 0);
    }
}

TEST_CASE("gradient accumulates across repeated use") {
    Tensor w = Tensor::from_data({1, 2}, {3, 4}, true);
    {
        Tape tape;
        Tensor loss = add(sum_all(w), sum_all(w));
        tape.backward(loss);
    }
    CHECK(w.grad() == std::vector<double>{2, 2});
}
