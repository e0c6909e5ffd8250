#include <omp.h>

#include <cmath>

#include "doctest.h"
#include "support.hpp"
#include "texmax/conv.hpp"
#include "texmax/error.hpp"
#include "texmax/gradcheck.hpp"
#include "texmax/pool.hpp"
#include "texmax/reference.hpp"

using namespace texmax;
using testing::random_conv;
using testing::random_tensor;

namespace {

ConvLayerSpec identity_1x1(std::size_t channels) {
    ConvLayerSpec l;
    l.in_channels = l.out_channels = channels;
    l.weights.assign(channels * channels, 0.0);
    for (std::size_t c = 0; c < channels; ++c) l.weights[c * channels + c] = 1.0;
    l.bias.assign(channels, 0.0);
    return l;
}

}  // namespace

TEST_CASE("conv2d: identity 1x1 kernel passes input and gradient through") {
    const Tensor3 x = random_tensor(5, 4, 3, 1);
    const ConvLayerSpec id = identity_1x1(3);
    CHECK(conv2d_forward(x, id) == x);
    const Tensor3 g = random_tensor(5, 4, 3, 2);
    CHECK(conv2d_backward(x, id, g) == g);
}

TEST_CASE("conv2d: zero input gives the bias everywhere") {
    ConvLayerSpec l = random_conv(2, 3, 3, 1, 1, Activation::linear, 5);
    const Tensor3 y = conv2d_forward(Tensor3(4, 4, 2), l);
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 4; ++c)
            for (std::size_t o = 0; o < 3; ++o) CHECK(y.at(r, c, o) == l.bias[o]);
}

TEST_CASE("conv2d: all-ones 3x3 on constant 5x5 gives 9 inside and 4 in corners") {
    ConvLayerSpec l;
    l.in_channels = l.out_channels = 1;
    l.kernel_h = l.kernel_w = 3;
    l.padding = 1;
    l.weights.assign(9, 1.0);
    l.bias.assign(1, 0.0);
    const Tensor3 y = conv2d_forward(Tensor3(5, 5, 1, 1.0), l);
    CHECK(y.at(2, 2, 0) == 9.0);
    CHECK(y.at(1, 3, 0) == 9.0);
    CHECK(y.at(0, 0, 0) == 4.0);
    CHECK(y.at(4, 4, 0) == 4.0);
    CHECK(y.at(0, 2, 0) == 6.0);
    CHECK(testing::max_abs_diff(y.values(), testing::conv_oracle(Tensor3(5, 5, 1, 1.0), l).values()) == 0.0);
}

TEST_CASE("conv2d: matches the loop oracle and the serial reference to 1e-12") {
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
        const std::size_t h = 3 + seed % 14, w = 4 + (seed * 7) % 13, cin = 1 + seed % 4;
        const std::size_t k = seed % 3 == 0 ? 1 : (seed % 3 == 1 ? 3 : 5);
        const std::size_t stride = 1 + seed % 2;
        const auto act = seed % 2 ? Activation::relu : Activation::linear;
        const ConvLayerSpec l = random_conv(cin, 3, k, stride, k / 2, act, seed + 100);
        const Tensor3 x = random_tensor(h, w, cin, seed);
        const Tensor3 y = conv2d_forward(x, l);
        const Tensor3 oracle = testing::conv_oracle(x, l);
        REQUIRE(y.same_shape(oracle));
        CHECK(testing::max_abs_diff(y.values(), oracle.values()) < 1e-12);
        CHECK(testing::max_abs_diff(y.values(), reference::conv2d_forward(x, l).values()) < 1e-12);

        const Tensor3 g = random_tensor(y.height(), y.width(), y.channels(), seed + 7);
        CHECK(testing::max_abs_diff(conv2d_backward(x, l, g).values(), reference::conv2d_backward(x, l, g).values()) <
              1e-12);
    }
}

TEST_CASE("conv2d: backward with zero cotangent is zero") {
    const ConvLayerSpec l = random_conv(2, 3, 3, 1, 1, Activation::relu, 3);
    const Tensor3 x = random_tensor(6, 6, 2, 4);
    const Tensor3 g(6, 6, 3);
    const Tensor3 grad = conv2d_backward(x, l, g);
    for (double v : grad.values()) CHECK(v == 0.0);
}

TEST_CASE("conv2d: backward matches central differences on a 4x4 input") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const ConvLayerSpec l = random_conv(2, 3, 3, 1, 1, Activation::linear, seed);
        const Tensor3 x = random_tensor(4, 4, 2, seed + 50);
        const Tensor3 g = random_tensor(4, 4, 3, seed + 90);
        const auto f = [&](const Tensor3& t) { return dot(g.values(), conv2d_forward(t, l).values()); };
        const GradcheckReport r = gradcheck(f, conv2d_backward(x, l, g), x);
        CHECK(r.max_relative_error < 1e-6);
        CHECK(r.checked == x.size());
    }
}

TEST_CASE("conv2d: relu subgradient at exactly zero is zero") {
    ConvLayerSpec l = identity_1x1(1);
    l.activation = Activation::relu;
    const Tensor3 x(1, 3, 1, std::vector<double>{-1.0, 0.0, 2.0});
    const Tensor3 g = conv2d_backward(x, l, Tensor3(1, 3, 1, 1.0));
    CHECK(g[0] == 0.0);
    CHECK(g[1] == 0.0);
    CHECK(g[2] == 1.0);
}

TEST_CASE("conv2d: shape and value errors") {
    const ConvLayerSpec l = random_conv(2, 3, 3, 1, 1, Activation::linear, 3);
    CHECK_THROWS_AS(conv2d_forward(Tensor3(4, 4, 3), l), ConfigError);
    CHECK_THROWS_AS(conv2d_backward(Tensor3(4, 4, 2), l, Tensor3(3, 4, 3)), ConfigError);
    ConvLayerSpec bad = l;
    bad.weights.pop_back();
    CHECK_THROWS_AS(conv2d_forward(Tensor3(4, 4, 2), bad), ConfigError);
    ConvLayerSpec even = random_conv(2, 3, 2, 1, 0, Activation::linear, 3);
    CHECK_THROWS_AS(validate(even), ConfigError);
    ConvLayerSpec no_fit = random_conv(1, 1, 5, 1, 0, Activation::linear, 3);
    CHECK_THROWS_AS(conv2d_forward(Tensor3(3, 3, 1), no_fit), ConfigError);
    Tensor3 nan_in(4, 4, 2);
    nan_in[5] = std::nan("");
    CHECK_THROWS_AS(conv2d_forward(nan_in, l), NumericError);
}

TEST_CASE("conv2d: OpenMP result is bitwise identical to a single thread") {
    const ConvLayerSpec l = random_conv(4, 8, 3, 1, 1, Activation::relu, 9);
    const Tensor3 x = random_tensor(16, 16, 4, 10);
    const Tensor3 g = random_tensor(16, 16, 8, 11);
    const int saved = omp_get_max_threads();
    omp_set_num_threads(1);
    const Tensor3 y1 = conv2d_forward(x, l), b1 = conv2d_backward(x, l, g);
    omp_set_num_threads(4);
    const Tensor3 y4 = conv2d_forward(x, l), b4 = conv2d_backward(x, l, g);
    omp_set_num_threads(saved);
    CHECK(y1 == y4);
    CHECK(b1 == b4);
    CHECK(conv2d_forward(x, l) == y1);
}

TEST_CASE("maxpool2: constant image halves") {
    const PoolResult p = maxpool2_forward(Tensor3(6, 4, 2, 0.3));
    CHECK(p.output.height() == 3);
    CHECK(p.output.width() == 2);
    for (double v : p.output.values()) CHECK(v == 0.3);
}

TEST_CASE("maxpool2: window [1,2;3,4] picks bottom-right and routes the gradient there") {
    const Tensor3 x(2, 2, 1, std::vector<double>{1, 2, 3, 4});
    const PoolResult p = maxpool2_forward(x);
    CHECK(p.output[0] == 4.0);
    CHECK(p.record.argmax[0] == 3);
    const Tensor3 g = maxpool2_backward(p.record, Tensor3(1, 1, 1, 1.0));
    CHECK(g == Tensor3(2, 2, 1, std::vector<double>{0, 0, 0, 1}));
}

TEST_CASE("maxpool2: ties go to the first element in row-major order") {
    const PoolResult p = maxpool2_forward(Tensor3(2, 2, 1, std::vector<double>{5, 5, 5, 5}));
    CHECK(p.record.argmax[0] == 0);
}

TEST_CASE("maxpool2: zero cotangent gives zero gradient") {
    const Tensor3 x = random_tensor(4, 4, 2, 1);
    const Tensor3 grad = maxpool2_backward(maxpool2_forward(x).record, Tensor3(2, 2, 2));
    for (double v : grad.values()) CHECK(v == 0.0);
}

TEST_CASE("maxpool2: backward matches central differences on random 8x8") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Tensor3 x = random_tensor(8, 8, 3, seed);
        const Tensor3 g = random_tensor(4, 4, 3, seed + 1000);
        const auto f = [&](const Tensor3& t) { return dot(g.values(), maxpool2_forward(t).output.values()); };
        const GradcheckReport r = gradcheck(f, maxpool2_backward(maxpool2_forward(x).record, g), x);
        CHECK(r.max_relative_error < 1e-6);
    }
}

TEST_CASE("maxpool2: errors") {
    CHECK_THROWS_AS(maxpool2_forward(Tensor3(3, 4, 1)), ConfigError);
    const PoolResult p = maxpool2_forward(Tensor3(4, 4, 1));
    CHECK_THROWS_AS(maxpool2_backward(p.record, Tensor3(2, 2, 2)), InternalError);
}

TEST_CASE("gradcheck: linear and quadratic functions") {
    const Tensor3 x = random_tensor(3, 3, 2, 4);
    const auto sum = [](const Tensor3& t) {
        double s = 0.0;
        for (double v : t.values()) s += v;
        return s;
    };
    CHECK(gradcheck(sum, Tensor3(3, 3, 2, 1.0), x).max_relative_error < 1e-10);
    const auto half_sq = [](const Tensor3& t) { return 0.5 * dot(t.values(), t.values()); };
    CHECK(gradcheck(half_sq, x, x).max_relative_error < 1e-8);
}

TEST_CASE("gradcheck: detects a wrong gradient and rejects non-finite f") {
    const Tensor3 x = random_tensor(3, 3, 1, 4);
    const auto half_sq = [](const Tensor3& t) { return 0.5 * dot(t.values(), t.values()); };
    Tensor3 wrong = x;
    wrong[4] += 0.5;
    CHECK(gradcheck(half_sq, wrong, x).max_relative_error > 1e-3);
    const auto bad = [](const Tensor3&) { return std::numeric_limits<double>::infinity(); };
    CHECK_THROWS_AS(gradcheck(bad, x, x), NumericError);
}

TEST_CASE("gradcheck: sampling checks at least 64 coordinates") {
    const Tensor3 x = random_tensor(10, 10, 3, 4);
    GradcheckOptions o;
    o.samples = 10;
    const auto half_sq = [](const Tensor3& t) { return 0.5 * dot(t.values(), t.values()); };
    CHECK(gradcheck(half_sq, x, x, o).checked == 64);
    o.samples = 100;
    CHECK(gradcheck(half_sq, x, x, o).checked == 100);
}

TEST_CASE("relative_error definition") {
    CHECK(relative_error(1.0, 1.0) == 0.0);
    CHECK(relative_error(0.0, 0.0) == 0.0);
    CHECK(relative_error(1.0, 3.0) == doctest::Approx(0.5));
    CHECK(relative_error(1e-9, 0.0) == doctest::Approx(0.1));
}
