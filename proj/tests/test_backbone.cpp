#include <cmath>
#include <variant>

#include "doctest.h"
#include "support.hpp"
#include "texmax/backbone.hpp"
#include "texmax/binary_io.hpp"
#include "texmax/error.hpp"
#include "texmax/gradcheck.hpp"

using namespace texmax;
using testing::random_tensor;

namespace {

const BackboneSpec& default_net() {
    static const BackboneSpec net = make_filter_bank(FilterBankKind::gabor, BackboneShape{}, 3);
    return net;
}

double rms(const Tensor3& t) {
    return std::sqrt(dot(t.values(), t.values()) / static_cast<double>(t.size()));
}

}  // namespace

TEST_CASE("default backbone: four taps with 8/16/16/32 channels") {
    const BackboneSpec& net = default_net();
    CHECK(net.tap_count() == 4);
    CHECK(net.tap_channels() == std::vector<std::size_t>{8, 16, 16, 32});
    CHECK(net.layers.size() == 11);
    CHECK(net.mean == std::vector<double>{0.5, 0.5, 0.5});
    CHECK(net.scale == std::vector<double>{0.5, 0.5, 0.5});
}

TEST_CASE("forward_taps: 32x32 input gives tap sizes 32, 16, 8, 4") {
    const FeatureStack s = forward_taps(random_tensor(32, 32, 3, 1, 0.0, 1.0), default_net());
    REQUIRE(s.taps.size() == 4);
    const std::size_t expect[] = {32, 16, 8, 4};
    for (std::size_t k = 0; k < 4; ++k) {
        CHECK(s.taps[k].height() == expect[k]);
        CHECK(s.taps[k].width() == expect[k]);
    }
}

TEST_CASE("forward_taps: an image at the normalization mean maps to all-zero taps") {
    // Biases are zero, so a zero normalized input stays zero through every layer.
    const FeatureStack s = forward_taps(Tensor3(16, 16, 3, 0.5), default_net());
    for (const Tensor3& t : s.taps)
        for (double v : t.values()) CHECK(v == 0.0);
}

TEST_CASE("forward_taps: taps are nonnegative and deterministic") {
    const Tensor3 x = random_tensor(16, 16, 3, 4, 0.0, 1.0);
    const FeatureStack a = forward_taps(x, default_net());
    const FeatureStack b = forward_taps(x, default_net());
    for (std::size_t k = 0; k < a.taps.size(); ++k) {
        CHECK(a.taps[k] == b.taps[k]);
        for (double v : a.taps[k].values()) CHECK(v >= 0.0);
    }
}

TEST_CASE("forward_taps: wrong channel count is a configuration error") {
    CHECK_THROWS_AS(forward_taps(Tensor3(16, 16, 1), default_net()), ConfigError);
}

TEST_CASE("backward_to_image: zero cotangents give a zero gradient") {
    const Tensor3 x = random_tensor(16, 16, 3, 5, 0.0, 1.0);
    const FeatureStack s = forward_taps(x, default_net());
    std::vector<Tensor3> g;
    for (const Tensor3& t : s.taps) g.emplace_back(t.height(), t.width(), t.channels());
    const Tensor3 grad = backward_to_image(s, default_net(), g);
    for (double v : grad.values()) CHECK(v == 0.0);
}

TEST_CASE("backward_to_image: multi-tap gradient equals the sum of single-tap passes") {
    const Tensor3 x = random_tensor(16, 16, 3, 6, 0.0, 1.0);
    const FeatureStack s = forward_taps(x, default_net());
    std::vector<Tensor3> g;
    for (std::size_t k = 0; k < s.taps.size(); ++k)
        g.push_back(random_tensor(s.taps[k].height(), s.taps[k].width(), s.taps[k].channels(), 60 + k));
    const Tensor3 all = backward_to_image(s, default_net(), g);
    Tensor3 sum(16, 16, 3);
    for (std::size_t k = 0; k < g.size(); ++k) {
        std::vector<Tensor3> single;
        for (std::size_t j = 0; j < g.size(); ++j)
            single.push_back(j == k ? g[j] : Tensor3(g[j].height(), g[j].width(), g[j].channels()));
        const Tensor3 part = backward_to_image(s, default_net(), single);
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += part[i];
    }
    CHECK(testing::max_abs_diff(all.values(), sum.values()) < 1e-12);
}

TEST_CASE("backward_to_image: finite-difference check of sum <g_i, tap_i(x)>") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const Tensor3 x = random_tensor(16, 16, 3, 70 + seed, 0.0, 1.0);
        const FeatureStack s = forward_taps(x, default_net());
        std::vector<Tensor3> g;
        for (std::size_t k = 0; k < s.taps.size(); ++k)
            g.push_back(random_tensor(s.taps[k].height(), s.taps[k].width(), s.taps[k].channels(), 80 + k));
        const auto f = [&](const Tensor3& t) {
            const FeatureStack st = forward_taps(t, default_net());
            double v = 0.0;
            for (std::size_t k = 0; k < g.size(); ++k) v += dot(g[k].values(), st.taps[k].values());
            return v;
        };
        const auto base = activation_pattern(s);
        GradcheckOptions o;
        o.samples = 128;
        o.seed = seed;
        o.skip = [&](const Tensor3& p, const Tensor3& m) {
            return activation_pattern(forward_taps(p, default_net())) != base ||
                   activation_pattern(forward_taps(m, default_net())) != base;
        };
        const GradcheckReport r = gradcheck(f, backward_to_image(s, default_net(), g), x, o);
        CHECK(r.max_relative_error < 1e-4);
        CHECK(r.checked >= 64);
    }
}

TEST_CASE("backward_to_image: mismatched cotangents are rejected") {
    const FeatureStack s = forward_taps(random_tensor(16, 16, 3, 1, 0.0, 1.0), default_net());
    CHECK_THROWS_AS(backward_to_image(s, default_net(), {}), ConfigError);
    std::vector<Tensor3> g;
    for (const Tensor3& t : s.taps) g.emplace_back(t.height() + 1, t.width(), t.channels());
    CHECK_THROWS_AS(backward_to_image(s, default_net(), g), ConfigError);
}

TEST_CASE("make_filter_bank: same seed gives identical weights, other seeds differ") {
    for (FilterBankKind kind : {FilterBankKind::gabor, FilterBankKind::random_orthogonal}) {
        const BackboneSpec a = make_filter_bank(kind, BackboneShape{}, 42);
        CHECK(a == make_filter_bank(kind, BackboneShape{}, 42));
        CHECK_FALSE(a == make_filter_bank(kind, BackboneShape{}, 43));
    }
}

TEST_CASE("make_filter_bank: random_orthogonal rows are mutually orthogonal") {
    const BackboneSpec net = make_filter_bank(FilterBankKind::random_orthogonal, BackboneShape{}, 9);
    for (const BackboneLayer& layer : net.layers) {
        const auto* conv = std::get_if<ConvLayerSpec>(&layer);
        if (!conv) continue;
        const std::size_t len = conv->in_channels * conv->kernel_h * conv->kernel_w;
        for (std::size_t a = 0; a < conv->out_channels; ++a)
            for (std::size_t b = a + 1; b < conv->out_channels; ++b) {
                const std::span<const double> ra(conv->weights.data() + a * len, len);
                const std::span<const double> rb(conv->weights.data() + b * len, len);
                CHECK(std::abs(dot(ra, rb)) < 1e-10);
            }
    }
}

TEST_CASE("make_filter_bank: tap RMS on a constant-1 image stays in [0.1, 10]") {
    for (FilterBankKind kind : {FilterBankKind::gabor, FilterBankKind::random_orthogonal}) {
        for (std::uint64_t seed : {0ULL, 1ULL, 2ULL}) {
            const FeatureStack s = forward_taps(Tensor3(32, 32, 3, 1.0), make_filter_bank(kind, BackboneShape{}, seed));
            for (const Tensor3& t : s.taps) {
                CHECK(rms(t) >= 0.1);
                CHECK(rms(t) <= 10.0);
            }
        }
    }
}

TEST_CASE("gabor kernels are DC-free and unit norm") {
    for (std::size_t i = 0; i < 16; ++i) {
        const std::vector<double> k = gabor_kernel(i, 5);
        double sum = 0.0;
        for (double v : k) sum += v;
        CHECK(std::abs(sum) < 1e-6);
        CHECK(l2_norm(k) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("make_filter_bank: more orthonormal rows than columns is a configuration error") {
    BackboneShape shape;
    shape.kernel = 1;
    shape.block_channels = {8, 16};
    CHECK_THROWS_AS(make_filter_bank(FilterBankKind::random_orthogonal, shape, 0), ConfigError);
}

TEST_CASE("validate: tap contract") {
    BackboneSpec net = default_net();
    net.taps = {4, 1};
    CHECK_THROWS_AS(validate(net), ConfigError);
    net.taps = {2};  // a pool layer
    CHECK_THROWS_AS(validate(net), ConfigError);
    net.taps = {11};
    CHECK_THROWS_AS(validate(net), ConfigError);
}

TEST_CASE("TXBB: save/load round-trips the float32 values") {
    testing::ScratchDir dir("txbb");
    const BackboneSpec net = default_net();
    save_backbone(net, dir / "net.txbb");
    const BackboneSpec back = load_backbone(dir / "net.txbb");
    CHECK(back == quantize(net));
    CHECK(encode_backbone(back) == encode_backbone(net));
    save_backbone(back, dir / "again.txbb");
    CHECK(read_file(dir / "again.txbb") == read_file(dir / "net.txbb"));
}

TEST_CASE("TXBB: header layout") {
    const Bytes b = encode_backbone(default_net());
    CHECK(std::string(b.begin(), b.begin() + 4) == "TXBB");
    CHECK(b[4] == 1);  // version, little-endian u32
    CHECK(b[8] == 11);  // layer count
    CHECK(b[12] == 0);  // first layer is conv
}

TEST_CASE("TXBB: corrupted magic, bad version and trailing bytes are format errors") {
    Bytes b = encode_backbone(default_net());
    Bytes bad = b;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_backbone(bad), FormatError);
    bad = b;
    bad[4] = 2;
    try {
        decode_backbone(bad);
        FAIL("expected a format error");
    } catch (const FormatError& e) {
        CHECK(e.offset() == 4);
    }
    bad = b;
    bad.push_back(0);
    CHECK_THROWS_AS(decode_backbone(bad), FormatError);
}

TEST_CASE("TXBB: truncation mid-weights names the layer") {
    const Bytes b = encode_backbone(default_net());
    // magic + version + layer count, then type, six u32 fields and the activation of layer 0
    const std::size_t weights_at = 12 + 1 + 24 + 1;
    const Bytes cut(b.begin(), b.begin() + static_cast<long>(weights_at + 40));
    try {
        decode_backbone(cut);
        FAIL("expected a format error");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("layer 0 weights") != std::string::npos);
        CHECK(e.offset() == weights_at);
    }
}

TEST_CASE("TXBB: every strict prefix fails cleanly") {
    const Bytes b = encode_backbone(make_filter_bank(FilterBankKind::gabor, BackboneShape{3, {4, 4}, 1, 3, 3}, 1));
    for (std::size_t n = 0; n < b.size(); n += 7) {
        const Bytes cut(b.begin(), b.begin() + static_cast<long>(n));
        CHECK_THROWS_AS(decode_backbone(cut), FormatError);
    }
}

TEST_CASE("TXBB: huge declared layer sizes do not allocate") {
    Bytes b = encode_backbone(default_net());
    for (std::size_t i = 14; i < 30; ++i) b[i] = 0xff;  // in/out/kh/kw of layer 0
    CHECK_THROWS_AS(decode_backbone(b), FormatError);
}
