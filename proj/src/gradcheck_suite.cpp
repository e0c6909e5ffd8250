#include "texmax/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "texmax/backbone.hpp"
#include "texmax/conv.hpp"
#include "texmax/descriptor.hpp"
#include "texmax/gradcheck.hpp"
#include "texmax/heads.hpp"
#include "texmax/inversion.hpp"
#include "texmax/pool.hpp"

namespace texmax {

namespace {

Tensor3 random_tensor(std::size_t h, std::size_t w, std::size_t c, std::mt19937_64& rng, double lo = -1.0,
                      double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor3 t(h, w, c);
    for (double& v : t.storage()) v = u(rng);
    return t;
}

ConvLayerSpec random_conv(std::size_t in, std::size_t out, std::size_t k, std::size_t stride, Activation act,
                          std::mt19937_64& rng) {
    ConvLayerSpec layer;
    layer.in_channels = in;
    layer.out_channels = out;
    layer.kernel_h = layer.kernel_w = k;
    layer.stride = stride;
    layer.padding = k / 2;
    layer.activation = act;
    std::normal_distribution<double> n(0.0, 0.5);
    layer.weights.resize(out * in * k * k);
    for (double& w : layer.weights) w = n(rng);
    layer.bias.resize(out);
    for (double& b : layer.bias) b = n(rng);
    return layer;
}

double inner(const Tensor3& a, const Tensor3& b) { return dot(a.values(), b.values()); }

void merge(GradcheckRow& row, const GradcheckReport& r) {
    row.max_relative_error = std::max(row.max_relative_error, r.max_relative_error);
    row.checked += r.checked;
    row.skipped += r.skipped;
}

// Returns a skip predicate that flags perturbations changing the ReLU/pool pattern.
template <class PatternFn>
std::function<bool(const Tensor3&, const Tensor3&)> kink_filter(const Tensor3& x, PatternFn pattern) {
    auto base = pattern(x);
    return [base, pattern](const Tensor3& plus, const Tensor3& minus) {
        return pattern(plus) != base || pattern(minus) != base;
    };
}

SoftmaxHead random_head(const std::vector<std::size_t>& channels, std::size_t classes, std::mt19937_64& rng) {
    SoftmaxHead head;
    for (std::size_t k = 0; k < classes; ++k) head.class_names.push_back("class" + std::to_string(k));
    std::normal_distribution<double> n(0.0, 1.0);
    for (std::size_t d : channels) {
        LinearMap m(classes, d * d);
        const double scale = 4.0 / std::sqrt(static_cast<double>(d));
        for (double& w : m.weights) w = scale * n(rng);
        for (double& b : m.bias) b = n(rng);
        head.taps.push_back(std::move(m));
    }
    return head;
}

}  // namespace

KinkFilter descriptor_kink_filter(const BackboneSpec& backbone, const Tensor3& x, const DescriptorOptions& options) {
    const auto base = activation_pattern(forward_taps(x, backbone));
    return [&backbone, base, options](const Tensor3& plus, const Tensor3& minus) {
        const FeatureStack sp = forward_taps(plus, backbone);
        const FeatureStack sm = forward_taps(minus, backbone);
        if (activation_pattern(sp) != base || activation_pattern(sm) != base) return true;
        for (std::size_t t = 0; t < sp.taps.size(); ++t) {
            const auto a = pool_second_order(sp.taps[t], options.centered);
            const auto b = pool_second_order(sm.taps[t], options.centered);
            for (std::size_t j = 0; j < a.size(); ++j) {
                if (a[j] == 0.0 && b[j] == 0.0) continue;
                if ((a[j] > 0.0) != (b[j] > 0.0) || std::abs(a[j] - b[j]) > 0.01 * std::min(std::abs(a[j]), std::abs(b[j])))
                    return true;
            }
        }
        return false;
    };
}

std::vector<GradcheckRow> run_gradcheck_suite(std::uint64_t first_seed, std::size_t seeds) {
    GradcheckRow conv_lin{"conv2d_linear"}, conv_relu{"conv2d_relu"}, conv_stride{"conv2d_stride2"},
        pool{"maxpool2"}, backbone{"backbone_taps"}, ssqrt{"signed_sqrt"}, l2{"l2_normalize"},
        desc{"descriptor"}, desc_c{"descriptor_centered"}, tv15{"tv_norm_beta1.5"}, tv2{"tv_norm_beta2"},
        ce{"cross_entropy"}, obj{"objective_16x16"};

    GradcheckOptions opt;
    // Cheap ops are checked on every coordinate; the 16x16 network paths on a
    // random subset so the whole suite stays well under a minute.
    GradcheckOptions sampled;
    sampled.samples = 192;
    const BackboneSpec net = make_filter_bank(FilterBankKind::gabor, BackboneShape{}, 11);

    for (std::size_t s = 0; s < seeds; ++s) {
        const std::uint64_t seed = first_seed + s;
        std::mt19937_64 rng(seed);
        opt.seed = seed;
        sampled.seed = seed;

        // conv2d, linear / relu / strided
        for (auto [row, act, stride] : {std::tuple{&conv_lin, Activation::linear, std::size_t{1}},
                                        std::tuple{&conv_relu, Activation::relu, std::size_t{1}},
                                        std::tuple{&conv_stride, Activation::relu, std::size_t{2}}}) {
            const ConvLayerSpec layer = random_conv(3, 4, 3, stride, act, rng);
            const Tensor3 x = random_tensor(6, 6, 3, rng);
            const Tensor3 pre = conv2d_preactivation(x, layer);
            const Tensor3 g = random_tensor(pre.height(), pre.width(), pre.channels(), rng);
            GradcheckOptions o = opt;
            o.skip = kink_filter(x, [layer](const Tensor3& t) {
                const Tensor3 pre = conv2d_preactivation(t, layer);
                std::vector<bool> bits;
                for (double v : pre.values()) bits.push_back(v > 0.0);
                return bits;
            });
            merge(*row, gradcheck([&](const Tensor3& t) { return inner(g, conv2d_forward(t, layer)); },
                                  conv2d_backward(x, layer, g), x, o));
        }

        {
            const Tensor3 x = random_tensor(8, 8, 3, rng);
            const PoolResult fwd = maxpool2_forward(x);
            const Tensor3 g = random_tensor(4, 4, 3, rng);
            GradcheckOptions o = opt;
            o.skip = kink_filter(x, [](const Tensor3& t) { return maxpool2_forward(t).record.argmax; });
            merge(pool, gradcheck([&](const Tensor3& t) { return inner(g, maxpool2_forward(t).output); },
                                  maxpool2_backward(fwd.record, g), x, o));
        }

        {
            const Tensor3 x = random_tensor(16, 16, 3, rng, 0.0, 1.0);
            const FeatureStack stack = forward_taps(x, net);
            std::vector<Tensor3> gs;
            for (const Tensor3& tap : stack.taps) gs.push_back(random_tensor(tap.height(), tap.width(), tap.channels(), rng));
            GradcheckOptions o = sampled;
            o.skip = kink_filter(x, [&net](const Tensor3& t) { return activation_pattern(forward_taps(t, net)); });
            merge(backbone, gradcheck(
                                [&](const Tensor3& t) {
                                    const FeatureStack st = forward_taps(t, net);
                                    double sum = 0.0;
                                    for (std::size_t k = 0; k < gs.size(); ++k) sum += inner(gs[k], st.taps[k]);
                                    return sum;
                                },
                                backward_to_image(stack, net, gs), x, o));
        }

        {
            // Keep entries away from the kink at 0 (|v| >= 1e-3 plus the step).
            Tensor3 v = random_tensor(40, 1, 1, rng);
            for (double& e : v.storage()) e = (e < 0.0 ? -1.0 : 1.0) * (2e-3 + std::abs(e));
            const Tensor3 g = random_tensor(40, 1, 1, rng);
            const std::vector<double> grad = signed_sqrt_backward(v.values(), g.values());
            merge(ssqrt, gradcheck([&](const Tensor3& t) { return dot(g.values(), signed_sqrt(t.values())); },
                                   Tensor3(40, 1, 1, grad), v, opt));

            const Normalized n = l2_normalize(v.values());
            merge(l2, gradcheck([&](const Tensor3& t) { return dot(g.values(), l2_normalize(t.values()).value); },
                                Tensor3(40, 1, 1, l2_normalize_backward(n, g.values())), v, opt));
        }

        for (auto [row, centered] : {std::pair{&desc, false}, std::pair{&desc_c, true}}) {
            FeatureStack stack;
            stack.taps.push_back(random_tensor(5, 5, 4, rng, 0.05, 1.0));
            const DescriptorOptions dopt{centered};
            std::vector<std::vector<double>> g{random_tensor(4, 4, 1, rng).storage()};
            const Tensor3 x = stack.taps[0];
            const Tensor3 analytic = descriptor_backward(stack, g, dopt)[0];
            merge(*row, gradcheck(
                            [&](const Tensor3& t) {
                                FeatureStack st;
                                st.taps.push_back(t);
                                return dot(g[0], descriptor_forward(st, dopt).taps[0]);
                            },
                            analytic, x, opt));
        }

        for (auto [row, beta] : {std::pair{&tv15, 1.5}, std::pair{&tv2, 2.0}}) {
            const Tensor3 x = random_tensor(16, 16, 3, rng, 0.0, 1.0);
            merge(*row, gradcheck([beta](const Tensor3& t) { return tv_norm(t, beta).value; }, tv_norm(x, beta).grad,
                                  x, opt));
        }

        {
            const Tensor3 logits = random_tensor(5, 1, 1, rng, -3.0, 3.0);
            const std::size_t target = seed % 5;
            const CrossEntropy c = cross_entropy(logits.values(), target);
            merge(ce, gradcheck([&](const Tensor3& t) { return cross_entropy(t.values(), target).loss; },
                                Tensor3(5, 1, 1, c.grad_logits), logits, opt));
        }

        {
            const SoftmaxHead head = random_head(net.tap_channels(), 4, rng);
            InversionConfig cfg;
            cfg.target_class = seed % 4;
            cfg.gamma = 0.01;
            cfg.tv_beta = 2.0;
            const Tensor3 x = random_tensor(16, 16, 3, rng, 0.0, 1.0);
            GradcheckOptions o = sampled;
            o.skip = descriptor_kink_filter(net, x, cfg.descriptor);
            merge(obj, gradcheck([&](const Tensor3& t) { return objective(t, head, net, cfg).total; },
                                 objective(x, head, net, cfg).grad, x, o));
        }
    }
    return {conv_lin, conv_relu, conv_stride, pool, backbone, ssqrt, l2, desc, desc_c, tv15, tv2, ce, obj};
}

}  // namespace texmax
