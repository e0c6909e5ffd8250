#include "texmax/descriptor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "texmax/error.hpp"

namespace texmax {

namespace {

// Channel-major copy (D rows of N positions), optionally mean-centered.
std::vector<double> channel_major(const Tensor3& feat, bool centered) {
    const std::size_t d = feat.channels();
    const std::size_t n = feat.positions();
    std::vector<double> f(d * n);
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t c = 0; c < d; ++c) f[c * n + p] = feat[p * d + c];
    }
    if (centered) {
        for (std::size_t c = 0; c < d; ++c) {
            double mean = 0.0;
            for (std::size_t p = 0; p < n; ++p) mean += f[c * n + p];
            mean /= static_cast<double>(n);
            for (std::size_t p = 0; p < n; ++p) f[c * n + p] -= mean;
        }
    }
    return f;
}

}  // namespace

std::size_t TextureDescriptor::total_size() const noexcept {
    std::size_t s = 0;
    for (const auto& t : taps) s += t.size();
    return s;
}

std::vector<double> TextureDescriptor::concatenated() const {
    std::vector<double> out;
    out.reserve(total_size());
    for (const auto& t : taps) out.insert(out.end(), t.begin(), t.end());
    return out;
}

std::vector<double> pool_second_order(const Tensor3& feat, bool centered) {
    if (feat.positions() == 0) throw ConfigError("pool_second_order: empty feature map");
    const long d = static_cast<long>(feat.channels());
    const std::size_t n = feat.positions();
    const std::vector<double> f = channel_major(feat, centered);
    const double inv_n = 1.0 / static_cast<double>(n);
    std::vector<double> a(static_cast<std::size_t>(d * d));

#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < d; ++i) {
        const double* fi = f.data() + static_cast<std::size_t>(i) * n;
        for (long j = i; j < d; ++j) {
            const double* fj = f.data() + static_cast<std::size_t>(j) * n;
            double s = 0.0;
            for (std::size_t p = 0; p < n; ++p) s += fi[p] * fj[p];
            a[i * d + j] = s * inv_n;
            a[j * d + i] = s * inv_n;
        }
    }
    return a;
}

Tensor3 pool_second_order_backward(const Tensor3& feat, std::span<const double> grad, bool centered) {
    const std::size_t d = feat.channels();
    if (grad.size() != d * d) throw InternalError("pool_second_order_backward: gradient size mismatch");
    const long n = static_cast<long>(feat.positions());
    const double inv_n = 1.0 / static_cast<double>(n);

    // d<G, A>/d phi_n = (1/N) (G + G^T) phi_n; the centering term cancels because
    // the centered features sum to zero over positions.
    std::vector<double> sym(d * d);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) sym[i * d + j] = (grad[i * d + j] + grad[j * d + i]) * inv_n;
    }
    std::vector<double> mean(d, 0.0);
    if (centered) {
        for (long p = 0; p < n; ++p) {
            for (std::size_t c = 0; c < d; ++c) mean[c] += feat[p * d + c];
        }
        for (double& m : mean) m *= inv_n;
    }

    Tensor3 out(feat.height(), feat.width(), d);
#pragma omp parallel for schedule(static)
    for (long p = 0; p < n; ++p) {
        const double* phi = feat.storage().data() + p * d;
        double* g = out.storage().data() + p * d;
        for (std::size_t i = 0; i < d; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) s += sym[i * d + j] * (phi[j] - mean[j]);
            g[i] = s;
        }
    }
    return out;
}

std::vector<double> signed_sqrt(std::span<const double> v) {
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double r = std::sqrt(std::abs(v[i]));
        out[i] = v[i] > 0.0 ? r : (v[i] < 0.0 ? -r : 0.0);
    }
    return out;
}

std::vector<double> signed_sqrt_backward(std::span<const double> v, std::span<const double> grad) {
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = grad[i] / (2.0 * std::max(std::sqrt(std::abs(v[i])), kSignedSqrtEps));
    }
    return out;
}

Normalized l2_normalize(std::span<const double> v) {
    Normalized r;
    r.norm = l2_norm(v);
    r.value.assign(v.size(), 0.0);
    if (!(r.norm > kNormEps)) {
        r.zero = true;
        return r;
    }
    for (std::size_t i = 0; i < v.size(); ++i) r.value[i] = v[i] / r.norm;
    return r;
}

std::vector<double> l2_normalize_backward(const Normalized& forward, std::span<const double> grad) {
    std::vector<double> out(grad.size(), 0.0);
    if (forward.zero) return out;
    const double proj = dot(forward.value, grad);
    for (std::size_t i = 0; i < grad.size(); ++i) out[i] = (grad[i] - forward.value[i] * proj) / forward.norm;
    return out;
}

DescriptorPass descriptor_forward_pass(const FeatureStack& stack, const DescriptorOptions& options) {
    DescriptorPass pass;
    for (const Tensor3& tap : stack.taps) {
        std::vector<double> pooled = pool_second_order(tap, options.centered);
        Normalized normalized = l2_normalize(signed_sqrt(pooled));
        pass.descriptor.channels.push_back(tap.channels());
        pass.descriptor.taps.push_back(normalized.value);
        pass.descriptor.zero.push_back(normalized.zero);
        pass.pooled.push_back(std::move(pooled));
        pass.normalized.push_back(std::move(normalized));
    }
    return pass;
}

TextureDescriptor descriptor_forward(const FeatureStack& stack, const DescriptorOptions& options) {
    return descriptor_forward_pass(stack, options).descriptor;
}

std::vector<Tensor3> descriptor_backward(const FeatureStack& stack, const DescriptorPass& pass,
                                         const std::vector<std::vector<double>>& grad_desc,
                                         const DescriptorOptions& options) {
    if (grad_desc.size() != stack.taps.size()) throw InternalError("descriptor_backward: tap count mismatch");
    std::vector<Tensor3> out;
    for (std::size_t t = 0; t < stack.taps.size(); ++t) {
        if (grad_desc[t].size() != pass.pooled[t].size()) {
            throw InternalError("descriptor_backward: tap " + std::to_string(t) + " gradient has wrong length");
        }
        const std::vector<double> g_sqrt = l2_normalize_backward(pass.normalized[t], grad_desc[t]);
        const std::vector<double> g_pool = signed_sqrt_backward(pass.pooled[t], g_sqrt);
        out.push_back(pool_second_order_backward(stack.taps[t], g_pool, options.centered));
    }
    return out;
}

std::vector<Tensor3> descriptor_backward(const FeatureStack& stack, const std::vector<std::vector<double>>& grad_desc,
                                         const DescriptorOptions& options) {
    return descriptor_backward(stack, descriptor_forward_pass(stack, options), grad_desc, options);
}

TextureDescriptor describe_image(const Tensor3& image, const BackboneSpec& spec, const DescriptorOptions& options) {
    return descriptor_forward(forward_taps(image, spec), options);
}

}  // namespace texmax
