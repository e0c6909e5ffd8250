#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "texmax/conv.hpp"
#include "texmax/tensor.hpp"

namespace testing {

inline texmax::Tensor3 random_tensor(std::size_t h, std::size_t w, std::size_t c, std::uint64_t seed,
                                     double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    texmax::Tensor3 t(h, w, c);
    for (double& v : t.storage()) v = u(rng);
    return t;
}

inline texmax::ConvLayerSpec random_conv(std::size_t in, std::size_t out, std::size_t k, std::size_t stride,
                                         std::size_t pad, texmax::Activation act, std::uint64_t seed) {
    texmax::ConvLayerSpec layer;
    layer.in_channels = in;
    layer.out_channels = out;
    layer.kernel_h = layer.kernel_w = k;
    layer.stride = stride;
    layer.padding = pad;
    layer.activation = act;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 0.5);
    layer.weights.resize(out * in * k * k);
    for (double& w : layer.weights) w = n(rng);
    layer.bias.resize(out);
    for (double& b : layer.bias) b = n(rng);
    return layer;
}

// Straight-from-the-definition cross-correlation, written without looking at the library kernels.
inline texmax::Tensor3 conv_oracle(const texmax::Tensor3& x, const texmax::ConvLayerSpec& L) {
    const long H = static_cast<long>(x.height()), W = static_cast<long>(x.width());
    const long oh = (H + 2 * static_cast<long>(L.padding) - static_cast<long>(L.kernel_h)) / static_cast<long>(L.stride) + 1;
    const long ow = (W + 2 * static_cast<long>(L.padding) - static_cast<long>(L.kernel_w)) / static_cast<long>(L.stride) + 1;
    texmax::Tensor3 y(static_cast<std::size_t>(oh), static_cast<std::size_t>(ow), L.out_channels);
    for (long r = 0; r < oh; ++r)
        for (long c = 0; c < ow; ++c)
            for (std::size_t o = 0; o < L.out_channels; ++o) {
                double s = L.bias[o];
                for (std::size_t i = 0; i < L.in_channels; ++i)
                    for (std::size_t ky = 0; ky < L.kernel_h; ++ky)
                        for (std::size_t kx = 0; kx < L.kernel_w; ++kx) {
                            const long sr = r * static_cast<long>(L.stride) + static_cast<long>(ky) - static_cast<long>(L.padding);
                            const long sc = c * static_cast<long>(L.stride) + static_cast<long>(kx) - static_cast<long>(L.padding);
                            if (sr < 0 || sc < 0 || sr >= H || sc >= W) continue;
                            s += L.weights[((o * L.in_channels + i) * L.kernel_h + ky) * L.kernel_w + kx] *
                                 x.at(static_cast<std::size_t>(sr), static_cast<std::size_t>(sc), i);
                        }
                if (L.activation == texmax::Activation::relu && s < 0.0) s = 0.0;
                y.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c), o) = s;
            }
    return y;
}

// (1/N) sum over positions of phi phi^T, by explicit double loop over channel pairs.
inline std::vector<double> second_moment_oracle(const texmax::Tensor3& f, bool centered = false) {
    const std::size_t D = f.channels(), N = f.positions();
    std::vector<double> mu(D, 0.0);
    if (centered)
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t a = 0; a < D; ++a) mu[a] += f[n * D + a] / static_cast<double>(N);
    std::vector<double> A(D * D, 0.0);
    for (std::size_t a = 0; a < D; ++a)
        for (std::size_t b = 0; b < D; ++b) {
            double s = 0.0;
            for (std::size_t n = 0; n < N; ++n) s += (f[n * D + a] - mu[a]) * (f[n * D + b] - mu[b]);
            A[a * D + b] = s / static_cast<double>(N);
        }
    return A;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

// Fresh scratch directory in the system temp dir, removed on destruction.
class ScratchDir {
public:
    explicit ScratchDir(const std::string& name)
        : path_(std::filesystem::temp_directory_path() / ("texmax_test_" + name)) {
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~ScratchDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    std::filesystem::path path_;
};

}  // namespace testing
