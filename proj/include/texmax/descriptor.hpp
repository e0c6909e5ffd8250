#pragma once

#include <span>
#include <vector>

#include "texmax/backbone.hpp"
#include "texmax/tensor.hpp"

namespace texmax {

/// Derivative guard for the signed square root: d/dv sqrt|v| is evaluated as 1 / (2 max(sqrt|v|, eps)).
inline constexpr double kSignedSqrtEps = 1e-4;
/// Below this norm a vector is treated as zero by l2_normalize.
inline constexpr double kNormEps = 1e-12;

struct DescriptorOptions {
    /// Subtract the per-channel spatial mean before pooling (a true covariance).
    /// Off by default: the uncentered second moment of bilinear pooling.
    bool centered = false;
};

/// Per-tap vectorized D x D second-order statistics after signed sqrt and l2 normalization.
struct TextureDescriptor {
    std::vector<std::size_t> channels;         // D_i per tap
    std::vector<std::vector<double>> taps;     // length D_i^2 each, row-major
    std::vector<bool> zero;                    // true when a tap collapsed to the zero vector

    std::size_t tap_count() const noexcept { return taps.size(); }
    std::size_t total_size() const noexcept;
    std::vector<double> concatenated() const;

    bool operator==(const TextureDescriptor&) const = default;
};

/// A = (1/N) sum_n phi_n phi_n^T over the N spatial positions; D x D row-major, symmetric.
std::vector<double> pool_second_order(const Tensor3& feat, bool centered = false);

/// Gradient of <grad, A(feat)> with respect to feat.
Tensor3 pool_second_order_backward(const Tensor3& feat, std::span<const double> grad, bool centered = false);

std::vector<double> signed_sqrt(std::span<const double> v);
std::vector<double> signed_sqrt_backward(std::span<const double> v, std::span<const double> grad);

struct Normalized {
    std::vector<double> value;
    double norm = 0.0;
    bool zero = false;
};

Normalized l2_normalize(std::span<const double> v);
/// Vector-Jacobian product of l2_normalize; zero when the forward pass was flagged zero.
std::vector<double> l2_normalize_backward(const Normalized& forward, std::span<const double> grad);

TextureDescriptor descriptor_forward(const FeatureStack& stack, const DescriptorOptions& options = {});

/// Intermediate values reused by the backward pass.
struct DescriptorPass {
    TextureDescriptor descriptor;
    std::vector<std::vector<double>> pooled;
    std::vector<Normalized> normalized;
};

DescriptorPass descriptor_forward_pass(const FeatureStack& stack, const DescriptorOptions& options = {});

/// Per-tap gradients of <grad_desc, descriptor(stack)> with respect to the tap activations.
std::vector<Tensor3> descriptor_backward(const FeatureStack& stack, const DescriptorPass& pass,
                                         const std::vector<std::vector<double>>& grad_desc,
                                         const DescriptorOptions& options = {});
std::vector<Tensor3> descriptor_backward(const FeatureStack& stack, const std::vector<std::vector<double>>& grad_desc,
                                         const DescriptorOptions& options = {});

/// Convenience: backbone forward followed by descriptor_forward.
TextureDescriptor describe_image(const Tensor3& image, const BackboneSpec& spec, const DescriptorOptions& options = {});

}  // namespace texmax
