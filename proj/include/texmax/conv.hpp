#pragma once

#include <cstddef>
#include <vector>

#include "texmax/tensor.hpp"

namespace texmax {

enum class Activation : unsigned char { linear = 0, relu = 1 };

/// One convolution layer. Weights are laid out [out][in][kernel_h][kernel_w].
struct ConvLayerSpec {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel_h = 1;
    std::size_t kernel_w = 1;
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::vector<double> weights;
    std::vector<double> bias;
    Activation activation = Activation::linear;

    double weight(std::size_t o, std::size_t i, std::size_t ky, std::size_t kx) const noexcept {
        return weights[((o * in_channels + i) * kernel_h + ky) * kernel_w + kx];
    }
    std::size_t output_height(std::size_t in_h) const noexcept {
        return (in_h + 2 * padding - kernel_h) / stride + 1;
    }
    std::size_t output_width(std::size_t in_w) const noexcept {
        return (in_w + 2 * padding - kernel_w) / stride + 1;
    }

    bool operator==(const ConvLayerSpec&) const = default;
};

/// Throws ConfigError unless the declared dimensions and weight arrays agree.
void validate(const ConvLayerSpec& layer);

/// Zero-padded cross-correlation without the activation.
Tensor3 conv2d_preactivation(const Tensor3& input, const ConvLayerSpec& layer);

/// Cross-correlation with zero padding, followed by the layer activation.
Tensor3 conv2d_forward(const Tensor3& input, const ConvLayerSpec& layer);

/// Gradient with respect to the input, given the cached pre-activation of the
/// forward pass. ReLU gates by pre-activation > 0 (subgradient 0 at exactly 0).
Tensor3 conv2d_backward_from_preactivation(std::size_t in_h, std::size_t in_w, const ConvLayerSpec& layer,
                                           const Tensor3& preactivation, const Tensor3& grad_output);

/// Gradient with respect to the input; recomputes the forward pre-activation.
Tensor3 conv2d_backward(const Tensor3& input, const ConvLayerSpec& layer, const Tensor3& grad_output);

Tensor3 relu(const Tensor3& x);

}  // namespace texmax
