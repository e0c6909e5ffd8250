#pragma once

#include <cstdint>
#include <filesystem>
#include <variant>
#include <vector>

#include "texmax/binary_io.hpp"
#include "texmax/conv.hpp"
#include "texmax/pool.hpp"
#include "texmax/tensor.hpp"

namespace texmax {

struct MaxPool2 {
    bool operator==(const MaxPool2&) const = default;
};

using BackboneLayer = std::variant<ConvLayerSpec, MaxPool2>;

/// Frozen convolutional feature extractor with designated tap layers.
///
/// Taps index into `layers` and must point at ReLU conv layers, strictly
/// increasing. Images are normalized as (value - mean[c]) / scale[c] before the
/// first layer.
struct BackboneSpec {
    std::vector<BackboneLayer> layers;
    std::vector<std::size_t> taps;
    std::size_t input_channels = 3;
    std::vector<double> mean;
    std::vector<double> scale;

    std::size_t tap_count() const noexcept { return taps.size(); }
    /// Channel count of each tap, in tap order.
    std::vector<std::size_t> tap_channels() const;

    bool operator==(const BackboneSpec&) const = default;
};

void validate(const BackboneSpec& spec);

/// Tap activations plus whatever the backward pass needs from the forward pass.
struct FeatureStack {
    struct LayerRecord {
        std::size_t in_h = 0;
        std::size_t in_w = 0;
        Tensor3 preactivation;  // conv layers only
        PoolRecord pool;        // pool layers only
    };

    std::vector<Tensor3> taps;
    std::vector<LayerRecord> records;  // one per executed layer (up to the last tap)
    std::size_t image_h = 0;
    std::size_t image_w = 0;
};

FeatureStack forward_taps(const Tensor3& image, const BackboneSpec& spec);

/// Sum over taps of the gradient of <tap_grads[i], tap_i(image)> with respect to the image.
Tensor3 backward_to_image(const FeatureStack& stack, const BackboneSpec& spec, const std::vector<Tensor3>& tap_grads);

/// ReLU on/off bits and pooling winners of a forward pass; two inputs with equal
/// patterns lie in the same linear region of the network.
std::vector<std::uint32_t> activation_pattern(const FeatureStack& stack);

enum class FilterBankKind { gabor, random_orthogonal };

/// Architecture of a generated backbone: blocks of 3x3 conv+relu layers with a
/// 2x2 max-pool between blocks and a tap after each block's last relu.
struct BackboneShape {
    std::size_t input_channels = 3;
    std::vector<std::size_t> block_channels{8, 16, 16, 32};
    std::size_t convs_per_block = 2;
    std::size_t kernel = 3;
    std::size_t gabor_kernel = 5;
};

/// Generates frozen weights.
///
/// `random_orthogonal`: every conv layer has orthonormal flattened filter rows
/// (Gram-Schmidt on Gaussian draws), then is rescaled so a constant-1 image
/// produces unit activation RMS at that layer.
/// `gabor`: the first conv layer is a DC-free Gabor bank (8 orientations per
/// scale, `gabor_kernel` square); the remaining layers are as above.
/// Deterministic in `seed`. Biases are zero, so the network is positively homogeneous.
BackboneSpec make_filter_bank(FilterBankKind kind, const BackboneShape& shape, std::uint64_t seed);

/// The Gabor kernel used for output channel `index` of the first layer (single input plane).
std::vector<double> gabor_kernel(std::size_t index, std::size_t size);

/// Copy of `spec` with every stored real rounded through float32, i.e. what a save/load returns.
BackboneSpec quantize(const BackboneSpec& spec);

Bytes encode_backbone(const BackboneSpec& spec);
BackboneSpec decode_backbone(std::span<const std::uint8_t> bytes);
void save_backbone(const BackboneSpec& spec, const std::filesystem::path& path);
BackboneSpec load_backbone(const std::filesystem::path& path);

}  // namespace texmax
