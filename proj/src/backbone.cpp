#include "texmax/backbone.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "texmax/error.hpp"

namespace texmax {

namespace {

constexpr std::uint32_t kBackboneVersion = 1;

const ConvLayerSpec* as_conv(const BackboneLayer& layer) { return std::get_if<ConvLayerSpec>(&layer); }

Tensor3 normalize_input(const Tensor3& image, const BackboneSpec& spec) {
    Tensor3 x = image;
    const std::size_t c = spec.input_channels;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = (x[i] - spec.mean[i % c]) / spec.scale[i % c];
    return x;
}

// Orthonormal rows via two passes of modified Gram-Schmidt on Gaussian draws.
std::vector<double> orthonormal_rows(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    if (rows > cols) {
        throw ConfigError("cannot build " + std::to_string(rows) + " orthonormal rows of length " +
                          std::to_string(cols));
    }
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> m(rows * cols);
    for (double& v : m) v = normal(rng);
    for (std::size_t r = 0; r < rows; ++r) {
        double* row = m.data() + r * cols;
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t p = 0; p < r; ++p) {
                const double* prev = m.data() + p * cols;
                double proj = 0.0;
                for (std::size_t k = 0; k < cols; ++k) proj += row[k] * prev[k];
                for (std::size_t k = 0; k < cols; ++k) row[k] -= proj * prev[k];
            }
        }
        double norm = 0.0;
        for (std::size_t k = 0; k < cols; ++k) norm += row[k] * row[k];
        norm = std::sqrt(norm);
        if (norm < 1e-12) throw ConfigError("orthonormalization failed: degenerate draw");
        for (std::size_t k = 0; k < cols; ++k) row[k] /= norm;
    }
    return m;
}

double rms(const Tensor3& t) {
    if (t.empty()) return 0.0;
    return std::sqrt(dot(t.values(), t.values()) / static_cast<double>(t.size()));
}

}  // namespace

std::vector<std::size_t> BackboneSpec::tap_channels() const {
    std::vector<std::size_t> out;
    for (std::size_t t : taps) out.push_back(std::get<ConvLayerSpec>(layers.at(t)).out_channels);
    return out;
}

void validate(const BackboneSpec& spec) {
    if (spec.taps.empty()) throw ConfigError("backbone: at least one tap is required");
    if (spec.input_channels == 0) throw ConfigError("backbone: zero input channels");
    if (spec.mean.size() != spec.input_channels || spec.scale.size() != spec.input_channels) {
        throw ConfigError("backbone: normalization needs one mean and scale per input channel");
    }
    for (double s : spec.scale) {
        if (!(std::isfinite(s) && s != 0.0)) throw ConfigError("backbone: normalization scale must be finite, nonzero");
    }
    if (!all_finite(spec.mean)) throw ConfigError("backbone: non-finite normalization mean");

    std::size_t channels = spec.input_channels;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        if (const ConvLayerSpec* conv = as_conv(spec.layers[i])) {
            validate(*conv);
            if (conv->in_channels != channels) {
                throw ConfigError("backbone: layer " + std::to_string(i) + " expects " +
                                  std::to_string(conv->in_channels) + " channels but receives " +
                                  std::to_string(channels));
            }
            channels = conv->out_channels;
        }
    }
    for (std::size_t k = 0; k < spec.taps.size(); ++k) {
        const std::size_t t = spec.taps[k];
        if (t >= spec.layers.size()) throw ConfigError("backbone: tap index out of range");
        if (k > 0 && t <= spec.taps[k - 1]) throw ConfigError("backbone: taps must be strictly increasing");
        const ConvLayerSpec* conv = as_conv(spec.layers[t]);
        if (conv == nullptr || conv->activation != Activation::relu) {
            throw ConfigError("backbone: tap " + std::to_string(t) + " is not a relu conv layer");
        }
    }
}

FeatureStack forward_taps(const Tensor3& image, const BackboneSpec& spec) {
    validate(spec);
    if (image.channels() != spec.input_channels) {
        throw ConfigError("backbone: image has " + std::to_string(image.channels()) + " channels, expected " +
                          std::to_string(spec.input_channels));
    }
    require_finite(image, "backbone input image");

    FeatureStack stack;
    stack.image_h = image.height();
    stack.image_w = image.width();
    Tensor3 x = normalize_input(image, spec);
    const std::size_t last = spec.taps.back();
    std::size_t next_tap = 0;
    for (std::size_t i = 0; i <= last; ++i) {
        FeatureStack::LayerRecord rec{x.height(), x.width(), {}, {}};
        if (const ConvLayerSpec* conv = as_conv(spec.layers[i])) {
            rec.preactivation = conv2d_preactivation(x, *conv);
            x = conv->activation == Activation::relu ? relu(rec.preactivation) : rec.preactivation;
        } else {
            PoolResult pooled = maxpool2_forward(x);
            rec.pool = std::move(pooled.record);
            x = std::move(pooled.output);
        }
        stack.records.push_back(std::move(rec));
        if (spec.taps[next_tap] == i) {
            stack.taps.push_back(x);
            ++next_tap;
        }
    }
    return stack;
}

Tensor3 backward_to_image(const FeatureStack& stack, const BackboneSpec& spec, const std::vector<Tensor3>& tap_grads) {
    if (tap_grads.size() != spec.taps.size() || stack.taps.size() != spec.taps.size()) {
        throw ConfigError("backward_to_image: expected " + std::to_string(spec.taps.size()) + " tap gradients");
    }
    for (std::size_t k = 0; k < tap_grads.size(); ++k) {
        if (!tap_grads[k].same_shape(stack.taps[k])) {
            throw ConfigError("backward_to_image: tap " + std::to_string(k) + " gradient has shape " +
                              tap_grads[k].shape_string() + ", activation is " + stack.taps[k].shape_string());
        }
    }

    std::size_t next_tap = spec.taps.size();
    Tensor3 grad;
    for (std::size_t i = spec.taps.back() + 1; i-- > 0;) {
        if (next_tap > 0 && spec.taps[next_tap - 1] == i) {
            --next_tap;
            if (grad.empty()) {
                grad = tap_grads[next_tap];
            } else {
                for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += tap_grads[next_tap][j];
            }
        }
        const FeatureStack::LayerRecord& rec = stack.records[i];
        if (const ConvLayerSpec* conv = as_conv(spec.layers[i])) {
            grad = conv2d_backward_from_preactivation(rec.in_h, rec.in_w, *conv, rec.preactivation, grad);
        } else {
            grad = maxpool2_backward(rec.pool, grad);
        }
    }
    const std::size_t c = spec.input_channels;
    for (std::size_t j = 0; j < grad.size(); ++j) grad[j] /= spec.scale[j % c];
    return grad;
}

std::vector<std::uint32_t> activation_pattern(const FeatureStack& stack) {
    std::vector<std::uint32_t> pattern;
    for (const FeatureStack::LayerRecord& rec : stack.records) {
        if (!rec.preactivation.empty()) {
            std::uint32_t word = 0;
            int bit = 0;
            for (double v : rec.preactivation.values()) {
                if (v > 0.0) word |= 1u << bit;
                if (++bit == 32) {
                    pattern.push_back(word);
                    word = 0;
                    bit = 0;
                }
            }
            pattern.push_back(word);
        } else {
            pattern.insert(pattern.end(), rec.pool.argmax.begin(), rec.pool.argmax.end());
        }
    }
    return pattern;
}

std::vector<double> gabor_kernel(std::size_t index, std::size_t size) {
    constexpr std::size_t kOrientations = 8;
    const double theta = std::numbers::pi * static_cast<double>(index % kOrientations) / kOrientations;
    const double wavelength = 4.0 + 2.0 * static_cast<double>(index / kOrientations);
    const double sigma = 0.5 * wavelength;
    const double half = static_cast<double>(size / 2);
    std::vector<double> k(size * size);
    double mean = 0.0;
    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            const double dx = static_cast<double>(x) - half;
            const double dy = static_cast<double>(y) - half;
            const double along = dx * std::cos(theta) + dy * std::sin(theta);
            const double across = -dx * std::sin(theta) + dy * std::cos(theta);
            const double v = std::exp(-(along * along + across * across) / (2.0 * sigma * sigma)) *
                             std::cos(2.0 * std::numbers::pi * along / wavelength);
            k[y * size + x] = v;
            mean += v;
        }
    }
    mean /= static_cast<double>(k.size());
    double norm = 0.0;
    for (double& v : k) {
        v -= mean;
        norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : k) v /= norm;
    return k;
}

BackboneSpec make_filter_bank(FilterBankKind kind, const BackboneShape& shape, std::uint64_t seed) {
    if (shape.input_channels == 0 || shape.block_channels.empty() || shape.convs_per_block == 0) {
        throw ConfigError("filter bank: empty shape");
    }
    if (shape.kernel % 2 == 0 || shape.gabor_kernel % 2 == 0) throw ConfigError("filter bank: kernels must be odd");

    std::mt19937_64 rng(seed);
    BackboneSpec spec;
    spec.input_channels = shape.input_channels;
    spec.mean.assign(shape.input_channels, 0.5);
    spec.scale.assign(shape.input_channels, 0.5);

    // Calibrate each layer on a constant-1 image as it is appended.
    constexpr std::size_t kCalibrationSize = 32;
    Tensor3 probe(kCalibrationSize, kCalibrationSize, shape.input_channels, 1.0);
    for (double& v : probe.storage()) v = (v - 0.5) / 0.5;

    std::size_t channels = shape.input_channels;
    for (std::size_t b = 0; b < shape.block_channels.size(); ++b) {
        if (b > 0) {
            spec.layers.emplace_back(MaxPool2{});
            if (probe.height() % 2 == 0 && probe.width() % 2 == 0) probe = maxpool2_forward(probe).output;
        }
        for (std::size_t l = 0; l < shape.convs_per_block; ++l) {
            const bool use_gabor = kind == FilterBankKind::gabor && b == 0 && l == 0;
            ConvLayerSpec conv;
            conv.in_channels = channels;
            conv.out_channels = shape.block_channels[b];
            conv.kernel_h = conv.kernel_w = use_gabor ? shape.gabor_kernel : shape.kernel;
            conv.padding = conv.kernel_h / 2;
            conv.stride = 1;
            conv.activation = Activation::relu;
            conv.bias.assign(conv.out_channels, 0.0);
            const std::size_t area = conv.kernel_h * conv.kernel_w;
            if (use_gabor) {
                conv.weights.resize(conv.out_channels * channels * area);
                const double share = 1.0 / std::sqrt(static_cast<double>(channels));
                for (std::size_t o = 0; o < conv.out_channels; ++o) {
                    const std::vector<double> g = gabor_kernel(o, conv.kernel_h);
                    for (std::size_t c = 0; c < channels; ++c) {
                        for (std::size_t k = 0; k < area; ++k) conv.weights[(o * channels + c) * area + k] = g[k] * share;
                    }
                }
            } else {
                conv.weights = orthonormal_rows(conv.out_channels, channels * area, rng);
            }
            const double level = rms(conv2d_forward(probe, conv));
            if (level > 0.0) {
                for (double& w : conv.weights) w /= level;
            }
            probe = conv2d_forward(probe, conv);
            channels = conv.out_channels;
            spec.layers.emplace_back(std::move(conv));
        }
        spec.taps.push_back(spec.layers.size() - 1);
    }
    validate(spec);
    return spec;
}

BackboneSpec quantize(const BackboneSpec& spec) {
    BackboneSpec q = spec;
    for (BackboneLayer& layer : q.layers) {
        if (ConvLayerSpec* conv = std::get_if<ConvLayerSpec>(&layer)) {
            for (double& w : conv->weights) w = to_float_precision(w);
            for (double& w : conv->bias) w = to_float_precision(w);
        }
    }
    for (double& v : q.mean) v = to_float_precision(v);
    for (double& v : q.scale) v = to_float_precision(v);
    return q;
}

Bytes encode_backbone(const BackboneSpec& spec) {
    validate(spec);
    ByteWriter w;
    w.magic("TXBB");
    w.u32(kBackboneVersion);
    w.u32(static_cast<std::uint32_t>(spec.layers.size()));
    for (const BackboneLayer& layer : spec.layers) {
        if (const ConvLayerSpec* conv = as_conv(layer)) {
            w.u8(0);
            w.u32(static_cast<std::uint32_t>(conv->in_channels));
            w.u32(static_cast<std::uint32_t>(conv->out_channels));
            w.u32(static_cast<std::uint32_t>(conv->kernel_h));
            w.u32(static_cast<std::uint32_t>(conv->kernel_w));
            w.u32(static_cast<std::uint32_t>(conv->stride));
            w.u32(static_cast<std::uint32_t>(conv->padding));
            w.u8(static_cast<std::uint8_t>(conv->activation));
            w.f32_array(conv->weights);
            w.f32_array(conv->bias);
        } else {
            w.u8(1);
        }
    }
    w.u32(static_cast<std::uint32_t>(spec.taps.size()));
    for (std::size_t t : spec.taps) w.u32(static_cast<std::uint32_t>(t));
    w.f32_array(spec.mean);
    w.f32_array(spec.scale);
    return w.take();
}

BackboneSpec decode_backbone(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    r.expect_magic("TXBB");
    const std::size_t version_at = r.offset();
    if (const std::uint32_t version = r.u32("version"); version != kBackboneVersion) {
        throw FormatError("unsupported backbone version " + std::to_string(version), version_at);
    }
    BackboneSpec spec;
    const std::uint32_t layer_count = r.u32("layer count");
    std::size_t input_channels = 0;
    for (std::uint32_t i = 0; i < layer_count; ++i) {
        const std::string name = "layer " + std::to_string(i);
        const std::size_t type_at = r.offset();
        const std::uint8_t type = r.u8(name.c_str());
        if (type == 1) {
            spec.layers.emplace_back(MaxPool2{});
            continue;
        }
        if (type != 0) throw FormatError(name + ": unknown layer type " + std::to_string(type), type_at);
        ConvLayerSpec conv;
        conv.in_channels = r.u32(name.c_str());
        conv.out_channels = r.u32(name.c_str());
        conv.kernel_h = r.u32(name.c_str());
        conv.kernel_w = r.u32(name.c_str());
        conv.stride = r.u32(name.c_str());
        conv.padding = r.u32(name.c_str());
        const std::size_t act_at = r.offset();
        const std::uint8_t act = r.u8(name.c_str());
        if (act > 1) throw FormatError(name + ": unknown activation " + std::to_string(act), act_at);
        conv.activation = static_cast<Activation>(act);
        std::size_t count = conv.out_channels;
        for (std::size_t f : {conv.in_channels, conv.kernel_h, conv.kernel_w})
            if (__builtin_mul_overflow(count, f, &count)) throw FormatError(name + ": weight count overflows", act_at);
        conv.weights = r.f32_array(count, name + " weights");
        conv.bias = r.f32_array(conv.out_channels, name + " bias");
        if (input_channels == 0) input_channels = conv.in_channels;
        spec.layers.emplace_back(std::move(conv));
    }
    const std::uint32_t tap_count = r.u32("tap count");
    for (std::uint32_t i = 0; i < tap_count; ++i) spec.taps.push_back(r.u32("tap index"));
    if (input_channels == 0) throw FormatError("backbone has no conv layer", r.offset());
    spec.input_channels = input_channels;
    spec.mean = r.f32_array(input_channels, "normalization mean");
    spec.scale = r.f32_array(input_channels, "normalization scale");
    if (!r.at_end()) throw FormatError("trailing bytes after backbone", r.offset());
    try {
        validate(spec);
    } catch (const ConfigError& e) {
        throw FormatError(std::string("inconsistent backbone: ") + e.what(), r.offset());
    }
    return spec;
}

void save_backbone(const BackboneSpec& spec, const std::filesystem::path& path) {
    write_file_atomic(path, encode_backbone(spec));
}

BackboneSpec load_backbone(const std::filesystem::path& path) { return decode_backbone(read_file(path)); }

}  // namespace texmax
