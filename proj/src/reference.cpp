#include "texmax/reference.hpp"

#include "texmax/error.hpp"

namespace texmax::reference {

namespace {

double padded(const Tensor3& x, long r, long c, std::size_t ch) {
    if (r < 0 || c < 0 || r >= static_cast<long>(x.height()) || c >= static_cast<long>(x.width())) return 0.0;
    return x.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c), ch);
}

Tensor3 preactivation(const Tensor3& input, const ConvLayerSpec& layer) {
    if (input.channels() != layer.in_channels) throw ConfigError("reference conv2d: channel mismatch");
    const std::size_t oh = layer.output_height(input.height());
    const std::size_t ow = layer.output_width(input.width());
    Tensor3 out(oh, ow, layer.out_channels);
    const long pad = static_cast<long>(layer.padding);
    const long stride = static_cast<long>(layer.stride);
    for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
            for (std::size_t o = 0; o < layer.out_channels; ++o) {
                double s = layer.bias[o];
                for (std::size_t c = 0; c < layer.in_channels; ++c) {
                    for (std::size_t ky = 0; ky < layer.kernel_h; ++ky) {
                        for (std::size_t kx = 0; kx < layer.kernel_w; ++kx) {
                            const long r = static_cast<long>(oy) * stride + static_cast<long>(ky) - pad;
                            const long q = static_cast<long>(ox) * stride + static_cast<long>(kx) - pad;
                            s += layer.weight(o, c, ky, kx) * padded(input, r, q, c);
                        }
                    }
                }
                out.at(oy, ox, o) = s;
            }
        }
    }
    return out;
}

}  // namespace

Tensor3 conv2d_forward(const Tensor3& input, const ConvLayerSpec& layer) {
    Tensor3 out = preactivation(input, layer);
    if (layer.activation == Activation::relu) {
        for (double& v : out.storage()) v = v > 0.0 ? v : 0.0;
    }
    return out;
}

Tensor3 conv2d_backward(const Tensor3& input, const ConvLayerSpec& layer, const Tensor3& grad_output) {
    const Tensor3 pre = preactivation(input, layer);
    if (!pre.same_shape(grad_output)) throw ConfigError("reference conv2d_backward: shape mismatch");
    Tensor3 grad(input.height(), input.width(), input.channels());
    const long pad = static_cast<long>(layer.padding);
    const long stride = static_cast<long>(layer.stride);
    for (std::size_t oy = 0; oy < pre.height(); ++oy) {
        for (std::size_t ox = 0; ox < pre.width(); ++ox) {
            for (std::size_t o = 0; o < layer.out_channels; ++o) {
                double d = grad_output.at(oy, ox, o);
                if (layer.activation == Activation::relu && !(pre.at(oy, ox, o) > 0.0)) d = 0.0;
                if (d == 0.0) continue;
                for (std::size_t c = 0; c < layer.in_channels; ++c) {
                    for (std::size_t ky = 0; ky < layer.kernel_h; ++ky) {
                        for (std::size_t kx = 0; kx < layer.kernel_w; ++kx) {
                            const long r = static_cast<long>(oy) * stride + static_cast<long>(ky) - pad;
                            const long q = static_cast<long>(ox) * stride + static_cast<long>(kx) - pad;
                            if (r < 0 || q < 0 || r >= static_cast<long>(input.height()) ||
                                q >= static_cast<long>(input.width())) {
                                continue;
                            }
                            grad.at(static_cast<std::size_t>(r), static_cast<std::size_t>(q), c) +=
                                layer.weight(o, c, ky, kx) * d;
                        }
                    }
                }
            }
        }
    }
    return grad;
}

std::vector<double> second_moment(const Tensor3& feat) {
    const std::size_t d = feat.channels();
    const std::size_t n = feat.positions();
    std::vector<double> a(d * d, 0.0);
    for (std::size_t r = 0; r < feat.height(); ++r) {
        for (std::size_t c = 0; c < feat.width(); ++c) {
            for (std::size_t i = 0; i < d; ++i) {
                for (std::size_t j = 0; j < d; ++j) a[i * d + j] += feat.at(r, c, i) * feat.at(r, c, j);
            }
        }
    }
    for (double& v : a) v /= static_cast<double>(n);
    return a;
}

}  // namespace texmax::reference
