#include "texmax/conv.hpp"

#include <cmath>
#include <string>

#include "texmax/error.hpp"

namespace texmax {

namespace {

void check_input(const Tensor3& input, const ConvLayerSpec& layer) {
    validate(layer);
    if (input.channels() != layer.in_channels) {
        throw ConfigError("conv2d: input has " + std::to_string(input.channels()) + " channels, layer expects " +
                          std::to_string(layer.in_channels));
    }
    if (input.height() + 2 * layer.padding < layer.kernel_h || input.width() + 2 * layer.padding < layer.kernel_w) {
        throw ConfigError("conv2d: input " + input.shape_string() + " too small for kernel");
    }
}

}  // namespace

void validate(const ConvLayerSpec& layer) {
    if (layer.in_channels == 0 || layer.out_channels == 0) throw ConfigError("conv layer: zero channels");
    if (layer.kernel_h % 2 == 0 || layer.kernel_w % 2 == 0) throw ConfigError("conv layer: kernel dims must be odd");
    if (layer.stride == 0) throw ConfigError("conv layer: stride must be positive");
    const std::size_t expected = layer.out_channels * layer.in_channels * layer.kernel_h * layer.kernel_w;
    if (layer.weights.size() != expected) {
        throw ConfigError("conv layer: expected " + std::to_string(expected) + " weights, got " +
                          std::to_string(layer.weights.size()));
    }
    if (layer.bias.size() != layer.out_channels) throw ConfigError("conv layer: bias length mismatch");
    if (!all_finite(layer.weights) || !all_finite(layer.bias)) throw ConfigError("conv layer: non-finite weights");
}

Tensor3 conv2d_preactivation(const Tensor3& input, const ConvLayerSpec& layer) {
    check_input(input, layer);
    require_finite(input, "conv2d input");

    const long in_h = static_cast<long>(input.height());
    const long in_w = static_cast<long>(input.width());
    const long cin = static_cast<long>(layer.in_channels);
    const long cout = static_cast<long>(layer.out_channels);
    const long kh = static_cast<long>(layer.kernel_h);
    const long kw = static_cast<long>(layer.kernel_w);
    const long stride = static_cast<long>(layer.stride);
    const long pad = static_cast<long>(layer.padding);
    const long out_h = static_cast<long>(layer.output_height(input.height()));
    const long out_w = static_cast<long>(layer.output_width(input.width()));

    Tensor3 out(out_h, out_w, cout);
    const double* x = input.storage().data();
    const double* w = layer.weights.data();
    double* y = out.storage().data();

    // Each output element is owned by one iteration and summed in a fixed order,
    // so results do not depend on the thread count.
#pragma omp parallel for schedule(static)
    for (long oy = 0; oy < out_h; ++oy) {
        for (long ox = 0; ox < out_w; ++ox) {
            double* yo = y + (oy * out_w + ox) * cout;
            for (long o = 0; o < cout; ++o) yo[o] = layer.bias[o];
            for (long ky = 0; ky < kh; ++ky) {
                const long iy = oy * stride + ky - pad;
                if (iy < 0 || iy >= in_h) continue;
                for (long kx = 0; kx < kw; ++kx) {
                    const long ix = ox * stride + kx - pad;
                    if (ix < 0 || ix >= in_w) continue;
                    const double* xi = x + (iy * in_w + ix) * cin;
                    for (long o = 0; o < cout; ++o) {
                        const double* wo = w + (o * cin * kh + ky) * kw + kx;
                        double acc = 0.0;
                        for (long c = 0; c < cin; ++c) acc += wo[c * kh * kw] * xi[c];
                        yo[o] += acc;
                    }
                }
            }
        }
    }
    return out;
}

Tensor3 relu(const Tensor3& x) {
    Tensor3 y = x;
    for (double& v : y.storage()) v = v > 0.0 ? v : 0.0;
    return y;
}

Tensor3 conv2d_forward(const Tensor3& input, const ConvLayerSpec& layer) {
    Tensor3 pre = conv2d_preactivation(input, layer);
    if (layer.activation == Activation::relu) return relu(pre);
    return pre;
}

Tensor3 conv2d_backward_from_preactivation(std::size_t in_h_u, std::size_t in_w_u, const ConvLayerSpec& layer,
                                           const Tensor3& preactivation, const Tensor3& grad_output) {
    if (!grad_output.same_shape(preactivation) ||
        grad_output.height() != layer.output_height(in_h_u) || grad_output.width() != layer.output_width(in_w_u) ||
        grad_output.channels() != layer.out_channels) {
        throw ConfigError("conv2d_backward: grad_output shape " + grad_output.shape_string() +
                          " does not match forward output");
    }

    const long in_h = static_cast<long>(in_h_u);
    const long in_w = static_cast<long>(in_w_u);
    const long cin = static_cast<long>(layer.in_channels);
    const long cout = static_cast<long>(layer.out_channels);
    const long kh = static_cast<long>(layer.kernel_h);
    const long kw = static_cast<long>(layer.kernel_w);
    const long stride = static_cast<long>(layer.stride);
    const long pad = static_cast<long>(layer.padding);
    const long out_h = static_cast<long>(grad_output.height());
    const long out_w = static_cast<long>(grad_output.width());

    // Gate the cotangent by the activation derivative once.
    Tensor3 delta = grad_output;
    if (layer.activation == Activation::relu) {
        for (std::size_t i = 0; i < delta.size(); ++i) {
            if (!(preactivation[i] > 0.0)) delta[i] = 0.0;
        }
    }

    Tensor3 grad_in(in_h, in_w, cin);
    const double* d = delta.storage().data();
    const double* w = layer.weights.data();
    double* g = grad_in.storage().data();

    // Gather form: every input element collects from the outputs that read it.
#pragma omp parallel for schedule(static)
    for (long iy = 0; iy < in_h; ++iy) {
        for (long ix = 0; ix < in_w; ++ix) {
            double* gi = g + (iy * in_w + ix) * cin;
            for (long ky = 0; ky < kh; ++ky) {
                const long ny = iy + pad - ky;
                if (ny < 0 || ny % stride != 0) continue;
                const long oy = ny / stride;
                if (oy >= out_h) continue;
                for (long kx = 0; kx < kw; ++kx) {
                    const long nx = ix + pad - kx;
                    if (nx < 0 || nx % stride != 0) continue;
                    const long ox = nx / stride;
                    if (ox >= out_w) continue;
                    const double* dout = d + (oy * out_w + ox) * cout;
                    for (long c = 0; c < cin; ++c) {
                        double acc = 0.0;
                        for (long o = 0; o < cout; ++o) acc += w[((o * cin + c) * kh + ky) * kw + kx] * dout[o];
                        gi[c] += acc;
                    }
                }
            }
        }
    }
    return grad_in;
}

Tensor3 conv2d_backward(const Tensor3& input, const ConvLayerSpec& layer, const Tensor3& grad_output) {
    Tensor3 pre = conv2d_preactivation(input, layer);
    return conv2d_backward_from_preactivation(input.height(), input.width(), layer, pre, grad_output);
}

}  // namespace texmax
