#pragma once

// Serial, deliberately naive kernels. They share no code with the OpenMP
// implementations and serve as oracles in tests and as the benchmark baseline.

#include <vector>

#include "texmax/conv.hpp"
#include "texmax/tensor.hpp"

namespace texmax::reference {

/// Nested loops over (output row, output col, out channel, in channel, ky, kx).
Tensor3 conv2d_forward(const Tensor3& input, const ConvLayerSpec& layer);

/// Scatter-form input gradient.
Tensor3 conv2d_backward(const Tensor3& input, const ConvLayerSpec& layer, const Tensor3& grad_output);

/// (1/N) sum_n phi_n phi_n^T accumulated position by position; D x D row-major.
std::vector<double> second_moment(const Tensor3& feat);

}  // namespace texmax::reference
