#pragma once

#include <cstdint>
#include <vector>

#include "texmax/tensor.hpp"

namespace texmax {

/// Winning input index (flat, into the forward input) for every pooled output element.
struct PoolRecord {
    std::size_t in_h = 0;
    std::size_t in_w = 0;
    std::size_t channels = 0;
    std::vector<std::uint32_t> argmax;
};

struct PoolResult {
    Tensor3 output;
    PoolRecord record;
};

/// 2x2 window, stride 2, per-channel max. Ties resolve to the first element in
/// row-major scan order. Requires even height and width.
PoolResult maxpool2_forward(const Tensor3& input);

/// Scatters each gradient value to its recorded argmax; everything else is zero.
Tensor3 maxpool2_backward(const PoolRecord& record, const Tensor3& grad_output);

}  // namespace texmax
