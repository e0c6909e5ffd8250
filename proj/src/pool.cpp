#include "texmax/pool.hpp"

#include "texmax/error.hpp"

namespace texmax {

PoolResult maxpool2_forward(const Tensor3& input) {
    if (input.height() % 2 != 0 || input.width() % 2 != 0 || input.empty()) {
        throw ConfigError("maxpool2: input " + input.shape_string() + " needs even, nonzero height and width");
    }
    require_finite(input, "maxpool2 input");
    const std::size_t oh = input.height() / 2;
    const std::size_t ow = input.width() / 2;
    const std::size_t ch = input.channels();

    PoolResult r{Tensor3(oh, ow, ch), PoolRecord{input.height(), input.width(), ch, {}}};
    r.record.argmax.resize(r.output.size());
    for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
            for (std::size_t c = 0; c < ch; ++c) {
                std::size_t best = input.index(2 * oy, 2 * ox, c);
                for (std::size_t dy = 0; dy < 2; ++dy) {
                    for (std::size_t dx = 0; dx < 2; ++dx) {
                        const std::size_t idx = input.index(2 * oy + dy, 2 * ox + dx, c);
                        if (input[idx] > input[best]) best = idx;
                    }
                }
                const std::size_t o = r.output.index(oy, ox, c);
                r.output[o] = input[best];
                r.record.argmax[o] = static_cast<std::uint32_t>(best);
            }
        }
    }
    return r;
}

Tensor3 maxpool2_backward(const PoolRecord& record, const Tensor3& grad_output) {
    if (grad_output.height() * 2 != record.in_h || grad_output.width() * 2 != record.in_w ||
        grad_output.channels() != record.channels || grad_output.size() != record.argmax.size()) {
        throw InternalError("maxpool2_backward: gradient " + grad_output.shape_string() +
                            " does not match the pooling record");
    }
    Tensor3 grad_in(record.in_h, record.in_w, record.channels);
    for (std::size_t o = 0; o < grad_output.size(); ++o) grad_in[record.argmax[o]] += grad_output[o];
    return grad_in;
}

}  // namespace texmax
