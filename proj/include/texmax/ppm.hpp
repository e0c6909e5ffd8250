#pragma once

#include <filesystem>
#include <span>

#include "texmax/binary_io.hpp"
#include "texmax/tensor.hpp"

namespace texmax {

/// Binary P6 with maxval 255 only. Values become v / 255.
Tensor3 decode_ppm(std::span<const std::uint8_t> bytes);

/// Canonical P6: "P6\n<w> <h>\n255\n" then RGB bytes, round(v * 255) clamped.
/// Single-channel tensors are replicated to RGB.
Bytes encode_ppm(const Tensor3& image);

Tensor3 read_ppm(const std::filesystem::path& path);
void write_ppm(const Tensor3& image, const std::filesystem::path& path);

}  // namespace texmax
