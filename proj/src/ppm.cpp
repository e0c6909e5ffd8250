#include "texmax/ppm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "texmax/error.hpp"

namespace texmax {

namespace {

class HeaderParser {
public:
    explicit HeaderParser(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else if (std::isspace(bytes_[pos_])) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    std::size_t number(const char* what) {
        skip_space_and_comments();
        const std::size_t start = pos_;
        std::size_t v = 0;
        while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
            v = v * 10 + (bytes_[pos_] - '0');
            if (v > (1u << 24)) throw FormatError(std::string("PPM ") + what + " too large", start);
            ++pos_;
        }
        if (pos_ == start) throw FormatError(std::string("PPM: expected ") + what, start);
        return v;
    }

    std::size_t pos_ = 0;
    std::span<const std::uint8_t> bytes_;
};

}  // namespace

Tensor3 decode_ppm(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
        throw FormatError("unsupported image: only binary PPM (P6) is accepted", 0);
    }
    HeaderParser p(bytes);
    p.pos_ = 2;
    const std::size_t width = p.number("width");
    const std::size_t height = p.number("height");
    p.skip_space_and_comments();
    const std::size_t maxval_at = p.pos_;
    const std::size_t maxval = p.number("maxval");
    if (maxval != 255) throw FormatError("PPM maxval must be 255, got " + std::to_string(maxval), maxval_at);
    if (width == 0 || height == 0) throw FormatError("PPM has zero size", maxval_at);
    if (p.pos_ >= bytes.size() || !std::isspace(bytes[p.pos_])) {
        throw FormatError("PPM header must end with a single whitespace byte", p.pos_);
    }
    ++p.pos_;
    const std::size_t need = width * height * 3;
    if (bytes.size() - p.pos_ < need) {
        throw FormatError("truncated PPM payload: need " + std::to_string(need) + " bytes, have " +
                              std::to_string(bytes.size() - p.pos_),
                          bytes.size());
    }
    Tensor3 image(height, width, 3);
    for (std::size_t i = 0; i < need; ++i) image[i] = bytes[p.pos_ + i] / 255.0;
    return image;
}

Bytes encode_ppm(const Tensor3& image) {
    if (image.channels() != 3 && image.channels() != 1) {
        throw ConfigError("encode_ppm: need 1 or 3 channels, got " + std::to_string(image.channels()));
    }
    const std::string header =
        "P6\n" + std::to_string(image.width()) + " " + std::to_string(image.height()) + "\n255\n";
    Bytes out(header.begin(), header.end());
    out.reserve(out.size() + image.positions() * 3);
    for (std::size_t p = 0; p < image.positions(); ++p) {
        for (std::size_t c = 0; c < 3; ++c) {
            const double v = image[p * image.channels() + (image.channels() == 3 ? c : 0)];
            const double scaled = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
            out.push_back(static_cast<std::uint8_t>(std::isfinite(scaled) ? scaled : 0.0));
        }
    }
    return out;
}

Tensor3 read_ppm(const std::filesystem::path& path) {
    const Bytes bytes = read_file(path);
    try {
        return decode_ppm(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.detail(), e.offset());
    }
}

void write_ppm(const Tensor3& image, const std::filesystem::path& path) { write_file_atomic(path, encode_ppm(image)); }

}  // namespace texmax
