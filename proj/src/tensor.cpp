#include "texmax/tensor.hpp"

#include <cmath>

#include "texmax/error.hpp"

namespace texmax {

Tensor3::Tensor3(std::size_t height, std::size_t width, std::size_t channels, double fill)
    : height_(height), width_(width), channels_(channels), values_(height * width * channels, fill) {}

Tensor3::Tensor3(std::size_t height, std::size_t width, std::size_t channels, std::vector<double> values)
    : height_(height), width_(width), channels_(channels), values_(std::move(values)) {
    if (values_.size() != height * width * channels) {
        throw ConfigError("tensor value count " + std::to_string(values_.size()) +
                          " does not match shape " + shape_string());
    }
}

std::string Tensor3::shape_string() const {
    return std::to_string(height_) + "x" + std::to_string(width_) + "x" + std::to_string(channels_);
}

bool all_finite(std::span<const double> v) noexcept {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

void require_finite(const Tensor3& t, const char* what) {
    if (!all_finite(t.values())) {
        throw NumericError(std::string("non-finite value in ") + what);
    }
}

double dot(std::span<const double> a, std::span<const double> b) noexcept {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double l2_norm(std::span<const double> v) noexcept { return std::sqrt(dot(v, v)); }

}  // namespace texmax
