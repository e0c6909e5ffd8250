#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace texmax {

/// Dense H x W x C tensor in double precision, row-major by (row, column, channel).
///
/// Holds images (the optimization variable during synthesis) as well as every
/// intermediate activation map.
class Tensor3 {
public:
    Tensor3() = default;
    Tensor3(std::size_t height, std::size_t width, std::size_t channels, double fill = 0.0);
    Tensor3(std::size_t height, std::size_t width, std::size_t channels, std::vector<double> values);

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t channels() const noexcept { return channels_; }
    std::size_t size() const noexcept { return values_.size(); }
    std::size_t positions() const noexcept { return height_ * width_; }
    bool empty() const noexcept { return values_.empty(); }

    std::size_t index(std::size_t row, std::size_t col, std::size_t ch) const noexcept {
        return (row * width_ + col) * channels_ + ch;
    }
    double& at(std::size_t row, std::size_t col, std::size_t ch) noexcept {
        return values_[index(row, col, ch)];
    }
    double at(std::size_t row, std::size_t col, std::size_t ch) const noexcept {
        return values_[index(row, col, ch)];
    }

    double& operator[](std::size_t i) noexcept { return values_[i]; }
    double operator[](std::size_t i) const noexcept { return values_[i]; }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }
    std::vector<double>& storage() noexcept { return values_; }
    const std::vector<double>& storage() const noexcept { return values_; }

    bool same_shape(const Tensor3& other) const noexcept {
        return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
    }
    std::string shape_string() const;

    bool operator==(const Tensor3& other) const = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::size_t channels_ = 0;
    std::vector<double> values_;
};

/// Throws NumericError naming `what` if any value is NaN or infinite.
void require_finite(const Tensor3& t, const char* what);
bool all_finite(std::span<const double> v) noexcept;

double dot(std::span<const double> a, std::span<const double> b) noexcept;
double l2_norm(std::span<const double> v) noexcept;

}  // namespace texmax
