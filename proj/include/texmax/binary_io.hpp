#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace texmax {

using Bytes = std::vector<std::uint8_t>;

/// Little-endian append-only encoder for the TXBB/TXHD formats.
class ByteWriter {
public:
    void magic(std::string_view tag);
    void u8(std::uint8_t v);
    void u32(std::uint32_t v);
    void f32(float v);
    void f32_array(std::span<const double> values);
    void string(std::string_view s);  // u32 length + UTF-8 bytes

    const Bytes& bytes() const noexcept { return buf_; }
    Bytes take() noexcept { return std::move(buf_); }

private:
    Bytes buf_;
};

/// Little-endian decoder that reports the failing byte offset and what it was reading.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

    void expect_magic(std::string_view tag);
    std::uint8_t u8(const char* what);
    std::uint32_t u32(const char* what);
    float f32(const char* what);
    std::vector<double> f32_array(std::size_t count, const std::string& what);
    std::string string(const char* what);

    std::size_t offset() const noexcept { return pos_; }
    bool at_end() const noexcept { return pos_ == data_.size(); }

private:
    void need(std::size_t n, const std::string& what);

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

/// Rounds through float32, the precision used by the weight files.
double to_float_precision(double v) noexcept;

Bytes read_file(const std::filesystem::path& path);

/// Writes to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

}  // namespace texmax
