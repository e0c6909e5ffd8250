#include "texmax/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "texmax/error.hpp"

namespace texmax {

void ByteWriter::magic(std::string_view tag) { buf_.insert(buf_.end(), tag.begin(), tag.end()); }

void ByteWriter::u8(std::uint8_t v) { buf_.push_back(v); }

void ByteWriter::u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::f32_array(std::span<const double> values) {
    for (double v : values) f32(static_cast<float>(v));
}

void ByteWriter::string(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
}

void ByteReader::need(std::size_t n, const std::string& what) {
    if (data_.size() - pos_ < n) throw FormatError("truncated file while reading " + what, pos_);
}

void ByteReader::expect_magic(std::string_view tag) {
    need(tag.size(), "magic");
    if (std::memcmp(data_.data() + pos_, tag.data(), tag.size()) != 0) {
        throw FormatError("bad magic, expected \"" + std::string(tag) + "\"", pos_);
    }
    pos_ += tag.size();
}

std::uint8_t ByteReader::u8(const char* what) {
    need(1, what);
    return data_[pos_++];
}

std::uint32_t ByteReader::u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
}

float ByteReader::f32(const char* what) { return std::bit_cast<float>(u32(what)); }

std::vector<double> ByteReader::f32_array(std::size_t count, const std::string& what) {
    if (count > (data_.size() - pos_) / 4) throw FormatError("truncated file while reading " + what, pos_);
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = f32(what.c_str());
    return out;
}

std::string ByteReader::string(const char* what) {
    const std::uint32_t n = u32(what);
    need(n, what);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
}

double to_float_precision(double v) noexcept { return static_cast<double>(static_cast<float>(v)); }

Bytes read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw DataError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
    write_file_atomic(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()),
                                                          text.size()));
}

}  // namespace texmax
