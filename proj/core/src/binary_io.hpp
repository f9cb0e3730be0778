#pragma once

#include "ltx/error.hpp"

#include <bit>
#include <cstdint>
#include <string>
#include <string_view>

namespace ltx::detail {

class ByteWriter {
public:
    void bytes(std::string_view s) { out_.append(s); }
    void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
    void u16(std::uint16_t v) { little(v, 2); }
    void u32(std::uint32_t v) { little(v, 4); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

    std::string take() { return std::move(out_); }

private:
    void little(std::uint64_t v, int width)
    {
        for (int i = 0; i < width; ++i) {
            out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFU));
        }
    }

    std::string out_;
};

/// Bounds-checked little-endian reader; failures name the section being read.
class ByteReader {
public:
    explicit ByteReader(std::string_view data) : data_(data) {}

    void expect_magic(std::string_view magic, const char* format)
    {
        for (std::size_t i = 0; i < magic.size(); ++i) {
            if (i >= data_.size() || data_[i] != magic[i]) {
                throw FormatError(std::string("bad magic for ") + format, i);
            }
        }
        pos_ = magic.size();
    }

    std::string_view bytes(std::size_t n, const char* section)
    {
        need(n, section);
        std::string_view s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::uint8_t u8(const char* section) { return static_cast<std::uint8_t>(little(1, section)); }
    std::uint16_t u16(const char* section) { return static_cast<std::uint16_t>(little(2, section)); }
    std::uint32_t u32(const char* section) { return static_cast<std::uint32_t>(little(4, section)); }
    float f32(const char* section) { return std::bit_cast<float>(u32(section)); }

    std::size_t position() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return data_.size() - pos_; }

    void need(std::size_t n, const char* section) const
    {
        if (remaining() < n) {
            throw FormatError(std::string("truncated file: missing ") + section, data_.size());
        }
    }

private:
    std::uint64_t little(int width, const char* section)
    {
        need(static_cast<std::size_t>(width), section);
        std::uint64_t v = 0;
        for (int i = 0; i < width; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + static_cast<std::size_t>(i)]))
                 << (8 * i);
        }
        pos_ += static_cast<std::size_t>(width);
        return v;
    }

    std::string_view data_;
    std::size_t pos_ = 0;
};

}  // namespace ltx::detail
