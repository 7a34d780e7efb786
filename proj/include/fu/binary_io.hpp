#pragma once

// Little-endian and big-endian byte codecs for the on-disk formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fu/error.hpp"

namespace fu {

class ByteWriter {
public:
    void put_bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
    void put_u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void put_u32(std::uint32_t v) { put_le(v); }
    void put_u64(std::uint64_t v) { put_le(v); }
    void put_f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }
    void put_u32_be(std::uint32_t v) {
        for (int s = 24; s >= 0; s -= 8) buf_.push_back(static_cast<char>((v >> s) & 0xff));
    }

    const std::vector<char>& bytes() const noexcept { return buf_; }
    std::vector<char> take() noexcept { return std::move(buf_); }

private:
    template <typename T>
    void put_le(T v) {
        for (std::size_t i = 0; i < sizeof(T); ++i)
            buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }

    std::vector<char> buf_;
};

class ByteReader {
public:
    ByteReader(std::span<const char> data, std::string context)
        : data_(data), context_(std::move(context)) {}

    std::string_view get_bytes(std::size_t n) {
        need(n);
        std::string_view out(data_.data() + pos_, n);
        pos_ += n;
        return out;
    }
    std::uint8_t get_u8() {
        need(1);
        return static_cast<std::uint8_t>(data_[pos_++]);
    }
    std::uint32_t get_u32() { return get_le<std::uint32_t>(); }
    std::uint64_t get_u64() { return get_le<std::uint64_t>(); }
    double get_f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }
    std::uint32_t get_u32_be() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v = (v << 8) | static_cast<std::uint8_t>(data_[pos_++]);
        return v;
    }

    std::size_t remaining() const noexcept { return data_.size() - pos_; }
    const std::string& context() const noexcept { return context_; }

    void need(std::size_t n) const {
        if (remaining() < n)
            throw FormatError(context_ + ": truncated (need " + std::to_string(n) + " bytes at offset " +
                              std::to_string(pos_) + ", have " + std::to_string(remaining()) + ")");
    }

private:
    template <typename T>
    T get_le() {
        need(sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i)
            v |= static_cast<T>(static_cast<std::uint8_t>(data_[pos_ + i])) << (8 * i);
        pos_ += sizeof(T);
        return v;
    }

    std::span<const char> data_;
    std::string context_;
    std::size_t pos_ = 0;
};

std::vector<char> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const char> bytes);

} // namespace fu
