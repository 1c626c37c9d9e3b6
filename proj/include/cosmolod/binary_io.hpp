#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace cosmolod {

/// Raised for malformed or truncated binary records.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

template <typename T>
T byteswap_if_needed(T value) noexcept
{
    if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
        return value;
    } else {
        auto bytes = std::bit_cast<std::array<std::byte, sizeof(T)>>(value);
        std::reverse(bytes.begin(), bytes.end());
        return std::bit_cast<T>(bytes);
    }
}

} // namespace detail

/// Appends little-endian scalars to a byte buffer.
class ByteWriter {
public:
    explicit ByteWriter(std::vector<std::byte>& out) : out_(out) {}

    template <typename T>
        requires std::is_arithmetic_v<T>
    void put(T value)
    {
        const T le = detail::byteswap_if_needed(value);
        append(&le, sizeof(T));
    }

    template <typename T>
        requires std::is_arithmetic_v<T>
    void put_array(std::span<const T> values)
    {
        if constexpr (std::endian::native == std::endian::little) {
            append(values.data(), values.size_bytes());
        } else {
            for (T v : values)
                put(v);
        }
    }

    void put_bytes(std::span<const std::byte> bytes) { append(bytes.data(), bytes.size()); }
    void put_zeros(std::size_t n) { out_.insert(out_.end(), n, std::byte{0}); }
    void align(std::size_t alignment)
    {
        while (out_.size() % alignment != 0)
            out_.push_back(std::byte{0});
    }

    std::size_t size() const noexcept { return out_.size(); }

private:
    void append(const void* data, std::size_t n)
    {
        if (n == 0)
            return;
        const std::size_t old = out_.size();
        out_.resize(old + n);
        std::memcpy(out_.data() + old, data, n);
    }

    std::vector<std::byte>& out_;
};

/// Reads little-endian scalars from a byte span, throwing FormatError on truncation.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::byte> in, std::string what = "record")
        : in_(in), what_(std::move(what))
    {
    }

    template <typename T>
        requires std::is_arithmetic_v<T>
    T get()
    {
        require(sizeof(T));
        T value;
        std::memcpy(&value, in_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return detail::byteswap_if_needed(value);
    }

    template <typename T>
        requires std::is_arithmetic_v<T>
    void get_array(std::span<T> out)
    {
        require(out.size_bytes());
        std::memcpy(out.data(), in_.data() + pos_, out.size_bytes());
        pos_ += out.size_bytes();
        if constexpr (std::endian::native != std::endian::little)
            for (T& v : out)
                v = detail::byteswap_if_needed(v);
    }

    std::span<const std::byte> get_bytes(std::size_t n)
    {
        require(n);
        auto s = in_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

    void skip(std::size_t n)
    {
        require(n);
        pos_ += n;
    }

    std::size_t position() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return in_.size() - pos_; }

private:
    void require(std::size_t n) const
    {
        if (in_.size() - pos_ < n)
            throw FormatError("truncated " + what_ + ": need " + std::to_string(n) + " bytes at offset " +
                              std::to_string(pos_) + ", have " + std::to_string(in_.size() - pos_));
    }

    std::span<const std::byte> in_;
    std::size_t pos_ = 0;
    std::string what_;
};

/// Whole-file helpers; throw std::runtime_error with the path on failure.
std::vector<std::byte> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::span<const std::byte> bytes);

} // namespace cosmolod
