#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace cosmolod {

/// SplitMix64 finalizer: a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

/// Counter-based hash of a key tuple. Order matters.
constexpr std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) noexcept
{
    return mix64(seed ^ mix64(value));
}

template <typename... Rest>
constexpr std::uint64_t hash_keys(std::uint64_t first, Rest... rest) noexcept
{
    std::uint64_t h = mix64(first);
    ((h = hash_combine(h, static_cast<std::uint64_t>(rest))), ...);
    return h;
}

/// Uniform deviate in (0, 1] from 53 high bits of `h`.
constexpr double unit_open_closed(std::uint64_t h) noexcept
{
    return double((h >> 11) + 1) * 0x1.0p-53;
}

/// Uniform deviate in (0, 1) from 52 high bits of `h`.
constexpr double unit_open(std::uint64_t h) noexcept
{
    return (double(h >> 12) + 0.5) * 0x1.0p-52;
}

/// CRC-32 with the IEEE 802.3 polynomial.
std::uint32_t crc32_ieee(std::span<const std::byte> bytes) noexcept;

} // namespace cosmolod
