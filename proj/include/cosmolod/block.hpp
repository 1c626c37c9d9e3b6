#pragma once

#include "cosmolod/binary_io.hpp"
#include "cosmolod/geometry.hpp"

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace cosmolod {

/// Representative points of one octree node over one timestep interval.
/// Start and end states are quantized against their own boxes.
struct Block {
    NodePath path;
    std::uint32_t interval = 0;
    Aabb box_start{Vec3::Zero(), Vec3::Zero()};
    Aabb box_end{Vec3::Zero(), Vec3::Zero()};
    std::vector<QPos> qpos_start;
    std::vector<QPos> qpos_end;
    std::vector<float> size_start;
    std::vector<float> size_end;
    std::vector<float> weight_start;
    std::vector<float> weight_end;
    std::vector<std::uint64_t> id;

    std::size_t count() const noexcept { return id.size(); }
    void resize(std::size_t m);

    friend bool operator==(const Block&, const Block&);
};

inline constexpr char kBlockMagic[4] = {'C', 'L', 'B', '1'};
inline constexpr std::uint32_t kBlockVersion = 1;
inline constexpr std::size_t kBlockHeaderBytes = 128;
inline constexpr std::size_t kBlockPointBytes = 2 * 6 + 4 * 4 + 8;

/// Exact encoded size of a block holding `m` points.
constexpr std::size_t block_encoded_size(std::size_t m) noexcept
{
    const std::size_t body = kBlockHeaderBytes + m * kBlockPointBytes;
    return (body + 7) / 8 * 8 + 4;
}

std::vector<std::byte> encode_block(const Block& block);

/// Decodes and CRC-checks one block record. Rejects records whose count
/// exceeds `max_count`.
Block decode_block(std::span<const std::byte> bytes,
                   std::size_t max_count = std::numeric_limits<std::uint32_t>::max());

/// Only the ids of a block record (still CRC-checked).
std::vector<std::uint64_t> decode_block_ids(std::span<const std::byte> bytes);

} // namespace cosmolod
