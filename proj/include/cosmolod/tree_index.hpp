#pragma once

#include "cosmolod/binary_io.hpp"
#include "cosmolod/geometry.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace cosmolod {

/// One node of the octree skeleton for a single interval.
struct IndexEntry {
    std::uint64_t path = 1;
    std::uint8_t child_mask = 0;
    std::uint32_t count = 0;
    std::uint64_t offset = 0;
    std::uint32_t length = 0;

    bool is_leaf() const noexcept { return child_mask == 0; }
    friend bool operator==(const IndexEntry&, const IndexEntry&) = default;
};

inline constexpr std::size_t kIndexRecordBytes = 32;

/// Octree skeleton of one interval, sorted by path code.
struct TreeIndex {
    std::vector<IndexEntry> entries;

    const IndexEntry* find(NodePath path) const noexcept;
    const IndexEntry& root() const;
    bool empty() const noexcept { return entries.empty(); }

    /// Throws FormatError unless entries are strictly sorted, every non-root
    /// node has its parent, child masks match, and byte ranges do not overlap.
    void validate() const;
};

std::vector<std::byte> encode_index(const TreeIndex& index);
/// Parses and validates an index file.
TreeIndex decode_index(std::span<const std::byte> bytes);

void write_index(const TreeIndex& index, const std::string& path);
TreeIndex read_index(const std::string& path);

} // namespace cosmolod
