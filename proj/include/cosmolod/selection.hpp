#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace cosmolod {

/// Largest number of ids a selection may hold (2^20).
inline constexpr std::size_t kSelectionCap = 1u << 20;

struct SelectionCapError : std::length_error {
    using std::length_error::length_error;
};

/// Sorted, duplicate-free set of highlighted particle ids.
class SelectionSet {
public:
    SelectionSet() = default;

    /// Throws SelectionCapError when `ids` holds more than kSelectionCap entries.
    static SelectionSet from_ids(std::span<const std::uint64_t> ids);

    bool contains(std::uint64_t id) const noexcept;
    std::size_t size() const noexcept { return ids_.size(); }
    bool empty() const noexcept { return ids_.empty(); }
    const std::vector<std::uint64_t>& ids() const noexcept { return ids_; }

private:
    std::vector<std::uint64_t> ids_;
};

/// Membership bitmask: bit i (LSB-first within byte i/8) is set iff
/// block_ids[i] is selected. Trailing bits are zero.
std::vector<std::uint8_t> selection_flags(std::span<const std::uint64_t> block_ids, const SelectionSet& selection);

} // namespace cosmolod
