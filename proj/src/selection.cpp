#include "cosmolod/selection.hpp"

#include <algorithm>
#include <string>

namespace cosmolod {

SelectionSet SelectionSet::from_ids(std::span<const std::uint64_t> ids)
{
    if (ids.size() > kSelectionCap)
        throw SelectionCapError("selection of " + std::to_string(ids.size()) + " ids exceeds the cap of " +
                                std::to_string(kSelectionCap));
    SelectionSet set;
    set.ids_.assign(ids.begin(), ids.end());
    std::sort(set.ids_.begin(), set.ids_.end());
    set.ids_.erase(std::unique(set.ids_.begin(), set.ids_.end()), set.ids_.end());
    return set;
}

bool SelectionSet::contains(std::uint64_t id) const noexcept
{
    return std::binary_search(ids_.begin(), ids_.end(), id);
}

std::vector<std::uint8_t> selection_flags(std::span<const std::uint64_t> block_ids, const SelectionSet& selection)
{
    std::vector<std::uint8_t> mask((block_ids.size() + 7) / 8, 0);
    if (selection.empty())
        return mask;
    for (std::size_t i = 0; i < block_ids.size(); ++i)
        if (selection.contains(block_ids[i]))
            mask[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    return mask;
}

} // namespace cosmolod
