#pragma once

#include "cosmolod/camera.hpp"
#include "cosmolod/tree_index.hpp"

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace cosmolod {

struct CutEntry {
    std::uint64_t path = 1;
    std::uint32_t interval = 0;
    std::uint32_t count = 0;
    double sse = 0.0;

    friend bool operator==(const CutEntry&, const CutEntry&) = default;
};

/// Antichain of octree nodes drawn for one frame, ordered by descending
/// screen-space error (ties by ascending path code).
struct Cut {
    std::uint32_t interval = 0;
    std::vector<CutEntry> entries;
    std::uint64_t total_points = 0;
    bool budget_exceeded = false;

    friend bool operator==(const Cut&, const Cut&) = default;
};

inline constexpr std::uint64_t kUnlimitedBudget = std::numeric_limits<std::uint64_t>::max();

/// Greedy budgeted refinement: repeatedly split the node with the largest
/// screen-space error into its frustum-visible children while its error
/// exceeds `tau` and the point budget allows. Nodes outside the frustum are
/// dropped. A budget below the root's count yields the root alone with
/// `budget_exceeded` set.
Cut select_cut(const TreeIndex& index, const Aabb& root, std::uint32_t interval, const Camera& cam, double tau,
               std::uint64_t budget);

/// All leaves of the index, in path order (every entry with sse 0).
Cut all_leaves_cut(const TreeIndex& index, std::uint32_t interval);

/// Wire form of a cut: {"interval", "total_points", "budget_exceeded",
/// "blocks": [{"path", "count", "sse", "bytes"}]}. Infinite sse is written as null.
std::string cut_to_json(const Cut& cut, const TreeIndex& index);

} // namespace cosmolod
