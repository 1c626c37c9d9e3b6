#pragma once

#include "cosmolod/block.hpp"
#include "cosmolod/geometry.hpp"
#include "cosmolod/tree_index.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cosmolod {

/// Dataset-level description stored in meta.json.
struct DatasetMeta {
    Aabb root;
    std::size_t node_capacity = 0;
    double density_exponent = 1.0;
    std::uint64_t seed = 0;
    int max_depth = kMaxDepth;
    std::vector<double> snapshot_times;
    std::vector<std::uint64_t> raw_counts;
    std::vector<std::size_t> interval_nodes;
    /// Largest block written; exceeds node_capacity only for overfull max-depth leaves.
    std::size_t max_block_count = 0;

    std::size_t intervals() const noexcept { return snapshot_times.empty() ? 0 : snapshot_times.size() - 1; }

    /// Interval whose span contains `t`: right-open, except the last which is closed.
    /// Throws std::out_of_range outside the dataset's time span.
    std::size_t interval_for_time(double t) const;
    /// Interpolation parameter of `t` within interval `s`.
    double interval_alpha(std::size_t s, double t) const;

    std::string to_json() const;
    static DatasetMeta from_json(const std::string& text);
};

std::string blocks_file_name(std::size_t interval);
std::string index_file_name(std::size_t interval);

/// Read-only view of a built dataset directory. Safe for concurrent readers.
class Dataset {
public:
    explicit Dataset(std::string dir);

    const DatasetMeta& meta() const noexcept { return meta_; }
    const std::string& meta_text() const noexcept { return meta_text_; }
    const std::string& dir() const noexcept { return dir_; }
    const TreeIndex& index(std::size_t interval) const;

    std::string index_path(std::size_t interval) const;
    std::string blocks_path(std::size_t interval) const;

    /// Raw record bytes of a block, or nullopt if the node does not exist.
    std::optional<std::vector<std::byte>> block_bytes(std::size_t interval, NodePath path) const;
    Block read_block(std::size_t interval, NodePath path) const;

    /// Capacity to validate block counts against.
    std::size_t block_count_limit() const noexcept;

private:
    std::string dir_;
    std::string meta_text_;
    DatasetMeta meta_;
    std::vector<TreeIndex> indices_;
};

} // namespace cosmolod
