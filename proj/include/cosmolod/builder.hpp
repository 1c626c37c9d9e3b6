#pragma once

#include "cosmolod/block.hpp"
#include "cosmolod/geometry.hpp"
#include "cosmolod/snapshot.hpp"
#include "cosmolod/tree_index.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace cosmolod {

struct BuildConfig {
    std::size_t node_capacity = 16000;
    double density_exponent = 1.0;
    std::uint64_t seed = 0;
    int max_depth = kMaxDepth;
    unsigned threads = 1;

    void validate() const;
};

// ---------------------------------------------------------------------------
// Density-weighted subselection

struct Subsample {
    /// Kept input positions, ascending.
    std::vector<std::size_t> selected;
    /// Rescaled weights of the kept points, parallel to `selected`.
    std::vector<double> weights;
};

/// Weighted sampling without replacement: each point gets the score
/// u^(1/w) with u hashed from (node_seed, id); the `capacity` largest scores
/// survive (ties to the smaller id) and their weights are rescaled so the
/// total weight is unchanged. Identity when the input already fits.
Subsample subsample(std::span<const double> weights, std::span<const std::uint64_t> ids, std::size_t capacity,
                    std::uint64_t node_seed);

/// Per-node seed; independent of the interval so survivors stay stable over time.
std::uint64_t node_seed(std::uint64_t dataset_seed, NodePath path) noexcept;

// ---------------------------------------------------------------------------
// Timestep pairing

/// A node representative at the start of an interval.
struct Representative {
    std::uint64_t id = 0;
    std::uint32_t row = 0;      ///< row in the start snapshot
    double weight = 0.0;        ///< corrected weight
    double raw_weight = 0.0;    ///< mass * density^alpha before correction
};

/// id -> row lookup over one snapshot.
class IdLookup {
public:
    explicit IdLookup(const ParticleTable& table);
    /// Row holding `id`, or -1.
    std::int64_t find(std::uint64_t id) const noexcept;
    const ParticleTable& table() const noexcept { return *table_; }

private:
    const ParticleTable* table_;
    std::vector<std::pair<std::uint64_t, std::uint32_t>> sorted_;
};

struct PairedEnds {
    std::vector<Vec3> pos;
    std::vector<double> size;
    std::vector<double> weight;
    Aabb box;
    std::size_t missing = 0;
};

/// End-of-interval states for `reps`, matched by id in `next`. An id absent
/// from `next` keeps its start state. End weights carry the same correction
/// factor as the start weights.
PairedEnds pair_timesteps(std::span<const Representative> reps, const ParticleTable& start, const IdLookup& next,
                          double density_exponent);

// ---------------------------------------------------------------------------
// Interval build

struct IntervalStats {
    std::size_t nodes = 0;
    std::size_t leaves = 0;
    std::size_t overfull_leaves = 0; ///< max-depth leaves holding more than capacity
    std::size_t clamped = 0;         ///< coordinates clamped during quantization
    std::size_t missing_pairs = 0;   ///< representatives without a successor
    std::size_t max_block_count = 0;
    std::array<std::size_t, kMaxDepth + 1> depth_histogram{};
};

struct IntervalBuild {
    std::vector<Block> blocks; ///< sorted by path code
    TreeIndex index;           ///< offsets/lengths filled for concatenated encoding
    IntervalStats stats;
};

/// Builds all blocks of one interval from its start and end snapshots.
IntervalBuild build_interval(const ParticleTable& start, const ParticleTable& end, const Aabb& root,
                             std::uint32_t interval, const BuildConfig& cfg);

/// Bounding cube over every snapshot's positions.
Aabb dataset_root(std::span<const ParticleTable> snapshots);

struct BuildSummary {
    std::size_t intervals = 0;
    std::size_t nodes = 0;
    std::size_t overfull_leaves = 0;
    std::size_t clamped = 0;
    std::size_t missing_pairs = 0;
    std::size_t bytes_written = 0;
    std::array<std::size_t, kMaxDepth + 1> depth_histogram{};
};

/// Full pipeline over snapshot files: writes meta.json, blocks_{s}.bin and
/// index_{s}.bin into `out_dir`.
BuildSummary build(const std::vector<std::string>& snapshot_paths, const BuildConfig& cfg,
                   const std::string& out_dir);

/// Same pipeline over in-memory snapshots.
BuildSummary build(std::span<const ParticleTable> snapshots, const BuildConfig& cfg, const std::string& out_dir);

} // namespace cosmolod
