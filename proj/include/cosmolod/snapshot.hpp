#pragma once

#include "cosmolod/binary_io.hpp"
#include "cosmolod/geometry.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace cosmolod {

using PositionMatrix = Eigen::Matrix<double, 3, Eigen::Dynamic>;

/// One snapshot of raw particles, stored by column.
struct ParticleTable {
    double snapshot_time = 0.0;
    std::vector<std::uint64_t> id;
    PositionMatrix pos;
    Eigen::VectorXf mass;
    Eigen::VectorXf density;
    Eigen::VectorXf size;

    std::size_t count() const noexcept { return id.size(); }

    /// Allocates every column for `n` particles (values uninitialized).
    void resize(std::size_t n);

    /// Tight box over all positions; empty box when count() == 0.
    Aabb bounds() const;

    friend bool operator==(const ParticleTable& a, const ParticleTable& b);
};

// Snapshot file ("CPT1"): 40-byte header then one column per field.
inline constexpr char kSnapshotMagic[4] = {'C', 'P', 'T', '1'};
inline constexpr std::uint32_t kSnapshotVersion = 1;
inline constexpr std::size_t kSnapshotHeaderBytes = 40;
inline constexpr std::size_t kSnapshotStride = 48;

/// Serializes a table; ids must be unique.
std::vector<std::byte> encode_table(const ParticleTable& table);
/// Parses a table; throws FormatError on bad magic/version, truncation, or duplicate ids.
ParticleTable decode_table(std::span<const std::byte> bytes);

std::size_t write_table(const ParticleTable& table, const std::string& path);
ParticleTable read_table(const std::string& path);

/// Generator settings for clustered, drifting synthetic snapshots.
struct SynthConfig {
    std::size_t n_points = 100000;
    std::size_t n_clusters = 8;
    std::size_t n_snapshots = 2;
    double plummer_scale = 2.0;
    double box_size = 100.0;
    double drift_speed = 1.0;
    std::uint64_t seed = 42;
    int neighbors = 32;

    void validate() const;
};

/// Radius enclosing mass fraction `u` of a Plummer sphere with scale `a`.
double plummer_radius(double u, double a);

/// Generates one table per snapshot at times 0, 1, ..., n_snapshots - 1, with
/// density and size already estimated (k = cfg.neighbors).
std::vector<ParticleTable> gen_synthetic(const SynthConfig& cfg, unsigned threads = 1);

/// Generates positions only (density/size left at 1); used by gen_synthetic.
std::vector<ParticleTable> gen_synthetic_positions(const SynthConfig& cfg);

/// Fills size (distance to the k-th nearest neighbor) and density
/// (k * mass / (4/3 pi size^3)). `domain` supplies the fallback extent when
/// the table holds a single particle.
void estimate_density(ParticleTable& table, int k, const Aabb& domain, unsigned threads = 1);

/// Density sampling weight mass * density^alpha.
inline double sampling_weight(double mass, double density, double alpha)
{
    return alpha == 1.0 ? mass * density : mass * std::pow(density, alpha);
}

} // namespace cosmolod
