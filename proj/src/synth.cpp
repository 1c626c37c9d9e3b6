#include "cosmolod/hash.hpp"
#include "cosmolod/snapshot.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace cosmolod {

namespace {

// Stream tags keep per-purpose hash sequences independent.
enum class Stream : std::uint64_t { center = 1, velocity, radius, direction };

Vec3 isotropic_direction(std::uint64_t h0, std::uint64_t h1)
{
    const double z = 2.0 * unit_open(h0) - 1.0;
    const double phi = 2.0 * std::numbers::pi * unit_open(h1);
    const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {s * std::cos(phi), s * std::sin(phi), z};
}

// Tail cut for the radius draw; keeps 99.6% of a Plummer sphere's mass.
constexpr double kPlummerCutoff = 20.0;

} // namespace

void SynthConfig::validate() const
{
    if (n_points == 0 || n_clusters == 0)
        throw std::invalid_argument("synthetic config: points and clusters must be positive");
    if (n_snapshots < 2)
        throw std::invalid_argument("synthetic config: need at least 2 snapshots");
    if (!(plummer_scale > 0.0) || !(box_size > 0.0) || !(drift_speed >= 0.0))
        throw std::invalid_argument("synthetic config: plummer scale and box size must be positive, drift >= 0");
    if (neighbors < 1)
        throw std::invalid_argument("synthetic config: neighbor count must be >= 1");
}

double plummer_radius(double u, double a)
{
    if (!(u > 0.0) || u > 1.0)
        throw std::domain_error("plummer_radius: u must lie in (0, 1]");
    if (u == 1.0)
        return std::numeric_limits<double>::infinity();
    return a / std::sqrt(std::pow(u, -2.0 / 3.0) - 1.0);
}

std::vector<ParticleTable> gen_synthetic_positions(const SynthConfig& cfg)
{
    cfg.validate();
    const std::size_t k = cfg.n_clusters;

    std::vector<Vec3> centers(k), velocities(k);
    for (std::size_t c = 0; c < k; ++c) {
        for (int axis = 0; axis < 3; ++axis)
            centers[c][axis] =
                cfg.box_size * unit_open(hash_keys(cfg.seed, std::uint64_t(Stream::center), c, axis));
        velocities[c] = cfg.drift_speed *
                        isotropic_direction(hash_keys(cfg.seed, std::uint64_t(Stream::velocity), c, 0),
                                            hash_keys(cfg.seed, std::uint64_t(Stream::velocity), c, 1));
    }

    // Offsets from the cluster center are fixed; clusters move rigidly.
    PositionMatrix offsets(3, static_cast<Eigen::Index>(cfg.n_points));
    for (std::size_t i = 0; i < cfg.n_points; ++i) {
        const std::size_t c = i % k;
        const double u = unit_open_closed(hash_keys(cfg.seed, std::uint64_t(Stream::radius), c, i));
        const double r = std::min(plummer_radius(u, cfg.plummer_scale), kPlummerCutoff * cfg.plummer_scale);
        offsets.col(static_cast<Eigen::Index>(i)) =
            r * isotropic_direction(hash_keys(cfg.seed, std::uint64_t(Stream::direction), c, i, 0),
                                    hash_keys(cfg.seed, std::uint64_t(Stream::direction), c, i, 1));
    }

    std::vector<ParticleTable> tables(cfg.n_snapshots);
    for (std::size_t s = 0; s < cfg.n_snapshots; ++s) {
        ParticleTable& t = tables[s];
        t.snapshot_time = static_cast<double>(s);
        t.resize(cfg.n_points);
        for (std::size_t i = 0; i < cfg.n_points; ++i) {
            const std::size_t c = i % k;
            t.id[i] = i;
            t.pos.col(static_cast<Eigen::Index>(i)) =
                centers[c] + velocities[c] * t.snapshot_time + offsets.col(static_cast<Eigen::Index>(i));
        }
        t.mass.setOnes();
        t.density.setOnes();
        t.size.setOnes();
    }
    return tables;
}

std::vector<ParticleTable> gen_synthetic(const SynthConfig& cfg, unsigned threads)
{
    auto tables = gen_synthetic_positions(cfg);
    const Aabb domain(Vec3::Zero(), Vec3::Constant(cfg.box_size));
    for (auto& t : tables)
        estimate_density(t, cfg.neighbors, domain, threads);
    return tables;
}

} // namespace cosmolod
