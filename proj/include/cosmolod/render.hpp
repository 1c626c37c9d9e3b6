#pragma once

#include "cosmolod/block.hpp"
#include "cosmolod/camera.hpp"
#include "cosmolod/snapshot.hpp"

#include <Eigen/Dense>

#include <numbers>
#include <span>
#include <string>

namespace cosmolod {

class Dataset;
struct Cut;

/// Single-channel float image, row 0 at the top.
using Image = Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Radial cubic falloff 1 - 3r^2 + 2r^3 on [0, 1], zero beyond.
constexpr double splat_kernel(double r) noexcept
{
    if (r >= 1.0)
        return 0.0;
    if (r <= 0.0)
        return 1.0;
    return 1.0 - r * r * (3.0 - 2.0 * r);
}

/// Integral of the kernel over the unit disk: 0.3 pi.
inline constexpr double kKernelDiskIntegral = 0.3 * std::numbers::pi;

inline constexpr double kMinSplatRadius = 0.5;
inline constexpr double kMaxSplatRadius = 64.0;

/// Start/end states of every point to splat, stored by column.
struct SplatPoints {
    PositionMatrix pos_start;
    PositionMatrix pos_end;
    Eigen::VectorXd size_start, size_end;
    Eigen::VectorXd weight_start, weight_end;

    std::size_t count() const noexcept { return static_cast<std::size_t>(pos_start.cols()); }
    void resize(std::size_t n);
};

/// Dequantized contents of decoded blocks.
SplatPoints splat_points(std::span<const Block> blocks);

/// Raw particles of `start`, paired by id with `end` (a missing successor
/// keeps its start state). Weights are mass * density^alpha.
SplatPoints splat_points(const ParticleTable& start, const ParticleTable& end, double density_exponent);

/// Additive splat rendering at interpolation parameter `alpha` in [0, 1]:
/// positions, sizes and weights are interpolated linearly, projected through
/// `cam`, and each point deposits weight * k(r/R) / (0.3 pi R^2) on pixels whose
/// centers lie within its screen radius R = clamp(f size / z, 0.5, 64).
Image render_reference(const SplatPoints& points, const Camera& cam, double alpha);

/// Reads the blocks of `cut` from `dataset` and renders them at time `t`,
/// which must lie inside the cut's interval [t_s, t_s+1].
Image render_cut(const Dataset& dataset, const Cut& cut, const Camera& cam, double t);

/// Peak signal-to-noise ratio of `test` against `reference`, in dB.
/// +inf for identical images; throws for size mismatch or an all-zero reference.
double image_psnr(const Image& reference, const Image& test);

/// Little-endian single-channel portable float map.
void write_pfm(const Image& image, const std::string& path);
Image read_pfm(const std::string& path);

/// 8-bit preview with log tone mapping log(1 + I/I0) / log(1 + Imax/I0), I0 = Imax/100.
void write_ppm_preview(const Image& image, const std::string& path);

} // namespace cosmolod
