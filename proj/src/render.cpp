#include "cosmolod/render.hpp"
#include "cosmolod/builder.hpp"
#include "cosmolod/cut.hpp"
#include "cosmolod/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace cosmolod {

void SplatPoints::resize(std::size_t n)
{
    const auto c = static_cast<Eigen::Index>(n);
    pos_start.resize(3, c);
    pos_end.resize(3, c);
    size_start.resize(c);
    size_end.resize(c);
    weight_start.resize(c);
    weight_end.resize(c);
}

SplatPoints splat_points(std::span<const Block> blocks)
{
    std::size_t total = 0;
    for (const auto& b : blocks)
        total += b.count();
    SplatPoints pts;
    pts.resize(total);
    Eigen::Index k = 0;
    for (const auto& b : blocks)
        for (std::size_t i = 0; i < b.count(); ++i, ++k) {
            pts.pos_start.col(k) = dequantize(b.qpos_start[i], b.box_start);
            pts.pos_end.col(k) = dequantize(b.qpos_end[i], b.box_end);
            pts.size_start[k] = b.size_start[i];
            pts.size_end[k] = b.size_end[i];
            pts.weight_start[k] = b.weight_start[i];
            pts.weight_end[k] = b.weight_end[i];
        }
    return pts;
}

SplatPoints splat_points(const ParticleTable& start, const ParticleTable& end, double density_exponent)
{
    const IdLookup next(end);
    SplatPoints pts;
    pts.resize(start.count());
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(start.count()); ++i) {
        const double w = sampling_weight(start.mass[i], start.density[i], density_exponent);
        pts.pos_start.col(i) = start.pos.col(i);
        pts.size_start[i] = start.size[i];
        pts.weight_start[i] = w;
        const std::int64_t row = next.find(start.id[static_cast<std::size_t>(i)]);
        if (row < 0) {
            pts.pos_end.col(i) = start.pos.col(i);
            pts.size_end[i] = start.size[i];
            pts.weight_end[i] = w;
        } else {
            const auto e = static_cast<Eigen::Index>(row);
            pts.pos_end.col(i) = end.pos.col(e);
            pts.size_end[i] = end.size[e];
            pts.weight_end[i] = sampling_weight(end.mass[e], end.density[e], density_exponent);
        }
    }
    return pts;
}

namespace {

// start + alpha (end - start): reproduces `start` exactly when end == start.
template <typename T>
T lerp_exact(const T& start, const T& end, double alpha)
{
    return start + alpha * (end - start);
}

} // namespace

Image render_reference(const SplatPoints& points, const Camera& cam, double alpha)
{
    cam.validate();
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw std::out_of_range("render_reference: interpolation parameter must lie in [0, 1]");
    const CameraFrame frame(cam);
    const int W = cam.width;
    const int H = cam.height;
    Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> accum =
        Eigen::ArrayXXd::Zero(H, W);

    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(points.count()); ++i) {
        const Vec3 world = lerp_exact<Vec3>(points.pos_start.col(i), points.pos_end.col(i), alpha);
        const double size = lerp_exact(points.size_start[i], points.size_end[i], alpha);
        const double weight = lerp_exact(points.weight_start[i], points.weight_end[i], alpha);
        const Vec3 c = frame.to_camera(world);
        if (c.z() < frame.near)
            continue;
        const double sx = frame.focal * c.x() / c.z() + frame.cx;
        const double sy = frame.focal * c.y() / c.z() + frame.cy;
        const double radius = std::clamp(frame.focal * size / c.z(), kMinSplatRadius, kMaxSplatRadius);
        const double amplitude = weight / (kKernelDiskIntegral * radius * radius);

        const int x0 = std::max(0, static_cast<int>(std::floor(sx - radius)));
        const int x1 = std::min(W - 1, static_cast<int>(std::ceil(sx + radius)));
        const int y0 = std::max(0, static_cast<int>(std::floor(sy - radius)));
        const int y1 = std::min(H - 1, static_cast<int>(std::ceil(sy + radius)));
        const double inv_r = 1.0 / radius;
        for (int y = y0; y <= y1; ++y) {
            const double dy = (y + 0.5) - sy;
            for (int x = x0; x <= x1; ++x) {
                const double dx = (x + 0.5) - sx;
                const double r = std::sqrt(dx * dx + dy * dy) * inv_r;
                if (r < 1.0)
                    accum(y, x) += amplitude * splat_kernel(r);
            }
        }
    }
    return accum.cast<float>();
}

Image render_cut(const Dataset& dataset, const Cut& cut, const Camera& cam, double t)
{
    const DatasetMeta& meta = dataset.meta();
    if (cut.interval >= meta.intervals())
        throw std::out_of_range("cut interval " + std::to_string(cut.interval) + " out of range");
    const double t0 = meta.snapshot_times[cut.interval];
    const double t1 = meta.snapshot_times[cut.interval + 1];
    if (!(t >= t0 && t <= t1))
        throw std::out_of_range("time " + std::to_string(t) + " outside interval [" + std::to_string(t0) + ", " +
                                std::to_string(t1) + "]");
    std::vector<Block> blocks;
    blocks.reserve(cut.entries.size());
    for (const CutEntry& e : cut.entries)
        blocks.push_back(dataset.read_block(cut.interval, NodePath{e.path}));
    return render_reference(splat_points(blocks), cam, meta.interval_alpha(cut.interval, t));
}

double image_psnr(const Image& reference, const Image& test)
{
    if (reference.rows() != test.rows() || reference.cols() != test.cols())
        throw std::invalid_argument("image_psnr: image dimensions differ");
    if (reference.size() == 0)
        throw std::invalid_argument("image_psnr: empty images");
    const double peak = reference.cast<double>().maxCoeff();
    if (!(peak > 0.0))
        throw std::domain_error("image_psnr: reference image has no positive peak");
    const double mse = (reference.cast<double>() - test.cast<double>()).square().mean();
    if (mse == 0.0)
        return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

void write_pfm(const Image& image, const std::string& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot create " + path);
    // Negative scale marks little-endian samples.
    out << "Pf\n" << image.cols() << ' ' << image.rows() << "\n-1.0\n";
    std::vector<char> row(static_cast<std::size_t>(image.cols()) * 4);
    for (Eigen::Index y = image.rows() - 1; y >= 0; --y) {
        for (Eigen::Index x = 0; x < image.cols(); ++x) {
            const float v = image(y, x);
            std::memcpy(row.data() + 4 * x, &v, 4);
        }
        out.write(row.data(), static_cast<std::streamsize>(row.size()));
    }
    if (!out)
        throw std::runtime_error("short write to " + path);
}

Image read_pfm(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open " + path);
    std::string magic;
    long w = 0, h = 0;
    double scale = 0.0;
    in >> magic >> w >> h >> scale;
    in.get();
    if (magic != "Pf" || w <= 0 || h <= 0)
        throw std::runtime_error(path + ": not a single-channel PFM");
    if (scale > 0.0)
        throw std::runtime_error(path + ": big-endian PFM not supported");
    Image image(h, w);
    std::vector<char> row(static_cast<std::size_t>(w) * 4);
    for (long y = h - 1; y >= 0; --y) {
        if (!in.read(row.data(), static_cast<std::streamsize>(row.size())))
            throw std::runtime_error(path + ": truncated PFM");
        for (long x = 0; x < w; ++x)
            std::memcpy(&image(y, x), row.data() + 4 * x, 4);
    }
    return image;
}

void write_ppm_preview(const Image& image, const std::string& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot create " + path);
    out << "P6\n" << image.cols() << ' ' << image.rows() << "\n255\n";
    const double peak = image.size() > 0 ? std::max(0.0, double(image.maxCoeff())) : 0.0;
    const double i0 = 0.01 * peak;
    const double denom = peak > 0.0 ? std::log1p(peak / i0) : 1.0;
    for (Eigen::Index y = 0; y < image.rows(); ++y)
        for (Eigen::Index x = 0; x < image.cols(); ++x) {
            const double v = peak > 0.0 ? std::log1p(std::max(0.0, double(image(y, x))) / i0) / denom : 0.0;
            const auto byte = static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
            const char rgb[3] = {byte, byte, byte};
            out.write(rgb, 3);
        }
}

} // namespace cosmolod
