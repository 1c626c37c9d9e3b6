#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace cosmolod {

template <typename Scalar>
using Vec3T = Eigen::Matrix<Scalar, 3, 1>;

template <typename Scalar>
using AabbT = Eigen::AlignedBox<Scalar, 3>;

using Vec3 = Vec3T<double>;
using Aabb = AabbT<double>;

/// Raised for malformed codec input (non-finite coordinates).
struct CodecError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Octree paths deeper than this do not fit a 64-bit locational code.
inline constexpr int kMaxDepth = 20;

/// Octant index from per-axis upper-half flags: 4*ix + 2*iy + iz.
constexpr int octant_index(bool ix, bool iy, bool iz) noexcept
{
    return (ix ? 4 : 0) | (iy ? 2 : 0) | (iz ? 1 : 0);
}

template <typename Scalar>
Vec3T<Scalar> box_mid(const AabbT<Scalar>& box)
{
    return (box.min() + box.max()) * Scalar(0.5);
}

/// Half-extent box of `octant`. Children use [min, mid) on the lower side and
/// [mid, max] on the upper side, so the eight of them partition the parent.
template <typename Scalar>
AabbT<Scalar> child_aabb(const AabbT<Scalar>& parent, int octant)
{
    const Vec3T<Scalar> mid = box_mid(parent);
    AabbT<Scalar> child;
    for (int axis = 0; axis < 3; ++axis) {
        const bool upper = (octant >> (2 - axis)) & 1;
        child.min()[axis] = upper ? mid[axis] : parent.min()[axis];
        child.max()[axis] = upper ? parent.max()[axis] : mid[axis];
    }
    return child;
}

/// Octant of `box` that owns `p` under the half-open rule. `p` is assumed
/// to be inside `box` already.
template <typename Scalar>
int classify_octant(const Vec3T<Scalar>& p, const AabbT<Scalar>& box)
{
    const Vec3T<Scalar> mid = box_mid(box);
    return octant_index(p.x() >= mid.x(), p.y() >= mid.y(), p.z() >= mid.z());
}

template <typename Scalar>
Vec3T<Scalar> clamp_to_box(const Vec3T<Scalar>& p, const AabbT<Scalar>& box)
{
    return p.cwiseMax(box.min()).cwiseMin(box.max());
}

/// Largest box with equal edges that is centered on `box` and contains it.
template <typename Scalar>
AabbT<Scalar> bounding_cube(const AabbT<Scalar>& box)
{
    const Vec3T<Scalar> center = box_mid(box);
    Scalar half = box.sizes().maxCoeff() * Scalar(0.5);
    if (!(half > Scalar(0)))
        half = Scalar(0.5);
    const Vec3T<Scalar> h = Vec3T<Scalar>::Constant(half);
    return AabbT<Scalar>(center - h, center + h);
}

// ---------------------------------------------------------------------------
// Locational codes

/// Octree node address: a leading 1 bit followed by three bits per level.
struct NodePath {
    std::uint64_t code = 1;

    static constexpr NodePath root() noexcept { return NodePath{1}; }

    friend constexpr bool operator==(NodePath, NodePath) = default;
    friend constexpr auto operator<=>(NodePath, NodePath) = default;
};

/// Depth of a locational code; throws std::out_of_range for malformed codes.
inline int path_depth(NodePath path)
{
    if (path.code == 0)
        throw std::out_of_range("node path code must be >= 1");
    const int bits = std::bit_width(path.code);
    if ((bits - 1) % 3 != 0)
        throw std::out_of_range("node path code " + std::to_string(path.code) +
                                " is not a whole number of levels");
    const int depth = (bits - 1) / 3;
    if (depth > kMaxDepth)
        throw std::out_of_range("node path deeper than " + std::to_string(kMaxDepth));
    return depth;
}

inline bool is_valid_path(std::uint64_t code) noexcept
{
    if (code == 0)
        return false;
    const int bits = std::bit_width(code);
    return (bits - 1) % 3 == 0 && (bits - 1) / 3 <= kMaxDepth;
}

inline NodePath path_child(NodePath path, int octant)
{
    if (octant < 0 || octant > 7)
        throw std::out_of_range("octant must be in [0, 7]");
    if (path_depth(path) >= kMaxDepth)
        throw std::out_of_range("path_child would exceed maximum depth");
    return NodePath{(path.code << 3) | static_cast<std::uint64_t>(octant)};
}

inline NodePath path_parent(NodePath path)
{
    if (path_depth(path) < 1)
        throw std::out_of_range("root has no parent");
    return NodePath{path.code >> 3};
}

/// Octant digit of `path` relative to its parent.
inline int path_octant(NodePath path) { return static_cast<int>(path.code & 7u); }

/// True when `ancestor` lies on the root-to-`path` chain (a path is its own ancestor).
inline bool path_is_ancestor(NodePath ancestor, NodePath path)
{
    const int da = path_depth(ancestor);
    const int dp = path_depth(path);
    if (da > dp)
        return false;
    return (path.code >> (3 * (dp - da))) == ancestor.code;
}

/// Box of the node at `path` inside `root`.
template <typename Scalar>
AabbT<Scalar> path_aabb(NodePath path, const AabbT<Scalar>& root)
{
    const int depth = path_depth(path);
    AabbT<Scalar> box = root;
    for (int level = depth - 1; level >= 0; --level)
        box = child_aabb(box, static_cast<int>((path.code >> (3 * level)) & 7u));
    return box;
}

/// Locational code of the depth-`depth` cell of `root` containing `p`
/// (clamped into `root` first).
template <typename Scalar>
std::uint64_t morton_key(const Vec3T<Scalar>& p, const AabbT<Scalar>& root, int depth)
{
    if (depth < 0 || depth > kMaxDepth)
        throw std::out_of_range("morton depth must be in [0, 20]");
    const Vec3T<Scalar> q = clamp_to_box(p, root);
    AabbT<Scalar> box = root;
    std::uint64_t key = 1;
    for (int level = 0; level < depth; ++level) {
        const int octant = classify_octant(q, box);
        key = (key << 3) | static_cast<std::uint64_t>(octant);
        box = child_aabb(box, octant);
    }
    return key;
}

// ---------------------------------------------------------------------------
// 16-bit position codec

struct QPos {
    std::uint16_t x = 0, y = 0, z = 0;
    friend constexpr bool operator==(const QPos&, const QPos&) = default;
};

inline constexpr double kQuantLevels = 65535.0;

/// Quantizes `p` against `box` at 16 bits per axis. Points outside the box are
/// clamped; `clamped` (when given) is set accordingly.
template <typename Scalar>
QPos quantize(const Vec3T<Scalar>& p, const AabbT<Scalar>& box, bool* clamped = nullptr)
{
    if (!p.allFinite())
        throw CodecError("cannot quantize a non-finite position");
    const Vec3T<Scalar> c = clamp_to_box(p, box);
    if (clamped)
        *clamped = (c != p);
    std::array<std::uint16_t, 3> q{};
    for (int axis = 0; axis < 3; ++axis) {
        const double extent = double(box.max()[axis]) - double(box.min()[axis]);
        if (!(extent > 0.0)) {
            q[axis] = 0;
            continue;
        }
        const double t = (double(c[axis]) - double(box.min()[axis])) / extent;
        // std::round rounds half away from zero.
        const double r = std::round(t * kQuantLevels);
        q[axis] = static_cast<std::uint16_t>(std::clamp(r, 0.0, kQuantLevels));
    }
    return {q[0], q[1], q[2]};
}

template <typename Scalar>
Vec3T<Scalar> dequantize(const QPos& q, const AabbT<Scalar>& box)
{
    const std::array<std::uint16_t, 3> v{q.x, q.y, q.z};
    Vec3T<Scalar> out;
    for (int axis = 0; axis < 3; ++axis) {
        const Scalar extent = box.max()[axis] - box.min()[axis];
        // Clamped: min + 1.0 * extent may round one ulp past max.
        out[axis] = std::clamp(box.min()[axis] + Scalar(v[axis] / kQuantLevels) * extent, box.min()[axis],
                               box.max()[axis]);
    }
    return out;
}

/// Worst-case per-axis reconstruction error of the codec for `box`.
template <typename Scalar>
Vec3T<Scalar> quantization_error_bound(const AabbT<Scalar>& box)
{
    return box.sizes() / Scalar(2.0 * kQuantLevels);
}

/// Bytes per point for quantized and full double-precision positions.
inline constexpr std::size_t kQuantizedPositionBytes = 3 * sizeof(std::uint16_t);
inline constexpr std::size_t kRawPositionBytes = 3 * sizeof(double);

} // namespace cosmolod
