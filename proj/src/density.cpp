#include "cosmolod/parallel.hpp"
#include "cosmolod/snapshot.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace cosmolod {

namespace {

// Balanced k-d tree over a fixed point set, answering exact k-th neighbor distances.
class KdTree {
public:
    explicit KdTree(const PositionMatrix& pts) : pts_(pts), order_(static_cast<std::size_t>(pts.cols()))
    {
        std::iota(order_.begin(), order_.end(), std::uint32_t{0});
        nodes_.reserve(2 * order_.size() / kLeafSize + 2);
        build(0, static_cast<std::uint32_t>(order_.size()));
        // Leaf scans and queries walk points in tree order for locality.
        sorted_.resize(3, pts.cols());
        for (std::size_t i = 0; i < order_.size(); ++i)
            sorted_.col(static_cast<Eigen::Index>(i)) = pts.col(order_[i]);
    }

    std::size_t size() const noexcept { return order_.size(); }
    /// Original row of the point at tree position `slot`.
    std::uint32_t row(std::size_t slot) const noexcept { return order_[slot]; }

    /// Squared distance from the point at tree position `slot` to its k-th
    /// nearest other point.
    double kth_distance2(std::uint32_t slot, int k) const
    {
        thread_local std::vector<double> best; // max-heap of the k smallest distances so far
        best.clear();
        best.reserve(static_cast<std::size_t>(k));
        const Vec3 q = sorted_.col(slot);
        search(0, q, slot, static_cast<std::size_t>(k), best);
        return best.front();
    }

private:
    static constexpr std::uint32_t kLeafSize = 16;

    struct Node {
        std::uint32_t lo, hi;
        int axis = -1; // -1 for leaves
        double split = 0.0;
        std::uint32_t left = 0, right = 0;
        Aabb box;
    };

    std::uint32_t build(std::uint32_t lo, std::uint32_t hi)
    {
        const auto index = static_cast<std::uint32_t>(nodes_.size());
        nodes_.push_back(Node{lo, hi, -1, 0.0, 0, 0, Aabb{}});
        Aabb box;
        for (std::uint32_t i = lo; i < hi; ++i)
            box.extend(Vec3(pts_.col(order_[i])));
        nodes_[index].box = box;
        if (hi - lo <= kLeafSize)
            return index;

        int axis = 0;
        box.sizes().maxCoeff(&axis);
        const std::uint32_t mid = lo + (hi - lo) / 2;
        std::nth_element(order_.begin() + lo, order_.begin() + mid, order_.begin() + hi,
                         [&](std::uint32_t a, std::uint32_t b) { return pts_(axis, a) < pts_(axis, b); });
        const std::uint32_t left = build(lo, mid);
        const std::uint32_t right = build(mid, hi);
        Node& node = nodes_[index];
        node.axis = axis;
        node.split = pts_(axis, order_[mid]);
        node.left = left;
        node.right = right;
        return index;
    }

    void search(std::uint32_t index, const Vec3& q, std::uint32_t self, std::size_t k,
                std::vector<double>& best) const
    {
        const Node& node = nodes_[index];
        if (best.size() == k && node.box.squaredExteriorDistance(q) > best.front())
            return;
        if (node.axis < 0) {
            const double* p = sorted_.data() + 3 * std::size_t(node.lo);
            for (std::uint32_t i = node.lo; i < node.hi; ++i, p += 3) {
                if (i == self)
                    continue;
                const double dx = p[0] - q.x(), dy = p[1] - q.y(), dz = p[2] - q.z();
                const double d2 = dx * dx + dy * dy + dz * dz;
                if (best.size() < k) {
                    best.push_back(d2);
                    std::push_heap(best.begin(), best.end());
                } else if (d2 < best.front()) {
                    std::pop_heap(best.begin(), best.end());
                    best.back() = d2;
                    std::push_heap(best.begin(), best.end());
                }
            }
            return;
        }
        const bool go_left = q[node.axis] < node.split;
        search(go_left ? node.left : node.right, q, self, k, best);
        search(go_left ? node.right : node.left, q, self, k, best);
    }

    const PositionMatrix& pts_;
    PositionMatrix sorted_;
    std::vector<std::uint32_t> order_;
    std::vector<Node> nodes_;
};

} // namespace

void estimate_density(ParticleTable& table, int k, const Aabb& domain, unsigned threads)
{
    if (k < 1)
        throw std::invalid_argument("estimate_density: k must be >= 1");
    const std::size_t n = table.count();
    if (n == 0)
        return;

    const double diagonal = domain.isEmpty() ? 1.0 : domain.diagonal().norm();
    // Coincident points would otherwise give zero size and infinite density.
    const double min_size = std::max(1e-9 * diagonal, std::numeric_limits<double>::min());
    std::vector<double> sizes(n);

    if (n == 1) {
        sizes[0] = diagonal;
    } else if (n <= static_cast<std::size_t>(k)) {
        double widest = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                widest = std::max(widest, (table.pos.col(i) - table.pos.col(j)).norm());
        std::fill(sizes.begin(), sizes.end(), widest);
    } else {
        const KdTree tree(table.pos);
        parallel_for(n, threads, [&](std::size_t slot) {
            sizes[tree.row(slot)] = std::sqrt(tree.kth_distance2(static_cast<std::uint32_t>(slot), k));
        });
    }

    for (std::size_t i = 0; i < n; ++i) {
        const double h = std::max(sizes[i], min_size);
        const auto idx = static_cast<Eigen::Index>(i);
        table.size[idx] = static_cast<float>(h);
        table.density[idx] =
            static_cast<float>(k * double(table.mass[idx]) / (4.0 / 3.0 * std::numbers::pi * h * h * h));
    }
}

} // namespace cosmolod
