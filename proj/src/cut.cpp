#include "cosmolod/cut.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>

namespace cosmolod {

namespace {

struct Candidate {
    const IndexEntry* entry;
    Aabb box;
    double sse;
};

// Max-heap on sse; equal sse pops the smaller path code first.
struct PopOrder {
    bool operator()(const Candidate& a, const Candidate& b) const
    {
        if (a.sse != b.sse)
            return a.sse < b.sse;
        return a.entry->path > b.entry->path;
    }
};

bool cut_order(const CutEntry& a, const CutEntry& b)
{
    if (a.sse != b.sse)
        return a.sse > b.sse;
    return a.path < b.path;
}

} // namespace

Cut select_cut(const TreeIndex& index, const Aabb& root, std::uint32_t interval, const Camera& cam, double tau,
               std::uint64_t budget)
{
    if (!(tau > 0.0))
        throw std::invalid_argument("select_cut: tau must be positive");
    cam.validate();
    Cut cut;
    cut.interval = interval;
    if (index.empty())
        return cut;

    const Frustum frustum(cam);
    const double focal = cam.focal_px();
    const IndexEntry& root_entry = index.root();
    if (frustum.classify(root) == FrustumClass::outside)
        return cut;

    const double root_sse = screen_space_error(root, cam.position, focal);
    if (budget < root_entry.count) {
        cut.entries.push_back({root_entry.path, interval, root_entry.count, root_sse});
        cut.total_points = root_entry.count;
        cut.budget_exceeded = true;
        return cut;
    }

    std::priority_queue<Candidate, std::vector<Candidate>, PopOrder> open;
    open.push({&root_entry, root, root_sse});
    std::uint64_t total = root_entry.count;

    std::vector<Candidate> children;
    while (!open.empty()) {
        const Candidate node = open.top();
        open.pop();
        if (node.sse <= tau || node.entry->is_leaf()) {
            cut.entries.push_back({node.entry->path, interval, node.entry->count, node.sse});
            continue;
        }
        children.clear();
        std::uint64_t child_points = 0;
        for (int octant = 0; octant < 8; ++octant) {
            if (!(node.entry->child_mask & (1u << octant)))
                continue;
            const NodePath child_path = path_child(NodePath{node.entry->path}, octant);
            const IndexEntry* child = index.find(child_path);
            if (!child)
                throw FormatError("index child " + std::to_string(child_path.code) + " missing");
            const Aabb box = child_aabb(node.box, octant);
            if (frustum.classify(box) == FrustumClass::outside)
                continue;
            children.push_back({child, box, screen_space_error(box, cam.position, focal)});
            child_points += child->count;
        }
        const std::uint64_t refined = total - node.entry->count + child_points;
        if (refined <= budget) {
            total = refined;
            for (const auto& c : children)
                open.push(c);
        } else {
            cut.entries.push_back({node.entry->path, interval, node.entry->count, node.sse});
        }
    }
    std::sort(cut.entries.begin(), cut.entries.end(), cut_order);
    cut.total_points = total;
    return cut;
}

Cut all_leaves_cut(const TreeIndex& index, std::uint32_t interval)
{
    Cut cut;
    cut.interval = interval;
    for (const auto& e : index.entries)
        if (e.is_leaf()) {
            cut.entries.push_back({e.path, interval, e.count, 0.0});
            cut.total_points += e.count;
        }
    return cut;
}

std::string cut_to_json(const Cut& cut, const TreeIndex& index)
{
    using nlohmann::json;
    json blocks = json::array();
    for (const CutEntry& e : cut.entries) {
        const IndexEntry* entry = index.find(NodePath{e.path});
        json b;
        b["path"] = e.path;
        b["count"] = e.count;
        b["sse"] = std::isfinite(e.sse) ? json(e.sse) : json(nullptr);
        b["bytes"] = entry ? entry->length : 0u;
        blocks.push_back(std::move(b));
    }
    json j;
    j["interval"] = cut.interval;
    j["total_points"] = cut.total_points;
    j["budget_exceeded"] = cut.budget_exceeded;
    j["blocks"] = std::move(blocks);
    return j.dump();
}

} // namespace cosmolod
