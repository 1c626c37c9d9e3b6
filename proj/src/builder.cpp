#include "cosmolod/builder.hpp"
#include "cosmolod/dataset.hpp"
#include "cosmolod/parallel.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace cosmolod {

void BuildConfig::validate() const
{
    if (node_capacity < 1)
        throw std::invalid_argument("build config: node capacity must be >= 1");
    if (max_depth < 1 || max_depth > kMaxDepth)
        throw std::invalid_argument("build config: max depth must be in [1, 20]");
    if (!std::isfinite(density_exponent))
        throw std::invalid_argument("build config: density exponent must be finite");
}

IdLookup::IdLookup(const ParticleTable& table) : table_(&table)
{
    sorted_.reserve(table.count());
    for (std::size_t i = 0; i < table.count(); ++i)
        sorted_.emplace_back(table.id[i], static_cast<std::uint32_t>(i));
    std::sort(sorted_.begin(), sorted_.end());
}

std::int64_t IdLookup::find(std::uint64_t id) const noexcept
{
    const auto it = std::lower_bound(sorted_.begin(), sorted_.end(), std::make_pair(id, std::uint32_t{0}));
    return (it != sorted_.end() && it->first == id) ? std::int64_t(it->second) : -1;
}

PairedEnds pair_timesteps(std::span<const Representative> reps, const ParticleTable& start, const IdLookup& next,
                          double density_exponent)
{
    const ParticleTable& end = next.table();
    PairedEnds out;
    out.pos.reserve(reps.size());
    out.size.reserve(reps.size());
    out.weight.reserve(reps.size());
    for (const Representative& r : reps) {
        const std::int64_t row = next.find(r.id);
        if (row < 0) {
            ++out.missing;
            out.pos.emplace_back(start.pos.col(r.row));
            out.size.push_back(start.size[r.row]);
            out.weight.push_back(r.weight);
        } else {
            const auto e = static_cast<Eigen::Index>(row);
            out.pos.emplace_back(end.pos.col(e));
            out.size.push_back(end.size[e]);
            const double raw_end = sampling_weight(end.mass[e], end.density[e], density_exponent);
            // Same correction factor as the start weight; exact when nothing changed.
            out.weight.push_back(raw_end == r.raw_weight ? r.weight : raw_end * (r.weight / r.raw_weight));
        }
        out.box.extend(out.pos.back());
    }
    if (reps.empty())
        out.box = Aabb(Vec3::Zero(), Vec3::Zero());
    return out;
}

Aabb dataset_root(std::span<const ParticleTable> snapshots)
{
    Aabb box;
    for (const auto& t : snapshots)
        if (t.count() > 0)
            box.extend(t.bounds());
    if (box.isEmpty())
        box = Aabb(Vec3::Zero(), Vec3::Zero());
    return bounding_cube(box);
}

namespace {

struct BuildNode {
    NodePath path;
    int depth = 0;
    std::uint32_t lo = 0, hi = 0;
    std::array<std::int32_t, 8> child{-1, -1, -1, -1, -1, -1, -1, -1};
    std::uint8_t child_mask = 0;
    std::vector<Representative> reps;

    bool is_leaf() const noexcept { return child_mask == 0; }
};

// Splits [lo, hi) of Morton-sorted rows into the node tree.
class Partitioner {
public:
    Partitioner(const std::vector<std::uint64_t>& keys, const std::vector<std::uint32_t>& order,
                const BuildConfig& cfg)
        : keys_(keys), order_(order), cfg_(cfg)
    {
    }

    std::vector<BuildNode> run()
    {
        if (!order_.empty())
            visit(NodePath::root(), 0, 0, static_cast<std::uint32_t>(order_.size()));
        return std::move(nodes_);
    }

private:
    std::int32_t visit(NodePath path, int depth, std::uint32_t lo, std::uint32_t hi)
    {
        const auto index = static_cast<std::int32_t>(nodes_.size());
        BuildNode node;
        node.path = path;
        node.depth = depth;
        node.lo = lo;
        node.hi = hi;
        nodes_.push_back(std::move(node));
        if (hi - lo <= cfg_.node_capacity || depth >= cfg_.max_depth)
            return index;

        const int shift = 3 * (cfg_.max_depth - depth - 1);
        std::uint32_t begin = lo;
        while (begin < hi) {
            const int octant = static_cast<int>((keys_[order_[begin]] >> shift) & 7u);
            std::uint32_t end = begin;
            while (end < hi && static_cast<int>((keys_[order_[end]] >> shift) & 7u) == octant)
                ++end;
            const std::int32_t c = visit(path_child(path, octant), depth + 1, begin, end);
            nodes_[static_cast<std::size_t>(index)].child[static_cast<std::size_t>(octant)] = c;
            nodes_[static_cast<std::size_t>(index)].child_mask |= static_cast<std::uint8_t>(1u << octant);
            begin = end;
        }
        return index;
    }

    const std::vector<std::uint64_t>& keys_;
    const std::vector<std::uint32_t>& order_;
    const BuildConfig& cfg_;
    std::vector<BuildNode> nodes_;
};

void select_representatives(BuildNode& node, std::vector<BuildNode>& nodes, const ParticleTable& start,
                            const std::vector<std::uint32_t>& order, const BuildConfig& cfg)
{
    if (node.is_leaf()) {
        node.reps.reserve(node.hi - node.lo);
        for (std::uint32_t i = node.lo; i < node.hi; ++i) {
            const std::uint32_t row = order[i];
            const double w = sampling_weight(start.mass[row], start.density[row], cfg.density_exponent);
            node.reps.push_back({start.id[row], row, w, w});
        }
    } else {
        std::vector<Representative> pool;
        for (std::int32_t c : node.child)
            if (c >= 0) {
                const auto& reps = nodes[static_cast<std::size_t>(c)].reps;
                pool.insert(pool.end(), reps.begin(), reps.end());
            }
        std::sort(pool.begin(), pool.end(),
                  [](const Representative& a, const Representative& b) { return a.id < b.id; });
        std::vector<double> weights(pool.size());
        std::vector<std::uint64_t> ids(pool.size());
        for (std::size_t i = 0; i < pool.size(); ++i) {
            weights[i] = pool[i].weight;
            ids[i] = pool[i].id;
        }
        const Subsample pick = subsample(weights, ids, cfg.node_capacity, node_seed(cfg.seed, node.path));
        node.reps.reserve(pick.selected.size());
        for (std::size_t j = 0; j < pick.selected.size(); ++j) {
            Representative r = pool[pick.selected[j]];
            r.weight = pick.weights[j];
            node.reps.push_back(r);
        }
    }
    std::sort(node.reps.begin(), node.reps.end(),
              [](const Representative& a, const Representative& b) { return a.id < b.id; });
}

struct NodeOutput {
    Block block;
    std::size_t clamped = 0;
    std::size_t missing = 0;
};

NodeOutput make_block(const BuildNode& node, const ParticleTable& start, const IdLookup& next,
                      std::uint32_t interval, const BuildConfig& cfg)
{
    NodeOutput out;
    Block& b = out.block;
    b.path = node.path;
    b.interval = interval;
    const std::size_t m = node.reps.size();
    b.resize(m);

    Aabb box_start;
    for (const auto& r : node.reps)
        box_start.extend(Vec3(start.pos.col(r.row)));
    if (m == 0)
        box_start = Aabb(Vec3::Zero(), Vec3::Zero());
    const PairedEnds ends = pair_timesteps(node.reps, start, next, cfg.density_exponent);
    b.box_start = box_start;
    b.box_end = ends.box;
    out.missing = ends.missing;

    for (std::size_t i = 0; i < m; ++i) {
        const Representative& r = node.reps[i];
        bool clamped_start = false, clamped_end = false;
        b.qpos_start[i] = quantize<double>(start.pos.col(r.row), box_start, &clamped_start);
        b.qpos_end[i] = quantize<double>(ends.pos[i], ends.box, &clamped_end);
        out.clamped += std::size_t(clamped_start) + std::size_t(clamped_end);
        b.size_start[i] = start.size[r.row];
        b.size_end[i] = static_cast<float>(ends.size[i]);
        b.weight_start[i] = static_cast<float>(r.weight);
        b.weight_end[i] = static_cast<float>(ends.weight[i]);
        b.id[i] = r.id;
    }
    return out;
}

} // namespace

IntervalBuild build_interval(const ParticleTable& start, const ParticleTable& end, const Aabb& root,
                             std::uint32_t interval, const BuildConfig& cfg)
{
    cfg.validate();
    const std::size_t n = start.count();

    std::vector<std::uint64_t> keys(n);
    parallel_for(n, cfg.threads, [&](std::size_t i) {
        keys[i] = morton_key<double>(start.pos.col(static_cast<Eigen::Index>(i)), root, cfg.max_depth);
    });
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), std::uint32_t{0});
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        return keys[a] != keys[b] ? keys[a] < keys[b] : start.id[a] < start.id[b];
    });

    std::vector<BuildNode> nodes = Partitioner(keys, order, cfg).run();

    // Bottom-up: every level depends only on the level below it.
    int deepest = 0;
    for (const auto& node : nodes)
        deepest = std::max(deepest, node.depth);
    std::vector<std::vector<std::size_t>> levels(static_cast<std::size_t>(deepest) + 1);
    for (std::size_t i = 0; i < nodes.size(); ++i)
        levels[static_cast<std::size_t>(nodes[i].depth)].push_back(i);
    for (int depth = deepest; depth >= 0; --depth) {
        const auto& level = levels[static_cast<std::size_t>(depth)];
        parallel_for(level.size(), cfg.threads,
                     [&](std::size_t k) { select_representatives(nodes[level[k]], nodes, start, order, cfg); });
    }

    std::vector<std::size_t> by_path(nodes.size());
    std::iota(by_path.begin(), by_path.end(), std::size_t{0});
    std::sort(by_path.begin(), by_path.end(),
              [&](std::size_t a, std::size_t b) { return nodes[a].path < nodes[b].path; });

    const IdLookup next(end);
    std::vector<NodeOutput> outputs(nodes.size());
    parallel_for(nodes.size(), cfg.threads,
                 [&](std::size_t k) { outputs[k] = make_block(nodes[by_path[k]], start, next, interval, cfg); });

    IntervalBuild result;
    result.blocks.reserve(nodes.size());
    result.index.entries.reserve(nodes.size());
    std::uint64_t offset = 0;
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        const BuildNode& node = nodes[by_path[k]];
        const std::size_t m = node.reps.size();
        const auto length = static_cast<std::uint32_t>(block_encoded_size(m));
        result.index.entries.push_back(
            {node.path.code, node.child_mask, static_cast<std::uint32_t>(m), offset, length});
        offset += length;

        IntervalStats& st = result.stats;
        ++st.nodes;
        ++st.depth_histogram[static_cast<std::size_t>(node.depth)];
        if (node.is_leaf()) {
            ++st.leaves;
            if (m > cfg.node_capacity)
                ++st.overfull_leaves;
        }
        st.clamped += outputs[k].clamped;
        st.missing_pairs += outputs[k].missing;
        st.max_block_count = std::max(st.max_block_count, m);
        result.blocks.push_back(std::move(outputs[k].block));
    }
    return result;
}

namespace {

std::size_t write_interval(const IntervalBuild& built, const std::filesystem::path& out_dir, std::size_t s)
{
    const auto blocks_path = (out_dir / blocks_file_name(s)).string();
    std::ofstream out(blocks_path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot create " + blocks_path);
    std::size_t bytes = 0;
    for (const Block& b : built.blocks) {
        const auto encoded = encode_block(b);
        out.write(reinterpret_cast<const char*>(encoded.data()), static_cast<std::streamsize>(encoded.size()));
        bytes += encoded.size();
    }
    if (!out)
        throw std::runtime_error("short write to " + blocks_path);
    write_index(built.index, (out_dir / index_file_name(s)).string());
    return bytes + built.index.entries.size() * kIndexRecordBytes;
}

void accumulate(BuildSummary& summary, const IntervalStats& st)
{
    ++summary.intervals;
    summary.nodes += st.nodes;
    summary.overfull_leaves += st.overfull_leaves;
    summary.clamped += st.clamped;
    summary.missing_pairs += st.missing_pairs;
    for (std::size_t d = 0; d < st.depth_histogram.size(); ++d)
        summary.depth_histogram[d] += st.depth_histogram[d];
}

// Snapshot source that either owns file paths or borrows in-memory tables.
template <typename Load>
BuildSummary run_build(std::size_t count, Load&& load, const BuildConfig& cfg, const std::string& out_dir_str)
{
    cfg.validate();
    if (count < 2)
        throw std::invalid_argument("build needs at least two snapshots");
    const std::filesystem::path out_dir(out_dir_str);
    std::filesystem::create_directories(out_dir);

    DatasetMeta meta;
    meta.node_capacity = cfg.node_capacity;
    meta.density_exponent = cfg.density_exponent;
    meta.seed = cfg.seed;
    meta.max_depth = cfg.max_depth;

    Aabb bounds;
    for (std::size_t s = 0; s < count; ++s) {
        const ParticleTable& t = load(s);
        if (t.count() > 0)
            bounds.extend(t.bounds());
        meta.snapshot_times.push_back(t.snapshot_time);
        meta.raw_counts.push_back(t.count());
        if (s > 0 && !(meta.snapshot_times[s] > meta.snapshot_times[s - 1]))
            throw std::invalid_argument("snapshot times must be strictly increasing");
    }
    if (bounds.isEmpty())
        bounds = Aabb(Vec3::Zero(), Vec3::Zero());
    meta.root = bounding_cube(bounds);

    BuildSummary summary;
    for (std::size_t s = 0; s + 1 < count; ++s) {
        const ParticleTable& start = load(s);
        const ParticleTable& end = load(s + 1);
        const IntervalBuild built = build_interval(start, end, meta.root, static_cast<std::uint32_t>(s), cfg);
        summary.bytes_written += write_interval(built, out_dir, s);
        accumulate(summary, built.stats);
        meta.interval_nodes.push_back(built.stats.nodes);
        meta.max_block_count = std::max(meta.max_block_count, built.stats.max_block_count);
    }

    const std::string meta_text = meta.to_json();
    const auto meta_path = (out_dir / "meta.json").string();
    std::ofstream(meta_path, std::ios::trunc) << meta_text;
    summary.bytes_written += meta_text.size();
    return summary;
}

} // namespace

BuildSummary build(const std::vector<std::string>& snapshot_paths, const BuildConfig& cfg,
                   const std::string& out_dir)
{
    // Snapshot s lives in slot s % 2, so loading s never evicts s - 1 or s + 1.
    std::size_t held[2] = {SIZE_MAX, SIZE_MAX};
    ParticleTable cache[2];
    auto load = [&](std::size_t s) -> const ParticleTable& {
        const std::size_t slot = s % 2;
        if (held[slot] != s) {
            held[slot] = SIZE_MAX;
            cache[slot] = read_table(snapshot_paths.at(s));
            held[slot] = s;
        }
        return cache[slot];
    };
    return run_build(snapshot_paths.size(), load, cfg, out_dir);
}

BuildSummary build(std::span<const ParticleTable> snapshots, const BuildConfig& cfg, const std::string& out_dir)
{
    return run_build(
        snapshots.size(), [&](std::size_t s) -> const ParticleTable& { return snapshots[s]; }, cfg, out_dir);
}

} // namespace cosmolod
