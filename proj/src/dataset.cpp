#include "cosmolod/dataset.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace cosmolod {

using nlohmann::json;

std::size_t DatasetMeta::interval_for_time(double t) const
{
    if (snapshot_times.size() < 2)
        throw std::out_of_range("dataset has no intervals");
    if (!(t >= snapshot_times.front() && t <= snapshot_times.back()))
        throw std::out_of_range("time " + std::to_string(t) + " outside dataset span [" +
                                std::to_string(snapshot_times.front()) + ", " +
                                std::to_string(snapshot_times.back()) + "]");
    const auto it = std::upper_bound(snapshot_times.begin(), snapshot_times.end(), t);
    const auto s = static_cast<std::size_t>(it - snapshot_times.begin());
    return std::min(s == 0 ? 0 : s - 1, intervals() - 1);
}

double DatasetMeta::interval_alpha(std::size_t s, double t) const
{
    const double t0 = snapshot_times.at(s);
    const double t1 = snapshot_times.at(s + 1);
    return t1 > t0 ? (t - t0) / (t1 - t0) : 0.0;
}

std::string DatasetMeta::to_json() const
{
    json j;
    j["format"] = "cosmolod-dataset";
    j["version"] = 1;
    j["root_box"] = {{"min", {root.min().x(), root.min().y(), root.min().z()}},
                     {"max", {root.max().x(), root.max().y(), root.max().z()}}};
    j["node_capacity"] = node_capacity;
    j["alpha"] = density_exponent;
    j["seed"] = seed;
    j["max_depth"] = max_depth;
    j["snapshot_times"] = snapshot_times;
    j["raw_counts"] = raw_counts;
    j["interval_nodes"] = interval_nodes;
    j["max_block_count"] = max_block_count;
    return j.dump(2) + "\n";
}

DatasetMeta DatasetMeta::from_json(const std::string& text)
{
    const json j = json::parse(text);
    if (j.value("format", "") != "cosmolod-dataset")
        throw FormatError("meta.json is not a cosmolod dataset");
    DatasetMeta m;
    const auto& box = j.at("root_box");
    for (int axis = 0; axis < 3; ++axis) {
        m.root.min()[axis] = box.at("min").at(axis).get<double>();
        m.root.max()[axis] = box.at("max").at(axis).get<double>();
    }
    m.node_capacity = j.at("node_capacity").get<std::size_t>();
    m.density_exponent = j.at("alpha").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.max_depth = j.at("max_depth").get<int>();
    m.snapshot_times = j.at("snapshot_times").get<std::vector<double>>();
    m.raw_counts = j.at("raw_counts").get<std::vector<std::uint64_t>>();
    m.interval_nodes = j.value("interval_nodes", std::vector<std::size_t>{});
    m.max_block_count = j.value("max_block_count", m.node_capacity);
    if (m.snapshot_times.size() < 2)
        throw FormatError("meta.json lists fewer than two snapshots");
    return m;
}

std::string blocks_file_name(std::size_t interval) { return "blocks_" + std::to_string(interval) + ".bin"; }
std::string index_file_name(std::size_t interval) { return "index_" + std::to_string(interval) + ".bin"; }

Dataset::Dataset(std::string dir) : dir_(std::move(dir))
{
    const auto meta_path = (std::filesystem::path(dir_) / "meta.json").string();
    std::ifstream in(meta_path);
    if (!in)
        throw std::runtime_error("cannot open " + meta_path);
    std::ostringstream ss;
    ss << in.rdbuf();
    meta_text_ = ss.str();
    try {
        meta_ = DatasetMeta::from_json(meta_text_);
    } catch (const json::exception& e) {
        throw FormatError(meta_path + ": " + e.what());
    }
    for (std::size_t s = 0; s < meta_.intervals(); ++s) {
        indices_.push_back(read_index(index_path(s)));
        const auto blocks_size = std::filesystem::file_size(blocks_path(s));
        for (const auto& e : indices_.back().entries)
            if (e.offset + e.length > blocks_size)
                throw FormatError(index_path(s) + ": entry " + std::to_string(e.path) +
                                  " points past the end of " + blocks_file_name(s));
    }
}

const TreeIndex& Dataset::index(std::size_t interval) const
{
    if (interval >= indices_.size())
        throw std::out_of_range("interval " + std::to_string(interval) + " out of range");
    return indices_[interval];
}

std::string Dataset::index_path(std::size_t interval) const
{
    return (std::filesystem::path(dir_) / index_file_name(interval)).string();
}

std::string Dataset::blocks_path(std::size_t interval) const
{
    return (std::filesystem::path(dir_) / blocks_file_name(interval)).string();
}

std::optional<std::vector<std::byte>> Dataset::block_bytes(std::size_t interval, NodePath path) const
{
    const IndexEntry* e = index(interval).find(path);
    if (!e)
        return std::nullopt;
    std::ifstream in(blocks_path(interval), std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open " + blocks_path(interval));
    std::vector<std::byte> bytes(e->length);
    in.seekg(static_cast<std::streamoff>(e->offset));
    if (!in.read(reinterpret_cast<char*>(bytes.data()), e->length))
        throw std::runtime_error("short read of block " + std::to_string(path.code) + " from " +
                                 blocks_path(interval));
    return bytes;
}

Block Dataset::read_block(std::size_t interval, NodePath path) const
{
    auto bytes = block_bytes(interval, path);
    if (!bytes)
        throw std::out_of_range("no block " + std::to_string(path.code) + " in interval " + std::to_string(interval));
    return decode_block(*bytes, block_count_limit());
}

std::size_t Dataset::block_count_limit() const noexcept
{
    return std::max(meta_.node_capacity, meta_.max_block_count);
}

} // namespace cosmolod
