#include "cosmolod/builder.hpp"
#include "cosmolod/dataset.hpp"

#include "doctest.h"
#include "test_support.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

using namespace cosmolod;
namespace fs = std::filesystem;

namespace {

std::vector<std::byte> slurp(const fs::path& p) { return read_file_bytes(p.string()); }

bool same_dir_bytes(const fs::path& a, const fs::path& b)
{
    std::set<std::string> na, nb;
    for (const auto& e : fs::directory_iterator(a))
        na.insert(e.path().filename().string());
    for (const auto& e : fs::directory_iterator(b))
        nb.insert(e.path().filename().string());
    if (na != nb)
        return false;
    for (const auto& name : na)
        if (slurp(a / name) != slurp(b / name))
            return false;
    return true;
}

Block sample_block(std::size_t m, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    Block b;
    b.path = NodePath{0b1'101'011};
    b.interval = 3;
    b.box_start = Aabb(Vec3(0, 1, 2), Vec3(3, 4, 5));
    b.box_end = Aabb(Vec3(-1, 1, 2), Vec3(3, 4.5, 5));
    b.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        b.qpos_start[i] = {std::uint16_t(rng()), std::uint16_t(rng()), std::uint16_t(rng())};
        b.qpos_end[i] = {std::uint16_t(rng()), std::uint16_t(rng()), std::uint16_t(rng())};
        b.size_start[i] = float(rng() % 1000) / 7.0f;
        b.size_end[i] = float(rng() % 1000) / 9.0f;
        b.weight_start[i] = 1.0f + float(rng() % 100);
        b.weight_end[i] = 1.0f + float(rng() % 100);
        b.id[i] = rng();
    }
    return b;
}

} // namespace

// ---------------------------------------------------------------------------
// subsample

TEST_CASE("subsample identity when the input fits")
{
    const std::vector<double> w{0.5, 2.0, 1.0};
    const std::vector<std::uint64_t> ids{4, 8, 15};
    for (std::size_t cap : {3u, 10u}) {
        const Subsample s = subsample(w, ids, cap, 99);
        CHECK(s.selected == std::vector<std::size_t>{0, 1, 2});
        CHECK(s.weights == w);
    }
}

TEST_CASE("subsample equal weights rescale to 2.0")
{
    const std::vector<double> w{1, 1, 1, 1};
    const std::vector<std::uint64_t> ids{10, 11, 12, 13};
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const Subsample s = subsample(w, ids, 2, seed);
        REQUIRE(s.selected.size() == 2);
        CHECK(std::is_sorted(s.selected.begin(), s.selected.end()));
        CHECK(s.weights[0] == 2.0);
        CHECK(s.weights[1] == 2.0);
    }
}

TEST_CASE("subsample conserves total weight and is keyed by id")
{
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.01, 50.0);
    std::vector<double> w(5000);
    std::vector<std::uint64_t> ids(5000);
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = u(rng);
        ids[i] = rng();
    }
    const Subsample s = subsample(w, ids, 700, 12345);
    REQUIRE(s.selected.size() == 700);
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    CHECK(std::accumulate(s.weights.begin(), s.weights.end(), 0.0) == doctest::Approx(total).epsilon(1e-12));

    // Same ids in a different order select the same particles.
    std::vector<std::size_t> perm(w.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> w2(w.size());
    std::vector<std::uint64_t> ids2(w.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        w2[i] = w[perm[i]];
        ids2[i] = ids[perm[i]];
    }
    const Subsample s2 = subsample(w2, ids2, 700, 12345);
    std::set<std::uint64_t> a, b;
    for (auto i : s.selected)
        a.insert(ids[i]);
    for (auto i : s2.selected)
        b.insert(ids2[i]);
    CHECK(a == b);
}

TEST_CASE("subsample inclusion odds follow weight at small fractions")
{
    const std::size_t m = 10000, n = 1000;
    std::vector<double> w(m);
    std::vector<std::uint64_t> ids(m);
    for (std::size_t i = 0; i < m; ++i) {
        ids[i] = i;
        w[i] = (i % 2 == 0) ? 2.0 : 1.0;
    }
    std::size_t heavy = 0, light = 0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed)
        for (std::size_t i : subsample(w, ids, n, seed).selected)
            (i % 2 == 0 ? heavy : light)++;
    const double ratio = double(heavy) / double(light);
    MESSAGE("heavy/light inclusion ratio = " << ratio);
    CHECK(ratio >= 1.9);
    CHECK(ratio <= 2.1);
}

// ---------------------------------------------------------------------------
// pairing

TEST_CASE("pair_timesteps")
{
    auto start = test::uniform_table(50, 0, 10, 3);
    start.density.setConstant(2.0f);
    auto next = start;
    std::vector<Representative> reps;
    for (std::uint32_t r = 0; r < 50; r += 5)
        reps.push_back({start.id[r], r, 3.0, 2.0});

    SUBCASE("static")
    {
        const PairedEnds e = pair_timesteps(reps, start, IdLookup(next), 1.0);
        CHECK(e.missing == 0);
        Aabb box;
        for (std::size_t i = 0; i < reps.size(); ++i) {
            CHECK(e.pos[i] == Vec3(start.pos.col(reps[i].row)));
            CHECK(e.weight[i] == 3.0);
            box.extend(e.pos[i]);
        }
        CHECK(e.box.min() == box.min());
        CHECK(e.box.max() == box.max());
    }
    SUBCASE("one particle moves +1 in x")
    {
        next.pos(0, 10) += 1.0;
        const PairedEnds e = pair_timesteps(reps, start, IdLookup(next), 1.0);
        const Vec3 q1 = dequantize(quantize(e.pos[2], e.box), e.box);
        const double bound = quantization_error_bound(e.box).x();
        CHECK(std::abs((q1.x() - start.pos(0, 10)) - 1.0) <= bound);
        CHECK(e.pos[2].x() == start.pos(0, 10) + 1.0);
    }
    SUBCASE("missing id keeps the start state")
    {
        // Row 35 has no successor; everyone else moves by +0.5 in x.
        ParticleTable without;
        without.resize(49);
        Eigen::Index k = 0;
        for (Eigen::Index r = 0; r < 50; ++r) {
            if (r == 35)
                continue;
            without.id[static_cast<std::size_t>(k)] = start.id[static_cast<std::size_t>(r)];
            without.pos.col(k) = start.pos.col(r) + Vec3(0.5, 0, 0);
            without.mass[k] = 1;
            without.density[k] = 2;
            without.size[k] = 1;
            ++k;
        }
        const PairedEnds e = pair_timesteps(reps, start, IdLookup(without), 1.0);
        CHECK(e.missing == 1);
        for (std::size_t i = 0; i < reps.size(); ++i) {
            const Vec3 s = start.pos.col(reps[i].row);
            if (reps[i].row == 35)
                CHECK(e.pos[i] == s);
            else
                CHECK(e.pos[i] == s + Vec3(0.5, 0, 0));
        }
    }
    SUBCASE("end weight carries the correction factor")
    {
        next.density.setConstant(4.0f);
        const PairedEnds e = pair_timesteps(reps, start, IdLookup(next), 1.0);
        // raw end 4, correction 3/2
        CHECK(e.weight[0] == doctest::Approx(6.0));
    }
}

// ---------------------------------------------------------------------------
// block and index codecs

TEST_CASE("block codec sizes and round trip")
{
    Block empty = sample_block(0, 1);
    const auto e = encode_block(empty);
    CHECK(e.size() == kBlockHeaderBytes + 4);
    CHECK(decode_block(e) == empty);

    const Block one = sample_block(1, 2);
    const auto b1 = encode_block(one);
    // 128-byte header + 36 payload bytes = 164, padded to 168, + CRC
    CHECK(b1.size() == 172);
    CHECK(block_encoded_size(1) == 172);
    CHECK(decode_block(b1) == one);

    for (std::size_t m : {2u, 3u, 17u, 1000u}) {
        const Block b = sample_block(m, m);
        const auto bytes = encode_block(b);
        CHECK(bytes.size() == block_encoded_size(m));
        CHECK(bytes.size() % 8 == 4);
        CHECK(decode_block(bytes) == b);
        CHECK(decode_block_ids(bytes) == b.id);
    }
}

TEST_CASE("block codec rejects corruption")
{
    const Block b = sample_block(40, 5);
    const auto bytes = encode_block(b);

    for (const std::size_t bit : {std::size_t{8 * 130}, std::size_t{8 * 500 + 3}, 8 * (bytes.size() - 6) + 1}) {
        auto flipped = bytes;
        flipped[bit / 8] ^= std::byte(1u << (bit % 8));
        CHECK_THROWS_WITH_AS(decode_block(flipped), doctest::Contains("CRC"), FormatError);
    }
    auto magic = bytes;
    magic[3] = std::byte{'2'};
    CHECK_THROWS_WITH_AS(decode_block(magic), doctest::Contains("magic"), FormatError);

    CHECK_THROWS_WITH_AS(decode_block(bytes, 39), doctest::Contains("capacity"), FormatError);
    CHECK_NOTHROW(decode_block(bytes, 40));

    CHECK_THROWS_WITH_AS(decode_block(std::span(bytes).first(bytes.size() - 4)), doctest::Contains("truncated"),
                         FormatError);
    CHECK_THROWS_AS(decode_block(std::span(bytes).first(20)), FormatError);
    auto longer = bytes;
    longer.push_back(std::byte{0});
    CHECK_THROWS_AS(decode_block(longer), FormatError);
}

TEST_CASE("index codec and validation")
{
    TreeIndex single;
    single.entries.push_back({1, 0, 10, 0, std::uint32_t(block_encoded_size(10))});
    const auto bytes = encode_index(single);
    CHECK(bytes.size() == kIndexRecordBytes);
    CHECK(decode_index(bytes).entries == single.entries);

    TreeIndex nine;
    nine.entries.push_back({1, 0xFF, 5, 0, std::uint32_t(block_encoded_size(5))});
    std::uint64_t offset = nine.entries[0].length;
    for (int c = 0; c < 8; ++c) {
        const auto len = std::uint32_t(block_encoded_size(2));
        nine.entries.push_back({std::uint64_t(8 + c), 0, 2, offset, len});
        offset += len;
    }
    const TreeIndex back = decode_index(encode_index(nine));
    CHECK(back.entries == nine.entries);
    CHECK(back.root().child_mask == 0xFF);
    CHECK(back.find(NodePath{13})->count == 2);
    CHECK(back.find(NodePath{99}) == nullptr);

    TreeIndex orphan;
    orphan.entries.push_back({1, 0, 4, 0, 132});
    orphan.entries.push_back({8 * 12 + 1, 0, 4, 132, 132});
    CHECK_THROWS_WITH_AS(orphan.validate(), doctest::Contains("parent"), FormatError);
    CHECK_THROWS_AS(decode_index(encode_index(orphan)), FormatError);

    TreeIndex unsorted = nine;
    std::swap(unsorted.entries[2], unsorted.entries[3]);
    CHECK_THROWS_AS(unsorted.validate(), FormatError);

    TreeIndex wrong_mask = nine;
    wrong_mask.entries[0].child_mask = 0x7F;
    CHECK_THROWS_AS(wrong_mask.validate(), FormatError);

    TreeIndex overlap = nine;
    overlap.entries[4].offset -= 8;
    CHECK_THROWS_AS(overlap.validate(), FormatError);

    CHECK_THROWS_AS(decode_index(std::span(bytes).first(31)), FormatError);
}

// ---------------------------------------------------------------------------
// build

TEST_CASE("small inputs build a single root leaf")
{
    auto a = test::uniform_table(1000, 0, 1, 7, 0.0);
    auto b = test::uniform_table(1000, 0, 1, 8, 1.0);
    const IntervalBuild built = build_interval(a, b, dataset_root(std::vector{a, b}), 0, BuildConfig{});
    REQUIRE(built.blocks.size() == 1);
    CHECK(built.blocks[0].path == NodePath::root());
    CHECK(built.blocks[0].count() == 1000);
    CHECK(built.index.root().child_mask == 0);
    CHECK(built.index.root().count == 1000);
}

TEST_CASE("points in one octant give a single child subtree")
{
    // Root cube [0,1]^3 pinned by two corner particles; the rest sit in octant 6 (x, y upper, z lower).
    auto t = test::uniform_table(20000, 0, 1, 11);
    for (Eigen::Index i = 0; i < 20000; ++i)
        t.pos.col(i) = Vec3(0.5 + 0.49 * t.pos(0, i), 0.5 + 0.49 * t.pos(1, i), 0.01 + 0.48 * t.pos(2, i));
    t.pos.col(0) = Vec3(0.5, 0.5, 0.0);
    t.pos.col(1) = Vec3(1.0, 1.0, 0.4999);
    const Aabb root(Vec3::Zero(), Vec3::Ones());
    const IntervalBuild built = build_interval(t, t, root, 0, BuildConfig{});
    const IndexEntry& r = built.index.root();
    CHECK(r.child_mask == (1u << 6));
    CHECK(std::popcount(unsigned(r.child_mask)) == 1);
    CHECK(r.count == 16000);
    CHECK(built.blocks[0].count() == 16000);
    CHECK(built.blocks[1].path == path_child(NodePath::root(), 6));
}

TEST_CASE("max-depth leaves keep every point")
{
    auto t = test::uniform_table(50, 0, 1, 1);
    for (Eigen::Index i = 0; i < 50; ++i)
        t.pos.col(i) = Vec3(0.3, 0.3, 0.3);
    t.pos.col(0) = Vec3(0, 0, 0);
    t.pos.col(1) = Vec3(1, 1, 1);
    BuildConfig cfg;
    cfg.node_capacity = 10;
    cfg.max_depth = 3;
    const IntervalBuild built = build_interval(t, t, Aabb(Vec3::Zero(), Vec3::Ones()), 0, cfg);
    CHECK(built.stats.overfull_leaves == 1);
    CHECK(built.stats.max_block_count == 48);
    for (const Block& b : built.blocks)
        CHECK(path_depth(b.path) <= 3);
}

namespace {

struct BuiltFixture {
    std::vector<ParticleTable> tables;
    Aabb root;
    BuildConfig cfg;
    IntervalBuild built;

    BuiltFixture()
    {
        SynthConfig sc;
        sc.n_points = 40000;
        sc.n_clusters = 5;
        sc.n_snapshots = 2;
        sc.drift_speed = 3.0;
        sc.seed = 5;
        tables = gen_synthetic(sc);
        root = dataset_root(tables);
        cfg.node_capacity = 900;
        cfg.seed = 17;
        built = build_interval(tables[0], tables[1], root, 0, cfg);
    }
};

const BuiltFixture& fixture()
{
    static const BuiltFixture f;
    return f;
}

} // namespace

TEST_CASE("built tree properties")
{
    const auto& f = fixture();
    const ParticleTable& start = f.tables[0];
    const ParticleTable& end = f.tables[1];
    const auto& blocks = f.built.blocks;
    const auto& index = f.built.index;
    REQUIRE(blocks.size() == index.entries.size());
    CHECK_NOTHROW(index.validate());
    CHECK(blocks.size() > 50);

    std::map<std::uint64_t, const Block*> by_path;
    for (const Block& b : blocks)
        by_path[b.path.code] = &b;
    std::map<std::uint64_t, Eigen::Index> row_of;
    for (std::size_t i = 0; i < start.count(); ++i)
        row_of[start.id[i]] = static_cast<Eigen::Index>(i);

    // Raw weight inside each node, from the Morton cell of every particle.
    std::map<std::uint64_t, double> raw_in_node;
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(start.count()); ++i) {
        const double w = double(start.mass[i]) * double(start.density[i]);
        for (int d = 0; d <= kMaxDepth; ++d) {
            const std::uint64_t key = morton_key<double>(start.pos.col(i), f.root, d);
            if (!by_path.count(key))
                break;
            raw_in_node[key] += w;
        }
    }

    std::multiset<std::uint64_t> leaf_ids;
    std::size_t checked_parents = 0;
    for (std::size_t k = 0; k < blocks.size(); ++k) {
        const Block& b = blocks[k];
        const IndexEntry& e = index.entries[k];
        CHECK(e.path == b.path.code);
        CHECK(e.count == b.count());
        REQUIRE(b.count() <= f.cfg.node_capacity);
        CHECK(std::is_sorted(b.id.begin(), b.id.end()));
        CHECK(std::adjacent_find(b.id.begin(), b.id.end()) == b.id.end());

        double wsum = 0;
        for (std::size_t i = 0; i < b.count(); ++i) {
            REQUIRE(b.weight_start[i] > 0);
            REQUIRE(b.weight_end[i] > 0);
            wsum += b.weight_start[i];
            const Eigen::Index r = row_of.at(b.id[i]);
            // Quantization honesty against the raw start and end positions.
            const Vec3 ps = dequantize(b.qpos_start[i], b.box_start);
            const Vec3 pe = dequantize(b.qpos_end[i], b.box_end);
            CHECK(b.box_start.contains(ps));
            CHECK(b.box_end.contains(pe));
            CHECK(((ps - start.pos.col(r)).cwiseAbs().array() <= quantization_error_bound(b.box_start).array()).all());
            CHECK(((pe - end.pos.col(r)).cwiseAbs().array() <= quantization_error_bound(b.box_end).array()).all());
            CHECK(f.root.contains(Vec3(start.pos.col(r))));
            CHECK(path_aabb(b.path, f.root).contains(Vec3(start.pos.col(r))));
        }
        CHECK(wsum == doctest::Approx(raw_in_node.at(b.path.code)).epsilon(1e-6));

        if (e.is_leaf()) {
            leaf_ids.insert(b.id.begin(), b.id.end());
        } else {
            std::set<std::uint64_t> child_ids;
            for (int c = 0; c < 8; ++c)
                if (e.child_mask & (1u << c)) {
                    const Block* child = by_path.at(path_child(b.path, c).code);
                    child_ids.insert(child->id.begin(), child->id.end());
                }
            for (std::uint64_t id : b.id)
                REQUIRE(child_ids.count(id) == 1);
            CHECK(b.count() == f.cfg.node_capacity);
            ++checked_parents;
        }
    }
    CHECK(checked_parents > 5);
    const std::multiset<std::uint64_t> all(start.id.begin(), start.id.end());
    CHECK(leaf_ids == all);
    CHECK(f.built.stats.missing_pairs == 0);
}

TEST_CASE("build output is independent of thread count and reproducible")
{
    const auto& f = fixture();
    test::TempDir dir("determinism");
    BuildConfig one = f.cfg, four = f.cfg;
    one.threads = 1;
    four.threads = 4;
    const auto s1 = build(std::span<const ParticleTable>(f.tables), one, dir / "a");
    build(std::span<const ParticleTable>(f.tables), four, dir / "b");
    build(std::span<const ParticleTable>(f.tables), one, dir / "c");
    CHECK(same_dir_bytes(dir.path / "a", dir.path / "b"));
    CHECK(same_dir_bytes(dir.path / "a", dir.path / "c"));
    CHECK(s1.intervals == 1);

    BuildConfig reseeded = f.cfg;
    reseeded.seed = 18;
    build(std::span<const ParticleTable>(f.tables), reseeded, dir / "d");
    CHECK_FALSE(same_dir_bytes(dir.path / "a", dir.path / "d"));

    // The file-backed pipeline writes the same bytes as the in-memory one.
    for (std::size_t s = 0; s < f.tables.size(); ++s)
        write_table(f.tables[s], dir / ("snap_" + std::to_string(s) + ".cpt"));
    build(std::vector<std::string>{dir / "snap_0.cpt", dir / "snap_1.cpt"}, f.cfg, dir / "e");
    CHECK(same_dir_bytes(dir.path / "a", dir.path / "e"));
}

TEST_CASE("multi-interval file build and dataset reader")
{
    SynthConfig sc;
    sc.n_points = 6000;
    sc.n_snapshots = 4;
    const auto tables = gen_synthetic(sc);
    test::TempDir dir("multi");
    std::vector<std::string> paths;
    for (std::size_t s = 0; s < tables.size(); ++s) {
        paths.push_back(dir / ("snap_" + std::to_string(s) + ".cpt"));
        write_table(tables[s], paths.back());
    }
    BuildConfig cfg;
    cfg.node_capacity = 400;
    const BuildSummary summary = build(paths, cfg, dir / "ds");
    CHECK(summary.intervals == 3);
    CHECK(summary.missing_pairs == 0);
    CHECK(summary.overfull_leaves == 0);

    const Dataset ds(dir / "ds");
    CHECK(ds.meta().snapshot_times == std::vector<double>{0, 1, 2, 3});
    CHECK(ds.meta().raw_counts == std::vector<std::uint64_t>(4, 6000));
    CHECK(ds.meta().node_capacity == 400);
    const Aabb root = dataset_root(tables);
    CHECK(ds.meta().root.min() == root.min());
    CHECK(ds.meta().root.max() == root.max());
    std::size_t nodes = 0;
    for (std::size_t s = 0; s < 3; ++s) {
        const TreeIndex& index = ds.index(s);
        nodes += index.entries.size();
        // Each interval equals a direct in-memory build of that interval.
        const IntervalBuild direct = build_interval(tables[s], tables[s + 1], root, std::uint32_t(s), cfg);
        REQUIRE(direct.blocks.size() == index.entries.size());
        for (std::size_t k = 0; k < direct.blocks.size(); ++k) {
            const Block read = ds.read_block(s, direct.blocks[k].path);
            REQUIRE(read == direct.blocks[k]);
            CHECK(read.interval == s);
        }
        // Leaves at s + 1 start where leaves at s end (same raw states).
        std::multiset<std::uint64_t> ids;
        for (const auto& e : index.entries)
            if (e.is_leaf())
                for (auto id : ds.read_block(s, NodePath{e.path}).id)
                    ids.insert(id);
        CHECK(ids.size() == 6000);
    }
    CHECK(nodes == summary.nodes);
    CHECK_FALSE(ds.block_bytes(0, NodePath{999999}).has_value());
    CHECK_THROWS(ds.index(3));

    CHECK(ds.meta().interval_for_time(0.0) == 0);
    CHECK(ds.meta().interval_for_time(1.0) == 1);
    CHECK(ds.meta().interval_for_time(2.0) == 2);
    CHECK(ds.meta().interval_for_time(3.0) == 2);
    CHECK(ds.meta().interval_alpha(2, 2.0) == 0.0);
    CHECK(ds.meta().interval_alpha(1, 1.25) == 0.25);
    CHECK_THROWS_AS(ds.meta().interval_for_time(3.01), std::out_of_range);
    CHECK_THROWS_AS(ds.meta().interval_for_time(-0.1), std::out_of_range);

    const DatasetMeta back = DatasetMeta::from_json(ds.meta().to_json());
    CHECK(back.to_json() == ds.meta().to_json());
}

TEST_CASE("build rejects bad input")
{
    auto a = test::uniform_table(100, 0, 1, 1, 0.0);
    test::TempDir dir("bad");
    CHECK_THROWS(build(std::vector<ParticleTable>{a}, BuildConfig{}, dir / "x"));
    CHECK_THROWS(build(std::vector<ParticleTable>{a, a}, BuildConfig{}, dir / "y")); // equal times
    BuildConfig cfg;
    cfg.node_capacity = 0;
    CHECK_THROWS(cfg.validate());
    cfg = BuildConfig{};
    cfg.max_depth = 21;
    CHECK_THROWS(cfg.validate());
    CHECK_THROWS_WITH(build(std::vector<std::string>{dir / "nope0.cpt", dir / "nope1.cpt"}, BuildConfig{}, dir / "z"),
                      doctest::Contains("nope0.cpt"));
}
