#include "cosmolod/block.hpp"
#include "cosmolod/hash.hpp"

#include <cstring>

namespace cosmolod {

static_assert(sizeof(QPos) == 6, "QPos must pack to three u16");

void Block::resize(std::size_t m)
{
    qpos_start.resize(m);
    qpos_end.resize(m);
    size_start.resize(m);
    size_end.resize(m);
    weight_start.resize(m);
    weight_end.resize(m);
    id.resize(m);
}

bool operator==(const Block& a, const Block& b)
{
    return a.path == b.path && a.interval == b.interval && a.box_start.min() == b.box_start.min() &&
           a.box_start.max() == b.box_start.max() && a.box_end.min() == b.box_end.min() &&
           a.box_end.max() == b.box_end.max() && a.qpos_start == b.qpos_start && a.qpos_end == b.qpos_end &&
           a.size_start == b.size_start && a.size_end == b.size_end && a.weight_start == b.weight_start &&
           a.weight_end == b.weight_end && a.id == b.id;
}

namespace {

void put_box(ByteWriter& w, const Aabb& box)
{
    for (int axis = 0; axis < 3; ++axis)
        w.put<double>(box.min()[axis]);
    for (int axis = 0; axis < 3; ++axis)
        w.put<double>(box.max()[axis]);
}

Aabb get_box(ByteReader& r)
{
    Aabb box;
    for (int axis = 0; axis < 3; ++axis)
        box.min()[axis] = r.get<double>();
    for (int axis = 0; axis < 3; ++axis)
        box.max()[axis] = r.get<double>();
    return box;
}

void put_qpos(ByteWriter& w, const std::vector<QPos>& q)
{
    for (const QPos& p : q) {
        w.put<std::uint16_t>(p.x);
        w.put<std::uint16_t>(p.y);
        w.put<std::uint16_t>(p.z);
    }
}

void get_qpos(ByteReader& r, std::vector<QPos>& q)
{
    for (QPos& p : q) {
        p.x = r.get<std::uint16_t>();
        p.y = r.get<std::uint16_t>();
        p.z = r.get<std::uint16_t>();
    }
}

struct Header {
    NodePath path;
    std::uint32_t interval;
    std::uint32_t count;
};

// Validates framing and CRC, returning the header fields; `r` is left at the payload.
Header read_header(ByteReader& r, std::span<const std::byte> bytes, std::size_t max_count)
{
    const auto magic = r.get_bytes(4);
    if (std::memcmp(magic.data(), kBlockMagic, 4) != 0)
        throw FormatError("bad block magic: expected \"CLB1\"");
    const auto version = r.get<std::uint32_t>();
    if (version != kBlockVersion)
        throw FormatError("unsupported block version " + std::to_string(version));
    Header h;
    h.path = NodePath{r.get<std::uint64_t>()};
    h.interval = r.get<std::uint32_t>();
    h.count = r.get<std::uint32_t>();
    if (!is_valid_path(h.path.code))
        throw FormatError("block has invalid path code " + std::to_string(h.path.code));
    if (h.count > max_count)
        throw FormatError("block count " + std::to_string(h.count) + " exceeds node capacity " +
                          std::to_string(max_count));
    const std::size_t expected = block_encoded_size(h.count);
    if (bytes.size() < expected)
        throw FormatError("truncated block: " + std::to_string(bytes.size()) + " of " + std::to_string(expected) +
                          " bytes");
    if (bytes.size() != expected)
        throw FormatError("block record has " + std::to_string(bytes.size() - expected) + " trailing bytes");
    std::uint32_t stored_crc;
    std::memcpy(&stored_crc, bytes.data() + expected - 4, 4);
    stored_crc = detail::byteswap_if_needed(stored_crc);
    if (crc32_ieee(bytes.first(expected - 4)) != stored_crc)
        throw FormatError("block CRC mismatch");
    return h;
}

} // namespace

std::vector<std::byte> encode_block(const Block& b)
{
    const std::size_t m = b.count();
    if (b.qpos_start.size() != m || b.qpos_end.size() != m || b.size_start.size() != m || b.size_end.size() != m ||
        b.weight_start.size() != m || b.weight_end.size() != m)
        throw std::invalid_argument("block arrays have inconsistent lengths");
    if (m > std::numeric_limits<std::uint32_t>::max())
        throw std::invalid_argument("block too large");

    std::vector<std::byte> out;
    out.reserve(block_encoded_size(m));
    ByteWriter w(out);
    w.put_bytes(std::as_bytes(std::span(kBlockMagic)));
    w.put<std::uint32_t>(kBlockVersion);
    w.put<std::uint64_t>(b.path.code);
    w.put<std::uint32_t>(b.interval);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(m));
    put_box(w, b.box_start);
    put_box(w, b.box_end);
    w.put_zeros(8);
    put_qpos(w, b.qpos_start);
    put_qpos(w, b.qpos_end);
    w.put_array<float>(b.size_start);
    w.put_array<float>(b.size_end);
    w.put_array<float>(b.weight_start);
    w.put_array<float>(b.weight_end);
    w.put_array<std::uint64_t>(b.id);
    w.align(8);
    w.put<std::uint32_t>(crc32_ieee(out));
    return out;
}

Block decode_block(std::span<const std::byte> bytes, std::size_t max_count)
{
    ByteReader r(bytes, "block");
    const Header h = read_header(r, bytes, max_count);
    Block b;
    b.path = h.path;
    b.interval = h.interval;
    b.box_start = get_box(r);
    b.box_end = get_box(r);
    r.skip(8);
    b.resize(h.count);
    get_qpos(r, b.qpos_start);
    get_qpos(r, b.qpos_end);
    r.get_array<float>(b.size_start);
    r.get_array<float>(b.size_end);
    r.get_array<float>(b.weight_start);
    r.get_array<float>(b.weight_end);
    r.get_array<std::uint64_t>(b.id);
    return b;
}

std::vector<std::uint64_t> decode_block_ids(std::span<const std::byte> bytes)
{
    ByteReader r(bytes, "block");
    const Header h = read_header(r, bytes, std::numeric_limits<std::uint32_t>::max());
    r.skip(kBlockHeaderBytes - r.position() + std::size_t(h.count) * (kBlockPointBytes - 8));
    std::vector<std::uint64_t> ids(h.count);
    r.get_array<std::uint64_t>(ids);
    return ids;
}

} // namespace cosmolod
