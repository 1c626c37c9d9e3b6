#include "cosmolod/snapshot.hpp"

#include <algorithm>
#include <cstring>
#include <unordered_set>

namespace cosmolod {

void ParticleTable::resize(std::size_t n)
{
    id.resize(n);
    pos.resize(3, static_cast<Eigen::Index>(n));
    mass.resize(static_cast<Eigen::Index>(n));
    density.resize(static_cast<Eigen::Index>(n));
    size.resize(static_cast<Eigen::Index>(n));
}

Aabb ParticleTable::bounds() const
{
    Aabb box;
    if (count() > 0) {
        box.min() = pos.rowwise().minCoeff();
        box.max() = pos.rowwise().maxCoeff();
    }
    return box;
}

bool operator==(const ParticleTable& a, const ParticleTable& b)
{
    // Bitwise comparison: NaN payloads and signed zeros must survive the round trip.
    auto same_bits = [](const auto& x, const auto& y) {
        return x.size() == y.size() &&
               (x.size() == 0 || std::memcmp(x.data(), y.data(), sizeof(*x.data()) * x.size()) == 0);
    };
    return std::memcmp(&a.snapshot_time, &b.snapshot_time, sizeof(double)) == 0 && a.id == b.id &&
           same_bits(a.pos, b.pos) && same_bits(a.mass, b.mass) && same_bits(a.density, b.density) &&
           same_bits(a.size, b.size);
}

namespace {

void check_unique_ids(std::span<const std::uint64_t> ids)
{
    std::vector<std::uint64_t> sorted(ids.begin(), ids.end());
    std::sort(sorted.begin(), sorted.end());
    const auto dup = std::adjacent_find(sorted.begin(), sorted.end());
    if (dup != sorted.end())
        throw FormatError("duplicate particle id " + std::to_string(*dup));
}

} // namespace

std::vector<std::byte> encode_table(const ParticleTable& table)
{
    const std::size_t n = table.count();
    check_unique_ids(table.id);
    std::vector<std::byte> out;
    out.reserve(kSnapshotHeaderBytes + n * kSnapshotStride);
    ByteWriter w(out);
    w.put_bytes(std::as_bytes(std::span(kSnapshotMagic)));
    w.put<std::uint32_t>(kSnapshotVersion);
    w.put<std::uint64_t>(n);
    w.put<double>(table.snapshot_time);
    w.put_zeros(16);
    w.put_array<std::uint64_t>(table.id);
    w.put_array<double>(std::span(table.pos.data(), 3 * n));
    w.put_array<float>(std::span(table.mass.data(), n));
    w.put_array<float>(std::span(table.density.data(), n));
    w.put_array<float>(std::span(table.size.data(), n));
    w.put_zeros(4 * n);
    return out;
}

ParticleTable decode_table(std::span<const std::byte> bytes)
{
    ByteReader r(bytes, "snapshot");
    const auto magic = r.get_bytes(4);
    if (std::memcmp(magic.data(), kSnapshotMagic, 4) != 0)
        throw FormatError("bad snapshot magic: expected \"CPT1\"");
    const auto version = r.get<std::uint32_t>();
    if (version != kSnapshotVersion)
        throw FormatError("unsupported snapshot version " + std::to_string(version) + " (expected 1)");
    const auto n64 = r.get<std::uint64_t>();
    ParticleTable t;
    t.snapshot_time = r.get<double>();
    r.skip(16);
    if (n64 > r.remaining() / kSnapshotStride)
        throw FormatError("truncated snapshot: header declares " + std::to_string(n64) + " particles but only " +
                          std::to_string(r.remaining()) + " payload bytes follow");
    const auto n = static_cast<std::size_t>(n64);
    t.resize(n);
    r.get_array<std::uint64_t>(t.id);
    r.get_array<double>(std::span(t.pos.data(), 3 * n));
    r.get_array<float>(std::span(t.mass.data(), n));
    r.get_array<float>(std::span(t.density.data(), n));
    r.get_array<float>(std::span(t.size.data(), n));
    r.skip(4 * n);
    check_unique_ids(t.id);
    return t;
}

std::size_t write_table(const ParticleTable& table, const std::string& path)
{
    const auto bytes = encode_table(table);
    write_file_bytes(path, bytes);
    return bytes.size();
}

ParticleTable read_table(const std::string& path)
{
    try {
        return decode_table(read_file_bytes(path));
    } catch (const FormatError& e) {
        throw FormatError(path + ": " + e.what());
    }
}

} // namespace cosmolod
