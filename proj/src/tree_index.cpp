#include "cosmolod/tree_index.hpp"

#include <algorithm>

namespace cosmolod {

const IndexEntry* TreeIndex::find(NodePath path) const noexcept
{
    const auto it = std::lower_bound(entries.begin(), entries.end(), path.code,
                                     [](const IndexEntry& e, std::uint64_t code) { return e.path < code; });
    return (it != entries.end() && it->path == path.code) ? &*it : nullptr;
}

const IndexEntry& TreeIndex::root() const
{
    if (entries.empty() || entries.front().path != 1)
        throw FormatError("index has no root entry");
    return entries.front();
}

void TreeIndex::validate() const
{
    if (entries.empty())
        return;
    if (entries.front().path != 1)
        throw FormatError("index does not start with the root node");

    std::vector<std::uint8_t> seen_children(entries.size(), 0);
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const IndexEntry& e = entries[i];
        if (!is_valid_path(e.path))
            throw FormatError("index entry has invalid path code " + std::to_string(e.path));
        if (i > 0 && entries[i - 1].path >= e.path)
            throw FormatError("index entries not sorted by path code at position " + std::to_string(i));
        if (e.path == 1)
            continue;
        const auto parent = path_parent(NodePath{e.path});
        const auto* p = find(parent);
        if (!p)
            throw FormatError("orphan index entry " + std::to_string(e.path) + ": parent " +
                              std::to_string(parent.code) + " missing");
        seen_children[static_cast<std::size_t>(p - entries.data())] |=
            static_cast<std::uint8_t>(1u << path_octant(NodePath{e.path}));
    }
    for (std::size_t i = 0; i < entries.size(); ++i)
        if (seen_children[i] != entries[i].child_mask)
            throw FormatError("child mask of node " + std::to_string(entries[i].path) +
                              " does not match its children");

    std::vector<const IndexEntry*> by_offset;
    by_offset.reserve(entries.size());
    for (const auto& e : entries)
        by_offset.push_back(&e);
    std::sort(by_offset.begin(), by_offset.end(),
              [](const IndexEntry* a, const IndexEntry* b) { return a->offset < b->offset; });
    for (std::size_t i = 1; i < by_offset.size(); ++i)
        if (by_offset[i - 1]->offset + by_offset[i - 1]->length > by_offset[i]->offset)
            throw FormatError("overlapping block byte ranges in index");
}

std::vector<std::byte> encode_index(const TreeIndex& index)
{
    std::vector<std::byte> out;
    out.reserve(index.entries.size() * kIndexRecordBytes);
    ByteWriter w(out);
    for (const IndexEntry& e : index.entries) {
        w.put<std::uint64_t>(e.path);
        w.put<std::uint8_t>(e.child_mask);
        w.put_zeros(3);
        w.put<std::uint32_t>(e.count);
        w.put<std::uint64_t>(e.offset);
        w.put<std::uint32_t>(e.length);
        w.put_zeros(4);
    }
    return out;
}

TreeIndex decode_index(std::span<const std::byte> bytes)
{
    if (bytes.size() % kIndexRecordBytes != 0)
        throw FormatError("index size " + std::to_string(bytes.size()) + " is not a multiple of 32");
    ByteReader r(bytes, "index");
    TreeIndex index;
    index.entries.resize(bytes.size() / kIndexRecordBytes);
    for (IndexEntry& e : index.entries) {
        e.path = r.get<std::uint64_t>();
        e.child_mask = r.get<std::uint8_t>();
        r.skip(3);
        e.count = r.get<std::uint32_t>();
        e.offset = r.get<std::uint64_t>();
        e.length = r.get<std::uint32_t>();
        r.skip(4);
    }
    index.validate();
    return index;
}

void write_index(const TreeIndex& index, const std::string& path)
{
    write_file_bytes(path, encode_index(index));
}

TreeIndex read_index(const std::string& path)
{
    try {
        return decode_index(read_file_bytes(path));
    } catch (const FormatError& e) {
        throw FormatError(path + ": " + e.what());
    }
}

} // namespace cosmolod
