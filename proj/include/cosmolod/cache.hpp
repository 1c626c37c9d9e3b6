#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace cosmolod {

struct BlockKey {
    std::uint32_t interval = 0;
    std::uint64_t path = 1;
    friend auto operator<=>(const BlockKey&, const BlockKey&) = default;
};

/// Byte-bounded least-recently-touched residency set.
class BlockCache {
public:
    explicit BlockCache(std::uint64_t capacity_bytes) : capacity_(capacity_bytes) {}

    /// Marks `key` resident with `bytes` and a fresh stamp, then evicts the
    /// stalest other keys until the total fits. Returns the evicted keys,
    /// oldest first. Throws std::length_error if `bytes` exceeds capacity.
    std::vector<BlockKey> touch(const BlockKey& key, std::uint64_t bytes)
    {
        if (bytes > capacity_)
            throw std::length_error("item of " + std::to_string(bytes) + " bytes exceeds cache capacity " +
                                    std::to_string(capacity_));
        if (auto it = resident_.find(key); it != resident_.end()) {
            used_ -= it->second.bytes;
            by_stamp_.erase(it->second.stamp);
            resident_.erase(it);
        }
        const std::uint64_t stamp = ++clock_;
        resident_[key] = {bytes, stamp};
        by_stamp_[stamp] = key;
        used_ += bytes;

        std::vector<BlockKey> evicted;
        while (used_ > capacity_) {
            auto oldest = by_stamp_.begin();
            const BlockKey victim = oldest->second;
            used_ -= resident_.at(victim).bytes;
            resident_.erase(victim);
            by_stamp_.erase(oldest);
            evicted.push_back(victim);
        }
        return evicted;
    }

    bool contains(const BlockKey& key) const { return resident_.count(key) != 0; }
    std::uint64_t used_bytes() const noexcept { return used_; }
    std::uint64_t capacity_bytes() const noexcept { return capacity_; }
    std::size_t size() const noexcept { return resident_.size(); }

private:
    struct Slot {
        std::uint64_t bytes = 0;
        std::uint64_t stamp = 0;
    };

    std::uint64_t capacity_;
    std::uint64_t used_ = 0;
    std::uint64_t clock_ = 0;
    std::map<BlockKey, Slot> resident_;
    std::map<std::uint64_t, BlockKey> by_stamp_;
};

} // namespace cosmolod
