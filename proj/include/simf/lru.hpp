#pragma once

#include <cstdint>
#include <vector>

namespace simf {

/// True LRU as a per-way rank (0 = least recent, ways-1 = most recent).
/// Reset order gives way w rank w, so way 0 is the first victim.
class LruState {
public:
    LruState() = default;
    LruState(std::uint32_t sets, std::uint32_t ways) : sets_(sets), ways_(ways), rank_(std::size_t{sets} * ways)
    {
        reset();
    }

    void reset()
    {
        for (std::uint32_t s = 0; s < sets_; ++s)
            reset_set(s);
    }

    void reset_set(std::uint32_t set)
    {
        for (std::uint32_t w = 0; w < ways_; ++w)
            rank_[idx(set, w)] = static_cast<std::uint16_t>(w);
    }

    void touch(std::uint32_t set, std::uint32_t way)
    {
        const auto r = rank_[idx(set, way)];
        for (std::uint32_t w = 0; w < ways_; ++w) {
            auto& x = rank_[idx(set, w)];
            if (x > r)
                --x;
        }
        rank_[idx(set, way)] = static_cast<std::uint16_t>(ways_ - 1);
    }

    std::uint32_t lru_way(std::uint32_t set) const
    {
        for (std::uint32_t w = 0; w < ways_; ++w)
            if (rank_[idx(set, w)] == 0)
                return w;
        return 0;
    }

    std::uint16_t rank(std::uint32_t set, std::uint32_t way) const { return rank_[idx(set, way)]; }

    bool is_reset() const
    {
        for (std::uint32_t s = 0; s < sets_; ++s)
            if (!set_is_reset(s))
                return false;
        return true;
    }

    bool set_is_reset(std::uint32_t set) const
    {
        for (std::uint32_t w = 0; w < ways_; ++w)
            if (rank_[idx(set, w)] != w)
                return false;
        return true;
    }

    bool operator==(const LruState&) const = default;

private:
    std::size_t idx(std::uint32_t set, std::uint32_t way) const { return std::size_t{set} * ways_ + way; }

    std::uint32_t sets_ = 0;
    std::uint32_t ways_ = 0;
    std::vector<std::uint16_t> rank_;
};

} // namespace simf
