#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "simf/common.hpp"
#include "simf/lru.hpp"
#include "simf/memory.hpp"

namespace simf {

struct CacheGeometry {
    std::uint32_t nsets = 64;
    std::uint32_t assoc = 8;
    std::uint32_t line_bytes = 64;
    std::uint32_t hit_latency = 2;
    std::uint32_t miss_penalty = 50;
    std::uint32_t writeback_cycles = 8;

    std::uint32_t total_bytes() const { return nsets * assoc * line_bytes; }
    std::uint32_t lines() const { return nsets * assoc; }

    void validate(std::string_view name) const
    {
        if (!is_pow2(nsets) || !is_pow2(assoc) || !is_pow2(line_bytes))
            throw ConfigError(fmt::format("{}: nsets, assoc and line_bytes must be powers of two", name));
        if (line_bytes < 4 || nsets > 0x10000 || assoc > 0x8000)
            throw ConfigError(fmt::format("{}: geometry out of range", name));
        if (hit_latency < 1 || miss_penalty < hit_latency)
            throw ConfigError(fmt::format("{}: need 1 <= hit_latency <= miss_penalty", name));
    }

    bool operator==(const CacheGeometry&) const = default;
};

enum class AccessKind : std::uint8_t { read, write, ifetch };

struct Writeback {
    Addr line_addr = 0;
    std::vector<std::uint8_t> data;
    bool operator==(const Writeback&) const = default;
};

struct AccessResult {
    bool hit = false;
    std::uint32_t latency = 0;
    std::vector<Writeback> writebacks;
    std::uint32_t set = 0;
    std::uint32_t way = 0;
};

struct FlushReport {
    std::uint64_t cycles = 0;
    std::vector<Writeback> writebacks;
};

inline void apply_writebacks(PhysicalMemory& mem, std::span<const Writeback> wbs)
{
    for (const auto& wb : wbs)
        mem.write(wb.line_addr, wb.data);
}

/// Set-associative write-back cache with real line data and true LRU.
class CacheArray {
public:
    struct Line {
        std::uint32_t tag = 0;
        bool valid = false;
        bool dirty = false;
        bool operator==(const Line&) const = default;
    };

    CacheArray() : CacheArray(CacheGeometry{}) {}
    explicit CacheArray(const CacheGeometry& g)
        : g_(g), lines_((g.validate("cache"), g.lines())), data_(std::size_t{g.lines()} * g.line_bytes),
          lru_(g.nsets, g.assoc), offset_bits_(log2_exact(g.line_bytes)), set_bits_(log2_exact(g.nsets))
    {
    }

    const CacheGeometry& geometry() const { return g_; }

    std::uint32_t set_of(Addr paddr) const { return (paddr >> offset_bits_) & (g_.nsets - 1); }
    std::uint32_t tag_of(Addr paddr) const { return paddr >> (offset_bits_ + set_bits_); }
    Addr line_base(Addr paddr) const { return paddr & ~(g_.line_bytes - 1); }
    Addr line_addr(std::uint32_t set, std::uint32_t way) const
    {
        return (line(set, way).tag << (offset_bits_ + set_bits_)) | (set << offset_bits_);
    }

    const Line& line(std::uint32_t set, std::uint32_t way) const { return lines_[idx(set, way)]; }
    const LruState& lru() const { return lru_; }

    /// Looks up `paddr` without changing any state.
    std::optional<std::uint32_t> probe(Addr paddr) const
    {
        const auto set = set_of(paddr), tag = tag_of(paddr);
        for (std::uint32_t w = 0; w < g_.assoc; ++w) {
            const auto& l = lines_[idx(set, w)];
            if (l.valid && l.tag == tag)
                return w;
        }
        return std::nullopt;
    }

    /// Hit: update LRU (and dirty for writes). Miss: evict the victim (lowest
    /// invalid way, else LRU), emit a write-back if it was dirty, fill from
    /// memory. Latency is hit_latency, or miss_penalty plus the write-back.
    AccessResult access(Addr paddr, AccessKind kind, const PhysicalMemory& mem)
    {
        AccessResult r;
        r.set = set_of(paddr);
        if (auto w = probe(paddr)) {
            r.hit = true;
            r.way = *w;
            r.latency = g_.hit_latency;
        } else {
            r.way = victim(r.set);
            r.latency = g_.miss_penalty;
            auto& l = lines_[idx(r.set, r.way)];
            if (l.dirty) {
                r.writebacks.push_back(take_line(r.set, r.way));
                r.latency += g_.writeback_cycles;
            }
            const Addr base = line_base(paddr);
            auto src = mem.view(base, g_.line_bytes);
            std::copy(src.begin(), src.end(), line_data(r.set, r.way).begin());
            l.tag = tag_of(paddr);
            l.valid = true;
            l.dirty = false;
        }
        if (kind == AccessKind::write)
            lines_[idx(r.set, r.way)].dirty = true;
        lru_.touch(r.set, r.way);
        return r;
    }

    std::span<std::uint8_t> line_data(std::uint32_t set, std::uint32_t way)
    {
        return {data_.data() + idx(set, way) * g_.line_bytes, g_.line_bytes};
    }
    std::span<const std::uint8_t> line_data(std::uint32_t set, std::uint32_t way) const
    {
        return {data_.data() + idx(set, way) * g_.line_bytes, g_.line_bytes};
    }

    std::uint32_t read32(const AccessResult& r, Addr paddr) const
    {
        auto d = line_data(r.set, r.way);
        const auto o = paddr & (g_.line_bytes - 1);
        return std::uint32_t{d[o]} | std::uint32_t{d[o + 1]} << 8 | std::uint32_t{d[o + 2]} << 16 |
               std::uint32_t{d[o + 3]} << 24;
    }
    std::uint8_t read8(const AccessResult& r, Addr paddr) const
    {
        return line_data(r.set, r.way)[paddr & (g_.line_bytes - 1)];
    }
    void write32(const AccessResult& r, Addr paddr, std::uint32_t v)
    {
        auto d = line_data(r.set, r.way);
        const auto o = paddr & (g_.line_bytes - 1);
        for (int i = 0; i < 4; ++i)
            d[o + i] = static_cast<std::uint8_t>(v >> (8 * i));
    }
    void write8(const AccessResult& r, Addr paddr, std::uint8_t v)
    {
        line_data(r.set, r.way)[paddr & (g_.line_bytes - 1)] = v;
    }

    /// Whole-cache flush: one lookup cycle per line plus the write-back cost
    /// for each dirty line. Replacement state returns to the reset order.
    FlushReport flush_all()
    {
        FlushReport rep;
        for (std::uint32_t s = 0; s < g_.nsets; ++s)
            for (std::uint32_t w = 0; w < g_.assoc; ++w) {
                auto& l = lines_[idx(s, w)];
                rep.cycles += 1;
                if (l.dirty) {
                    rep.writebacks.push_back(take_line(s, w));
                    rep.cycles += g_.writeback_cycles;
                }
                l = Line{};
            }
        lru_.reset();
        return rep;
    }

    /// Bulk invalidate for a cache that never holds dirty lines.
    FlushReport invalidate_all()
    {
        for (auto& l : lines_) {
            if (l.dirty)
                throw std::logic_error("invalidate_all on a cache holding dirty lines");
            l = Line{};
        }
        lru_.reset();
        return FlushReport{1, {}};
    }

    /// Set/way flush of a single line. A set left with no valid line has its
    /// replacement order reset, so a full sweep matches flush_all().
    FlushReport flush_line(std::uint32_t set, std::uint32_t way)
    {
        FlushReport rep{1, {}};
        auto& l = lines_[idx(set, way)];
        if (l.dirty) {
            rep.writebacks.push_back(take_line(set, way));
            rep.cycles += g_.writeback_cycles;
        }
        l = Line{};
        bool any_valid = false;
        for (std::uint32_t w = 0; w < g_.assoc; ++w)
            any_valid |= lines_[idx(set, w)].valid;
        if (!any_valid)
            lru_.reset_set(set);
        return rep;
    }

    std::uint32_t count_valid() const
    {
        std::uint32_t n = 0;
        for (const auto& l : lines_)
            n += l.valid;
        return n;
    }
    std::uint32_t count_dirty() const
    {
        std::uint32_t n = 0;
        for (const auto& l : lines_)
            n += l.dirty;
        return n;
    }

    /// Closed-form cost a flush_all() would take right now.
    std::uint64_t flush_cost() const { return g_.lines() + std::uint64_t{count_dirty()} * g_.writeback_cycles; }

    bool is_reset() const { return count_valid() == 0 && count_dirty() == 0 && lru_.is_reset(); }

    /// Memory as the program sees it: backing store overlaid with dirty lines.
    PhysicalMemory coherent_view(const PhysicalMemory& mem) const
    {
        PhysicalMemory out = mem;
        for (std::uint32_t s = 0; s < g_.nsets; ++s)
            for (std::uint32_t w = 0; w < g_.assoc; ++w)
                if (line(s, w).dirty)
                    out.write(line_addr(s, w), line_data(s, w));
        return out;
    }

    /// One line per cache line: set, way, valid, dirty, tag, LRU rank.
    std::string dump(std::string_view name) const
    {
        std::string out;
        for (std::uint32_t s = 0; s < g_.nsets; ++s)
            for (std::uint32_t w = 0; w < g_.assoc; ++w) {
                const auto& l = line(s, w);
                out += fmt::format("{} set={} way={} v={} d={} tag=0x{:x} lru={}\n", name, s, w, int(l.valid),
                                   int(l.dirty), l.valid ? l.tag : 0u, lru_.rank(s, w));
            }
        return out;
    }

private:
    std::size_t idx(std::uint32_t set, std::uint32_t way) const { return std::size_t{set} * g_.assoc + way; }

    std::uint32_t victim(std::uint32_t set) const
    {
        for (std::uint32_t w = 0; w < g_.assoc; ++w)
            if (!lines_[idx(set, w)].valid)
                return w;
        return lru_.lru_way(set);
    }

    Writeback take_line(std::uint32_t set, std::uint32_t way) const
    {
        auto d = line_data(set, way);
        return {line_addr(set, way), {d.begin(), d.end()}};
    }

    CacheGeometry g_;
    std::vector<Line> lines_;
    std::vector<std::uint8_t> data_;
    LruState lru_;
    unsigned offset_bits_ = 0;
    unsigned set_bits_ = 0;
};

} // namespace simf
