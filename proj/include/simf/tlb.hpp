#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "simf/common.hpp"
#include "simf/lru.hpp"
#include "simf/memory.hpp"

namespace simf {

struct TlbConfig {
    std::uint32_t itlb_entries = 32;
    std::uint32_t dtlb_entries = 32;
    std::uint32_t l2_entries = 128;
    std::uint32_t l2_ways = 4;
    std::uint32_t l2_hit_extra = 2;
    std::uint32_t walk_cycles = 100;

    void validate() const
    {
        if (itlb_entries == 0 || dtlb_entries == 0 || l2_ways == 0 || l2_entries % l2_ways != 0 ||
            !is_pow2(l2_entries / l2_ways))
            throw ConfigError("tlb: entries must be positive and l2_entries/l2_ways a power of two");
    }
    bool operator==(const TlbConfig&) const = default;
};

struct TlbEntry {
    std::uint32_t vpn = 0;
    std::uint32_t ppn = 0;
    std::uint8_t perms = 0;
    std::uint16_t asid = 0;
    bool valid = false;
    bool operator==(const TlbEntry&) const = default;
};

/// Set-associative TLB array (a fully associative one is a single set).
class TlbArray {
public:
    TlbArray() = default;
    TlbArray(std::uint32_t sets, std::uint32_t ways) : sets_(sets), ways_(ways), e_(std::size_t{sets} * ways), lru_(sets, ways) {}

    std::uint32_t sets() const { return sets_; }
    std::uint32_t ways() const { return ways_; }
    std::uint32_t set_of(std::uint32_t vpn) const { return vpn & (sets_ - 1); }

    const TlbEntry* lookup(std::uint32_t vpn, std::uint16_t asid)
    {
        const auto s = set_of(vpn);
        for (std::uint32_t w = 0; w < ways_; ++w) {
            const auto& e = e_[std::size_t{s} * ways_ + w];
            if (e.valid && e.vpn == vpn && e.asid == asid) {
                lru_.touch(s, w);
                return &e;
            }
        }
        return nullptr;
    }

    void fill(const TlbEntry& entry)
    {
        const auto s = set_of(entry.vpn);
        std::uint32_t way = ways_;
        for (std::uint32_t w = 0; w < ways_ && way == ways_; ++w)
            if (!e_[std::size_t{s} * ways_ + w].valid)
                way = w;
        if (way == ways_)
            way = lru_.lru_way(s);
        e_[std::size_t{s} * ways_ + way] = entry;
        lru_.touch(s, way);
    }

    void flush()
    {
        for (auto& e : e_)
            e = TlbEntry{};
        lru_.reset();
    }

    std::uint32_t count_valid() const
    {
        std::uint32_t n = 0;
        for (const auto& e : e_)
            n += e.valid;
        return n;
    }
    bool is_reset() const { return count_valid() == 0 && lru_.is_reset(); }

    const TlbEntry& entry(std::uint32_t set, std::uint32_t way) const { return e_[std::size_t{set} * ways_ + way]; }
    const LruState& lru() const { return lru_; }

    std::string dump(std::string_view name) const
    {
        std::string out;
        for (std::uint32_t s = 0; s < sets_; ++s)
            for (std::uint32_t w = 0; w < ways_; ++w) {
                const auto& e = entry(s, w);
                if (e.valid)
                    out += fmt::format("{} set={} way={} v=1 asid={} vpn=0x{:x} ppn=0x{:x} perms=0x{:x} lru={}\n", name,
                                       s, w, e.asid, e.vpn, e.ppn, e.perms, lru_.rank(s, w));
                else
                    out += fmt::format("{} set={} way={} v=0 lru={}\n", name, s, w, lru_.rank(s, w));
            }
        return out;
    }

private:
    std::uint32_t sets_ = 1;
    std::uint32_t ways_ = 0;
    std::vector<TlbEntry> e_;
    LruState lru_;
};

enum class TlbLevel : std::uint8_t { l1, l2, walk };

inline std::string_view to_string(TlbLevel l)
{
    return l == TlbLevel::l1 ? "l1" : l == TlbLevel::l2 ? "l2" : "walk";
}

struct TlbResult {
    bool ok = false;
    Addr paddr = 0;
    std::uint32_t extra = 0;
    TlbLevel level = TlbLevel::l1;
};

/// What a translation needs from the running context.
struct PageTableView {
    const PhysicalMemory* memory = nullptr;
    Addr ptbase = 0;
    std::uint16_t asid = 0;
    Mode mode = Mode::machine;
};

/// Split L1 I/D TLBs over a unified set-associative L2 TLB.
class TlbHierarchy {
public:
    TlbHierarchy() : TlbHierarchy(TlbConfig{}) {}
    explicit TlbHierarchy(const TlbConfig& c)
        : cfg_((c.validate(), c)), itlb_(1, c.itlb_entries), dtlb_(1, c.dtlb_entries),
          l2_(c.l2_entries / c.l2_ways, c.l2_ways)
    {
    }

    const TlbConfig& config() const { return cfg_; }

    /// L1 hit adds nothing, L2 hit adds l2_hit_extra and refills L1, a walk
    /// adds walk_cycles and refills both. Faults leave the arrays untouched.
    TlbResult translate(Addr vaddr, AccessType type, const PageTableView& pt)
    {
        if (vaddr >= kVirtualLimit)
            return {};
        const std::uint32_t vpn = vaddr >> kPageShift;
        const Addr off = vaddr & (kPageSize - 1);
        auto& l1 = type == AccessType::fetch ? itlb_ : dtlb_;
        TlbResult r;
        const TlbEntry* e = l1.lookup(vpn, pt.asid);
        if (e) {
            r.level = TlbLevel::l1;
        } else if ((e = l2_.lookup(vpn, pt.asid))) {
            r.level = TlbLevel::l2;
            r.extra = cfg_.l2_hit_extra;
            if (!permits(e->perms, type, pt.mode))
                return {};
            l1.fill(*e);
            e = l1.lookup(vpn, pt.asid);
        } else {
            const auto pte = read_pte(*pt.memory, pt.ptbase, vpn);
            if (!permits(pte.perms, type, pt.mode))
                return {};
            const TlbEntry fresh{vpn, pte.ppn, pte.perms, pt.asid, true};
            l2_.fill(fresh);
            l1.fill(fresh);
            r.level = TlbLevel::walk;
            r.extra = cfg_.walk_cycles;
            r.ok = true;
            r.paddr = (fresh.ppn << kPageShift) | off;
            return r;
        }
        if (!permits(e->perms, type, pt.mode))
            return {};
        r.ok = true;
        r.paddr = (e->ppn << kPageShift) | off;
        return r;
    }

    void flush_all()
    {
        itlb_.flush();
        dtlb_.flush();
        l2_.flush();
    }

    bool is_reset() const { return itlb_.is_reset() && dtlb_.is_reset() && l2_.is_reset(); }

    const TlbArray& itlb() const { return itlb_; }
    const TlbArray& dtlb() const { return dtlb_; }
    const TlbArray& l2() const { return l2_; }

    std::string dump() const { return itlb_.dump("ITLB") + dtlb_.dump("DTLB") + l2_.dump("L2TLB"); }

private:
    TlbConfig cfg_;
    TlbArray itlb_;
    TlbArray dtlb_;
    TlbArray l2_;
};

} // namespace simf
