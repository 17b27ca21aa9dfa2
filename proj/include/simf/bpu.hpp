#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "simf/common.hpp"
#include "simf/isa.hpp"
#include "simf/lru.hpp"

namespace simf {

struct BpuConfig {
    std::uint32_t btb_entries = 28;
    std::uint32_t ghr_bits = 8;
    std::uint32_t pht_entries = 512;
    std::uint32_t ras_depth = 6;

    void validate() const
    {
        if (btb_entries == 0 || ras_depth == 0 || ghr_bits == 0 || ghr_bits > 16 || pht_entries == 0)
            throw ConfigError("bpu: sizes must be positive and ghr_bits <= 16");
    }
    bool operator==(const BpuConfig&) const = default;
};

struct Prediction {
    bool taken = false;
    Addr target = 0;
    bool used_ras = false;
};

/// Two-level adaptive predictor: GHR xor pc indexes a table of 2-bit
/// counters, a fully associative BTB supplies targets, a RAS handles returns.
class Bpu {
public:
    static constexpr std::uint8_t kWeaklyNotTaken = 1;

    struct BtbEntry {
        Addr pc = 0;
        Addr target = 0;
        bool valid = false;
        bool operator==(const BtbEntry&) const = default;
    };

    Bpu() : Bpu(BpuConfig{}) {}
    explicit Bpu(const BpuConfig& c)
        : cfg_((c.validate(), c)), btb_(c.btb_entries), btb_lru_(1, c.btb_entries), pht_(c.pht_entries),
          ras_(c.ras_depth)
    {
        flush();
    }

    const BpuConfig& config() const { return cfg_; }

    std::uint32_t pht_index(Addr pc) const { return (ghr_ ^ (pc >> 2)) % cfg_.pht_entries; }

    /// Read-only lookup; `kind` comes from predecode of the fetched word.
    Prediction predict(Addr pc, BranchKind kind) const
    {
        Prediction p;
        const BtbEntry* e = find(pc);
        switch (kind) {
        case BranchKind::none: break;
        case BranchKind::conditional:
            if (pht_[pht_index(pc)] >= 2 && e) {
                p.taken = true;
                p.target = e->target;
            }
            break;
        case BranchKind::ret:
            if (sp_ > 0) {
                p.taken = true;
                p.target = ras_[sp_ - 1];
                p.used_ras = true;
                break;
            }
            [[fallthrough]];
        case BranchKind::jump:
        case BranchKind::call:
        case BranchKind::indirect:
            if (e) {
                p.taken = true;
                p.target = e->target;
            }
            break;
        }
        return p;
    }

    /// Trains on a resolved control-flow instruction.
    void update(Addr pc, BranchKind kind, bool taken, Addr target)
    {
        if (kind == BranchKind::none)
            return;
        if (kind == BranchKind::conditional) {
            auto& c = pht_[pht_index(pc)];
            if (taken && c < 3)
                ++c;
            else if (!taken && c > 0)
                --c;
            ghr_ = ((ghr_ << 1) | (taken ? 1u : 0u)) & ((1u << cfg_.ghr_bits) - 1);
        }
        if (taken)
            install(pc, target);
        if (kind == BranchKind::call) {
            if (sp_ == cfg_.ras_depth) {
                // Overflow drops the oldest frame.
                for (std::uint32_t i = 1; i < cfg_.ras_depth; ++i)
                    ras_[i - 1] = ras_[i];
                --sp_;
            }
            ras_[sp_++] = pc + 4;
        } else if (kind == BranchKind::ret && sp_ > 0) {
            --sp_;
        }
    }

    void flush()
    {
        for (auto& e : btb_)
            e = BtbEntry{};
        btb_lru_.reset();
        ghr_ = 0;
        std::fill(pht_.begin(), pht_.end(), kWeaklyNotTaken);
        sp_ = 0;
    }

    bool is_reset() const
    {
        for (const auto& e : btb_)
            if (e.valid)
                return false;
        for (auto c : pht_)
            if (c != kWeaklyNotTaken)
                return false;
        return ghr_ == 0 && sp_ == 0 && btb_lru_.is_reset();
    }

    std::uint32_t ghr() const { return ghr_; }
    std::uint8_t counter(std::uint32_t idx) const { return pht_.at(idx); }
    std::uint32_t ras_pointer() const { return sp_; }
    const std::vector<BtbEntry>& btb() const { return btb_; }
    std::uint32_t btb_valid() const
    {
        std::uint32_t n = 0;
        for (const auto& e : btb_)
            n += e.valid;
        return n;
    }

    /// One line per BTB entry, then ghr, the non-default counters and the live
    /// RAS frames.
    std::string dump() const
    {
        std::string out;
        for (std::uint32_t i = 0; i < btb_.size(); ++i) {
            const auto& e = btb_[i];
            if (e.valid)
                out += fmt::format("BTB {} v=1 pc=0x{:x} target=0x{:x} lru={}\n", i, e.pc, e.target, btb_lru_.rank(0, i));
            else
                out += fmt::format("BTB {} v=0 lru={}\n", i, btb_lru_.rank(0, i));
        }
        out += fmt::format("GHR 0x{:x}\n", ghr_);
        for (std::uint32_t i = 0; i < pht_.size(); ++i)
            out += fmt::format("PHT {} {}\n", i, pht_[i]);
        out += fmt::format("RAS sp={}\n", sp_);
        for (std::uint32_t i = 0; i < sp_; ++i)
            out += fmt::format("RAS {} 0x{:x}\n", i, ras_[i]);
        return out;
    }

private:
    const BtbEntry* find(Addr pc) const
    {
        for (const auto& e : btb_)
            if (e.valid && e.pc == pc)
                return &e;
        return nullptr;
    }

    void install(Addr pc, Addr target)
    {
        std::uint32_t way = static_cast<std::uint32_t>(btb_.size());
        for (std::uint32_t i = 0; i < btb_.size(); ++i)
            if (btb_[i].valid && btb_[i].pc == pc)
                way = i;
        if (way == btb_.size())
            for (std::uint32_t i = 0; i < btb_.size() && way == btb_.size(); ++i)
                if (!btb_[i].valid)
                    way = i;
        if (way == btb_.size())
            way = btb_lru_.lru_way(0);
        btb_[way] = {pc, target, true};
        btb_lru_.touch(0, way);
    }

    BpuConfig cfg_;
    std::vector<BtbEntry> btb_;
    LruState btb_lru_;
    std::uint32_t ghr_ = 0;
    std::vector<std::uint8_t> pht_;
    std::vector<Addr> ras_;
    std::uint32_t sp_ = 0;
};

} // namespace simf
