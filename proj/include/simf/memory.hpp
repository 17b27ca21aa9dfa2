#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "simf/common.hpp"
#include "simf/program.hpp"

namespace simf {

/// Flat byte-addressable little-endian physical memory.
class PhysicalMemory {
public:
    explicit PhysicalMemory(std::size_t bytes = kDefaultMemoryBytes)
    {
        if (bytes == 0 || bytes > kMaxMemoryBytes || bytes % kPageSize != 0)
            throw ConfigError(fmt::format("memory size {} must be a multiple of 4 KiB and at most 256 MiB", bytes));
        bytes_.assign(bytes, 0);
    }

    std::size_t size() const { return bytes_.size(); }
    bool contains(Addr a, std::size_t n = 1) const { return std::size_t{a} + n <= bytes_.size(); }

    std::uint8_t read8(Addr a) const { return bytes_.at(a); }
    void write8(Addr a, std::uint8_t v) { bytes_.at(a) = v; }

    std::uint32_t read32(Addr a) const
    {
        check(a, 4);
        return std::uint32_t{bytes_[a]} | std::uint32_t{bytes_[a + 1]} << 8 | std::uint32_t{bytes_[a + 2]} << 16 |
               std::uint32_t{bytes_[a + 3]} << 24;
    }
    void write32(Addr a, std::uint32_t v)
    {
        check(a, 4);
        for (int i = 0; i < 4; ++i)
            bytes_[a + i] = static_cast<std::uint8_t>(v >> (8 * i));
    }

    std::span<const std::uint8_t> view(Addr a, std::size_t n) const
    {
        check(a, n);
        return {bytes_.data() + a, n};
    }
    void write(Addr a, std::span<const std::uint8_t> src)
    {
        check(a, src.size());
        std::copy(src.begin(), src.end(), bytes_.begin() + a);
    }

    const std::vector<std::uint8_t>& bytes() const { return bytes_; }
    bool operator==(const PhysicalMemory&) const = default;

private:
    void check(Addr a, std::size_t n) const
    {
        if (!contains(a, n))
            throw std::out_of_range(fmt::format("physical access 0x{:x}+{} outside {} bytes", a, n, bytes_.size()));
    }

    std::vector<std::uint8_t> bytes_;
};

// --- flat page table ---------------------------------------------------------
//
// kVirtualPages PTEs of 4 bytes at ptbase. PTE = ppn << 10 | perm bits.

inline constexpr std::uint32_t kPageTablePages = kVirtualPages * 4 / kPageSize;

inline constexpr std::uint32_t make_pte(std::uint32_t ppn, std::uint8_t perms) { return ppn << 10 | perms; }

struct PteView {
    std::uint32_t ppn = 0;
    std::uint8_t perms = 0;
    bool valid() const { return perms & perm::valid; }
};

inline PteView read_pte(const PhysicalMemory& mem, Addr ptbase, std::uint32_t vpn)
{
    const auto pte = mem.read32(ptbase + 4 * vpn);
    return {pte >> 10, static_cast<std::uint8_t>(pte & 0xFF)};
}

enum class AccessType : std::uint8_t { fetch, load, store };

/// Whether `perms` allow `type` in `mode`. Machine mode ignores the U bit.
inline bool permits(std::uint8_t perms, AccessType type, Mode mode)
{
    if (!(perms & perm::valid))
        return false;
    if (mode == Mode::user && !(perms & perm::user))
        return false;
    switch (type) {
    case AccessType::fetch: return perms & perm::exec;
    case AccessType::load: return perms & perm::read;
    case AccessType::store: return perms & perm::write;
    }
    return false;
}

// --- architectural hart state -------------------------------------------------

struct HartState {
    std::array<std::uint32_t, 32> regs{};
    Addr pc = 0;
    Mode mode = Mode::machine;
    Mode prev_mode = Mode::machine;
    Addr mepc = 0;
    Addr trap_vector = 0;
    std::uint64_t csr_cycle = 0;
    std::uint64_t csr_instret = 0;
    Addr ptbase = 0;
    /// Address-space id tagging this context's TLB entries.
    std::uint16_t asid = 0;
    bool halted = false;

    bool operator==(const HartState&) const = default;
};

/// Registers, pc, mode and memory: the state both executors must agree on.
struct ArchState {
    HartState hart;
    PhysicalMemory memory;
};

/// Places programs into physical memory, one page-colored region each.
class Loader {
public:
    explicit Loader(PhysicalMemory& mem) : mem_(mem) {}

    HartState load(const Program& p, std::uint16_t asid = 0)
    {
        const auto pages = p.pages.empty() ? layout_pages(p) : p.pages;
        const std::uint32_t pt_ppn = align(next_ppn_);
        const std::uint32_t base_ppn = align(pt_ppn + kPageTablePages);
        std::uint32_t top = base_ppn;
        for (const auto& m : pages)
            top = std::max(top, base_ppn + m.ppn + 1);
        if (std::size_t{top} * kPageSize > mem_.size())
            throw ConfigError(fmt::format("program needs {} KiB of physical memory, only {} KiB configured",
                                          std::size_t{top} * kPageSize / 1024, mem_.size() / 1024));
        next_ppn_ = top;

        const Addr ptbase = pt_ppn << kPageShift;
        for (std::uint32_t v = 0; v < kVirtualPages; ++v)
            mem_.write32(ptbase + 4 * v, 0);
        std::vector<std::uint32_t> page_of(kVirtualPages, ~0u);
        for (const auto& m : pages) {
            if (m.vpn >= kVirtualPages)
                throw ConfigError(fmt::format("page mapping vpn 0x{:x} beyond the virtual space", m.vpn));
            const auto ppn = base_ppn + m.ppn;
            mem_.write32(ptbase + 4 * m.vpn, make_pte(ppn, m.perms));
            page_of[m.vpn] = ppn;
            std::vector<std::uint8_t> zero(kPageSize, 0);
            mem_.write(ppn << kPageShift, zero);
        }

        auto place = [&](Addr va, std::uint8_t b) {
            const auto ppn = page_of.at(va >> kPageShift);
            if (ppn == ~0u)
                throw ConfigError(fmt::format("segment byte at 0x{:x} has no page mapping", va));
            mem_.write8((ppn << kPageShift) | (va & (kPageSize - 1)), b);
        };
        for (std::size_t i = 0; i < p.text.size(); ++i) {
            const auto w = encode(p.text[i]);
            for (int k = 0; k < 4; ++k)
                place(p.text_base + static_cast<Addr>(4 * i + k), static_cast<std::uint8_t>(w >> (8 * k)));
        }
        for (std::size_t i = 0; i < p.data.size(); ++i)
            place(p.data_base + static_cast<Addr>(i), p.data[i]);

        HartState h;
        h.pc = p.entry;
        h.mode = p.start_mode;
        h.prev_mode = p.start_mode;
        h.trap_vector = p.trap_vector;
        h.ptbase = ptbase;
        h.asid = asid;
        return h;
    }

    /// First physical page not yet handed out.
    std::uint32_t next_free_ppn() const { return next_ppn_; }

private:
    static std::uint32_t align(std::uint32_t ppn) { return (ppn + kColorPages - 1) / kColorPages * kColorPages; }

    PhysicalMemory& mem_;
    // Page 0 stays unused so a zero ptbase never looks valid.
    std::uint32_t next_ppn_ = kColorPages;
};

/// Walks the page table for `vaddr`; returns the physical address or a fault.
struct WalkResult {
    bool ok = false;
    Addr paddr = 0;
    std::uint32_t ppn = 0;
    std::uint8_t perms = 0;
};

inline WalkResult walk(const PhysicalMemory& mem, Addr ptbase, Addr vaddr, AccessType type, Mode mode)
{
    if (vaddr >= kVirtualLimit)
        return {};
    const auto pte = read_pte(mem, ptbase, vaddr >> kPageShift);
    if (!permits(pte.perms, type, mode))
        return {};
    const Addr paddr = (pte.ppn << kPageShift) | (vaddr & (kPageSize - 1));
    return {true, paddr, pte.ppn, pte.perms};
}

} // namespace simf
