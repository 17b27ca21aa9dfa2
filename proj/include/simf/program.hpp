#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "simf/common.hpp"
#include "simf/isa.hpp"

namespace simf {

// PTE / mapping permission bits (Sv32 layout).
namespace perm {
inline constexpr std::uint8_t valid = 1 << 0;
inline constexpr std::uint8_t read = 1 << 1;
inline constexpr std::uint8_t write = 1 << 2;
inline constexpr std::uint8_t exec = 1 << 3;
inline constexpr std::uint8_t user = 1 << 4;
} // namespace perm

struct PageMapping {
    std::uint32_t vpn = 0;
    /// Program-relative physical page; the loader adds the region base.
    std::uint32_t ppn = 0;
    std::uint8_t perms = 0;

    bool operator==(const PageMapping&) const = default;
};

struct Program {
    Addr text_base = 0;
    std::vector<Instruction> text;
    Addr data_base = 0;
    std::vector<std::uint8_t> data;
    Addr entry = 0;
    Mode start_mode = Mode::machine;
    /// 0 when the program installs no trap handler.
    Addr trap_vector = 0;
    std::vector<PageMapping> pages;
    std::map<std::string, Addr> symbols;

    Addr text_end() const { return text_base + static_cast<Addr>(text.size() * 4); }
    Addr data_end() const { return data_base + static_cast<Addr>(data.size()); }

    Addr symbol(const std::string& name) const
    {
        auto it = symbols.find(name);
        if (it == symbols.end())
            throw std::out_of_range("unknown symbol '" + name + "'");
        return it->second;
    }

    bool operator==(const Program&) const = default;
};

/// Page coloring: segments start at a program-relative ppn congruent to their
/// first vpn modulo this many pages, so physically indexed caches see the same
/// set index as the virtual address for ways up to 64 KiB.
inline constexpr std::uint32_t kColorPages = 16;

/// Builds the page list for the text and data segments and validates the
/// segment invariants (in range, page-disjoint).
inline std::vector<PageMapping> layout_pages(const Program& p)
{
    struct Seg {
        Addr base, end;
        std::uint8_t perms;
        const char* name;
    };
    std::vector<Seg> segs;
    if (!p.text.empty())
        segs.push_back({p.text_base, p.text_end(), perm::valid | perm::read | perm::exec | perm::user, "text"});
    if (!p.data.empty())
        segs.push_back({p.data_base, p.data_end(), perm::valid | perm::read | perm::write | perm::user, "data"});
    std::sort(segs.begin(), segs.end(), [](const Seg& a, const Seg& b) { return a.base < b.base; });

    std::vector<PageMapping> pages;
    std::uint32_t next_ppn = 0;
    std::uint32_t last_vpn_end = 0;
    for (const auto& s : segs) {
        if (s.end > kVirtualLimit || s.end < s.base)
            throw ConfigError(fmt::format("{} segment [0x{:x}, 0x{:x}) exceeds the 16 MiB virtual space", s.name,
                                          s.base, s.end));
        const std::uint32_t first = s.base >> kPageShift;
        const std::uint32_t last = (s.end - 1) >> kPageShift;
        if (!pages.empty() && first < last_vpn_end)
            throw ConfigError(fmt::format("{} segment shares a page with another segment", s.name));
        while (next_ppn % kColorPages != first % kColorPages)
            ++next_ppn;
        for (std::uint32_t v = first; v <= last; ++v)
            pages.push_back({v, next_ppn++, s.perms});
        last_vpn_end = last + 1;
    }
    return pages;
}

// --- flat binary image -------------------------------------------------------
//
// Little-endian layout:
//   0  char[8]  magic "SIMFIMG1"
//   8  u32      entry
//  12  u32      start mode (0 user, 1 machine)
//  16  u32      trap vector (0 = none)
//  20  u32      text base        24 u32 text offset     28 u32 text bytes
//  32  u32      data base        36 u32 data offset     40 u32 data bytes
//  44  u32      page-map offset  48 u32 page count      (12 bytes each: vpn, ppn, perms)
//  52  u32      symbol offset    56 u32 symbol count    (u32 addr, u32 name length, name bytes)
//  60  ...      raw sections, in the order text, data, page map, symbols

inline constexpr char kImageMagic[8] = {'S', 'I', 'M', 'F', 'I', 'M', 'G', '1'};
inline constexpr std::size_t kImageHeaderBytes = 60;

namespace detail {
inline void put_u32(std::vector<std::uint8_t>& out, std::size_t at, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i)
        out[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
}
inline void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i)
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at)
{
    if (at + 4 > in.size())
        throw std::runtime_error("truncated program image");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
        v |= std::uint32_t{in[at + i]} << (8 * i);
    return v;
}
} // namespace detail

inline std::vector<std::uint8_t> serialize(const Program& p)
{
    using detail::append_u32;
    std::vector<std::uint8_t> out(kImageHeaderBytes, 0);
    std::memcpy(out.data(), kImageMagic, 8);
    detail::put_u32(out, 8, p.entry);
    detail::put_u32(out, 12, static_cast<std::uint32_t>(p.start_mode));
    detail::put_u32(out, 16, p.trap_vector);

    detail::put_u32(out, 20, p.text_base);
    detail::put_u32(out, 24, static_cast<std::uint32_t>(out.size()));
    for (const auto& in : p.text)
        append_u32(out, encode(in));
    detail::put_u32(out, 28, static_cast<std::uint32_t>(p.text.size() * 4));

    detail::put_u32(out, 32, p.data_base);
    detail::put_u32(out, 36, static_cast<std::uint32_t>(out.size()));
    out.insert(out.end(), p.data.begin(), p.data.end());
    detail::put_u32(out, 40, static_cast<std::uint32_t>(p.data.size()));

    detail::put_u32(out, 44, static_cast<std::uint32_t>(out.size()));
    detail::put_u32(out, 48, static_cast<std::uint32_t>(p.pages.size()));
    for (const auto& m : p.pages) {
        append_u32(out, m.vpn);
        append_u32(out, m.ppn);
        append_u32(out, m.perms);
    }

    detail::put_u32(out, 52, static_cast<std::uint32_t>(out.size()));
    detail::put_u32(out, 56, static_cast<std::uint32_t>(p.symbols.size()));
    for (const auto& [name, addr] : p.symbols) {
        append_u32(out, addr);
        append_u32(out, static_cast<std::uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
    }
    return out;
}

inline bool looks_like_image(std::span<const std::uint8_t> bytes)
{
    return bytes.size() >= 8 && std::memcmp(bytes.data(), kImageMagic, 8) == 0;
}

inline Program deserialize(std::span<const std::uint8_t> in)
{
    using detail::get_u32;
    if (in.size() < kImageHeaderBytes || !looks_like_image(in))
        throw std::runtime_error("not a program image (bad magic)");
    Program p;
    p.entry = get_u32(in, 8);
    const auto mode = get_u32(in, 12);
    if (mode > 1)
        throw std::runtime_error("program image: bad start mode");
    p.start_mode = static_cast<Mode>(mode);
    p.trap_vector = get_u32(in, 16);

    p.text_base = get_u32(in, 20);
    const auto text_off = get_u32(in, 24), text_bytes = get_u32(in, 28);
    if (text_bytes % 4 != 0 || std::size_t{text_off} + text_bytes > in.size())
        throw std::runtime_error("program image: bad text section");
    for (std::uint32_t i = 0; i < text_bytes; i += 4)
        p.text.push_back(decode(get_u32(in, text_off + i)));

    p.data_base = get_u32(in, 32);
    const auto data_off = get_u32(in, 36), data_bytes = get_u32(in, 40);
    if (std::size_t{data_off} + data_bytes > in.size())
        throw std::runtime_error("program image: bad data section");
    p.data.assign(in.begin() + data_off, in.begin() + data_off + data_bytes);

    const auto map_off = get_u32(in, 44), map_count = get_u32(in, 48);
    for (std::uint32_t i = 0; i < map_count; ++i) {
        const auto at = map_off + 12 * i;
        p.pages.push_back({get_u32(in, at), get_u32(in, at + 4), static_cast<std::uint8_t>(get_u32(in, at + 8))});
    }

    auto at = std::size_t{get_u32(in, 52)};
    const auto sym_count = get_u32(in, 56);
    for (std::uint32_t i = 0; i < sym_count; ++i) {
        const auto addr = get_u32(in, at);
        const auto len = get_u32(in, at + 4);
        at += 8;
        if (at + len > in.size())
            throw std::runtime_error("program image: truncated symbol table");
        p.symbols.emplace(std::string(in.begin() + at, in.begin() + at + len), addr);
        at += len;
    }
    return p;
}

} // namespace simf
