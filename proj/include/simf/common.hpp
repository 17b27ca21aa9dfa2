#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include <fmt/format.h>

namespace simf {

using Addr = std::uint32_t;
using Word = std::uint32_t;
using Cycle = std::uint64_t;

inline constexpr unsigned kPageShift = 12;
inline constexpr Addr kPageSize = Addr{1} << kPageShift;
/// Virtual address space covered by the flat page table (16 MiB).
inline constexpr unsigned kVirtualPages = 4096;
inline constexpr Addr kVirtualLimit = kVirtualPages * kPageSize;
inline constexpr std::size_t kMaxMemoryBytes = std::size_t{256} << 20;
inline constexpr std::size_t kDefaultMemoryBytes = std::size_t{4} << 20;

enum class Mode : std::uint8_t { user = 0, machine = 1 };

inline std::string_view to_string(Mode m) { return m == Mode::user ? "user" : "machine"; }

constexpr bool is_pow2(std::uint64_t v) { return v != 0 && (v & (v - 1)) == 0; }

constexpr unsigned log2_exact(std::uint64_t v)
{
    unsigned n = 0;
    while (v > 1) {
        v >>= 1;
        ++n;
    }
    return n;
}

enum class FaultKind : std::uint8_t {
    illegal_instruction,
    page_fault,
    misaligned_access,
    bad_selector,
    no_trap_vector,
    bus_error,
};

inline std::string_view to_string(FaultKind k)
{
    switch (k) {
    case FaultKind::illegal_instruction: return "illegal instruction";
    case FaultKind::page_fault: return "page fault";
    case FaultKind::misaligned_access: return "misaligned access";
    case FaultKind::bad_selector: return "set/way selector out of range";
    case FaultKind::no_trap_vector: return "ecall with no trap vector";
    case FaultKind::bus_error: return "physical address out of range";
    }
    return "fault";
}

/// Architectural fault. Both the reference interpreter and the timed core
/// terminate the simulation with one of these.
struct Fault {
    FaultKind kind{};
    Addr pc = 0;
    Addr addr = 0;
    std::string detail;

    std::string describe() const
    {
        auto msg = fmt::format("{} at pc 0x{:08x}", to_string(kind), pc);
        if (kind == FaultKind::page_fault || kind == FaultKind::misaligned_access ||
            kind == FaultKind::bus_error)
            msg += fmt::format(" (address 0x{:08x})", addr);
        if (!detail.empty())
            msg += ": " + detail;
        return msg;
    }
};

class MachineFault : public std::runtime_error {
public:
    explicit MachineFault(Fault f) : std::runtime_error(f.describe()), fault_(std::move(f)) {}
    const Fault& fault() const noexcept { return fault_; }

private:
    Fault fault_;
};

/// Invalid configuration values (geometry, scheduler, lab parameters).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace simf
