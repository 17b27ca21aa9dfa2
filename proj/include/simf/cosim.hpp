#pragma once

#include <string>
#include <vector>

#include "simf/core.hpp"
#include "simf/reference.hpp"

namespace simf {

struct CosimResult {
    bool finished = false;
    std::vector<std::string> divergences;
    HartState timed;
    HartState reference;
    Cycle cycles = 0;
    bool ok() const { return finished && divergences.empty(); }
};

/// Field-by-field difference of two final states. The cycle CSR is left out:
/// the reference has no notion of time.
inline std::vector<std::string> diff_states(const HartState& a, const PhysicalMemory& ma, const HartState& b,
                                            const PhysicalMemory& mb, std::size_t limit = 16)
{
    std::vector<std::string> out;
    auto add = [&](std::string s) {
        if (out.size() < limit)
            out.push_back(std::move(s));
    };
    for (int r = 1; r < 32; ++r)
        if (a.regs[r] != b.regs[r])
            add(fmt::format("{}: timed 0x{:08x} reference 0x{:08x}", kAbiNames[r], a.regs[r], b.regs[r]));
    if (a.pc != b.pc)
        add(fmt::format("pc: timed 0x{:x} reference 0x{:x}", a.pc, b.pc));
    if (a.mode != b.mode)
        add("privilege mode differs");
    if (a.mepc != b.mepc)
        add(fmt::format("mepc: timed 0x{:x} reference 0x{:x}", a.mepc, b.mepc));
    if (a.csr_instret != b.csr_instret)
        add(fmt::format("instret: timed {} reference {}", a.csr_instret, b.csr_instret));
    if (a.halted != b.halted)
        add("halt state differs");
    if (ma.size() != mb.size()) {
        add("memory sizes differ");
        return out;
    }
    const auto& x = ma.bytes();
    const auto& y = mb.bytes();
    for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] != y[i])
            add(fmt::format("mem[0x{:x}]: timed 0x{:02x} reference 0x{:02x}", i, x[i], y[i]));
    return out;
}

/// Runs `p` on the timed core and on the reference interpreter from the same
/// loaded image and compares registers and the cache-coherent memory.
inline CosimResult cosimulate(const CoreConfig& cfg, const Program& p, Cycle max_cycles = 10'000'000,
                              std::size_t memory_bytes = kDefaultMemoryBytes)
{
    CosimResult r;
    PhysicalMemory mem(memory_bytes);
    Loader loader(mem);
    const HartState start = loader.load(p);
    ArchState ref{start, mem};

    Core core(cfg, mem);
    core.load_context(start);
    r.finished = core.run(max_cycles);
    r.cycles = core.cycle();
    r.timed = core.hart();

    run_reference(ref, cfg.ref_options(), max_cycles);
    r.reference = ref.hart;
    if (!r.finished) {
        r.divergences.push_back(fmt::format("timed core did not halt within {} cycles", max_cycles));
        return r;
    }
    r.divergences = diff_states(core.hart(), core.coherent_memory(), ref.hart, ref.memory);
    return r;
}

} // namespace simf
