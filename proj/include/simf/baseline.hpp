#pragma once

#include <cstdint>
#include <string>

#include "simf/assembler.hpp"
#include "simf/core.hpp"
#include "simf/routines.hpp"

namespace simf {

enum class FlushMechanism : std::uint8_t { none, flushx, baseline };

inline std::string_view to_string(FlushMechanism m)
{
    switch (m) {
    case FlushMechanism::none: return "none";
    case FlushMechanism::flushx: return "flushx";
    case FlushMechanism::baseline: return "baseline";
    }
    return "?";
}

/// Raw deltas between the two counter snapshots of the fill-then-flush
/// microbenchmark, plus the sphere-of-flushing state right after the flush
/// body's last instruction retired.
struct FlushBenchResult {
    std::uint64_t instructions = 0;
    std::uint64_t cycles = 0;
    std::uint32_t dirty_before = 0;
    std::uint64_t flushx_me_cycles = 0;
    bool sof_reset = false;
    std::string sof_dump;
    CoreStats stats;
};

inline FlushBenchResult run_flush_bench(const CoreConfig& cfg, FlushMechanism mech, Cycle max_cycles = 50'000'000)
{
    std::string body;
    if (mech == FlushMechanism::flushx)
        body = "    flushx\n";
    else if (mech == FlushMechanism::baseline)
        body = baseline_flush_body(cfg.dcache);
    const Program prog = assemble(flush_bench_program(cfg.dcache, body));

    auto c = cfg;
    c.rf_flush = false;
    PhysicalMemory mem;
    Loader loader(mem);
    Core core(c, mem);
    core.load_context(loader.load(prog));

    const Addr s3_pc = prog.symbol("bench_start") + 4;
    const Addr last_body = prog.symbol(std::string(kFlushRecordLabel)) - 12;
    FlushBenchResult r;
    core.on_retire([&](const InFlight& in) {
        if (in.pc == s3_pc)
            r.dirty_before = core.dcache().count_dirty();
        if (mech != FlushMechanism::none && in.pc == last_body) {
            r.sof_dump = core.dump_sof();
            r.sof_reset = core.sof_is_reset();
            if (in.inst.op == Opcode::flushx)
                r.flushx_me_cycles = in.me_cycles;
        }
    });
    if (!core.run(max_cycles))
        throw std::runtime_error("flush benchmark did not finish");
    const auto& h = core.hart();
    r.cycles = h.regs[20] - h.regs[18];       // s4 - s2
    r.instructions = h.regs[21] - h.regs[19]; // s5 - s3
    r.stats = core.stats();
    return r;
}

} // namespace simf
