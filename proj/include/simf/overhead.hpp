#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "simf/baseline.hpp"
#include "simf/routines.hpp"
#include "simf/scheduler.hpp"

namespace simf {

using Rational = boost::multiprecision::cpp_rational;

struct OverheadParams {
    Rational clock_hz;
    Rational flush_hz;
    Rational flush_instr_cost; // C
    Rational base_cycles;      // N_cyc
    Rational base_instrs;      // N_ins
};

/// Flush instructions normalized to workload instructions:
/// (N_cyc * f / F) flushes of C instructions each, over N_ins.
inline Rational estimate_overhead(const OverheadParams& p)
{
    if (p.clock_hz <= 0 || p.flush_instr_cost <= 0 || p.base_cycles <= 0 || p.base_instrs <= 0)
        throw std::domain_error("overhead: clock, cost and workload counts must be positive");
    if (p.flush_hz < 0)
        throw std::domain_error("overhead: flush frequency must not be negative");
    if (p.flush_hz > p.clock_hz)
        throw std::domain_error("overhead: flush frequency exceeds the clock");
    const Rational flushes = p.base_cycles * p.flush_hz / p.clock_hz;
    return flushes * p.flush_instr_cost / p.base_instrs;
}

inline double to_double(const Rational& r) { return r.convert_to<double>(); }

struct FlushCosts {
    std::uint64_t c_opt = 0;
    std::uint64_t c_norm = 0;
    std::uint64_t cyc_opt = 0;
    std::uint64_t cyc_norm = 0;
    std::uint32_t dirty_lines = 0;
};

/// Fill-then-flush with each mechanism, minus an empty-body calibration run.
inline FlushCosts measure_flush_costs(const CoreConfig& cfg)
{
    const auto none = run_flush_bench(cfg, FlushMechanism::none);
    const auto opt = run_flush_bench(cfg, FlushMechanism::flushx);
    const auto norm = run_flush_bench(cfg, FlushMechanism::baseline);
    FlushCosts c;
    c.c_opt = opt.instructions - none.instructions;
    c.c_norm = norm.instructions - none.instructions;
    c.cyc_opt = opt.cycles - none.cycles;
    c.cyc_norm = norm.cycles - none.cycles;
    c.dirty_lines = opt.dirty_before;
    return c;
}

struct WorkloadStats {
    std::string name;
    std::uint64_t cycles = 0;
    std::uint64_t instructions = 0;
};

/// Shipped synthetic workloads.
inline std::string workload_source(std::string_view name)
{
    if (name == "alu")
        return alu_loop_program(200000);
    if (name == "memsweep")
        return memsweep_program(64 * 1024, 8);
    throw ConfigError(fmt::format("unknown workload '{}' (expected alu or memsweep)", name));
}

/// Runs a workload alone with no flushing.
inline WorkloadStats measure_workload(const CoreConfig& cfg, std::string_view name, Cycle max_cycles = 500'000'000)
{
    System sys(cfg);
    sys.add_program(assemble(workload_source(name)));
    SchedulerConfig sc;
    sc.quantum = kNever;
    const auto rep = sys.run(sc, max_cycles);
    if (!rep.completed)
        throw std::runtime_error(fmt::format("workload {} did not finish", name));
    return {std::string(name), rep.total_cycles, rep.total_instructions};
}

struct OverheadPoint {
    std::uint64_t clock_hz = 0;
    std::string mechanism; // "opt" or "norm"
    std::uint64_t flush_hz = 0;
    Rational overhead;
};

/// 1-2-5 steps from `lo` to `hi` inclusive.
inline std::vector<std::uint64_t> frequency_grid(std::uint64_t lo = 100, std::uint64_t hi = 50000)
{
    if (lo == 0 || hi < lo)
        throw ConfigError("frequency range must satisfy 0 < lo <= hi");
    std::vector<std::uint64_t> out;
    for (std::uint64_t decade = 1; decade <= hi; decade *= 10)
        for (std::uint64_t m : {1, 2, 5})
            if (m * decade >= lo && m * decade <= hi)
                out.push_back(m * decade);
    return out;
}

inline std::vector<OverheadPoint> sweep(const WorkloadStats& w, const std::vector<std::uint64_t>& clocks,
                                        const std::vector<std::uint64_t>& freqs, const FlushCosts& costs)
{
    std::vector<OverheadPoint> out;
    for (auto clock : clocks)
        for (const auto& [mech, c] : {std::pair{"opt", costs.c_opt}, std::pair{"norm", costs.c_norm}})
            for (auto f : freqs) {
                OverheadParams p{Rational(clock), Rational(f), Rational(c), Rational(w.cycles), Rational(w.instructions)};
                out.push_back({clock, mech, f, estimate_overhead(p)});
            }
    return out;
}

/// Each (clock, mechanism) series must be non-decreasing in flush_hz.
inline bool sweep_is_monotone(const std::vector<OverheadPoint>& pts)
{
    for (std::size_t i = 1; i < pts.size(); ++i) {
        const auto& a = pts[i - 1];
        const auto& b = pts[i];
        if (a.clock_hz == b.clock_hz && a.mechanism == b.mechanism && b.flush_hz >= a.flush_hz &&
            b.overhead < a.overhead)
            return false;
    }
    return true;
}

inline std::string sweep_csv(const std::vector<OverheadPoint>& pts)
{
    std::string out = "clock_hz,mechanism,flush_hz,overhead\n";
    for (const auto& p : pts)
        out += fmt::format("{},{},{},{:.12g}\n", p.clock_hz, p.mechanism, p.flush_hz, to_double(p.overhead));
    return out;
}

struct ClosureResult {
    Cycle quantum = 0;
    std::uint64_t flushes = 0;
    std::uint64_t cost = 0; // instructions per flush
    double measured = 0;
    double analytic = 0;
    double relative_error() const { return analytic == 0 ? 0 : std::abs(measured - analytic) / analytic; }
};

/// Runs `name` alone with flush_on_switch at quantum `q` and compares the
/// extra retired instructions against estimate_overhead with f = F/q. The
/// clock cancels, so any F works.
inline ClosureResult measure_closure(const CoreConfig& cfg, std::string_view name, Cycle q, SwitchFlush mech,
                                     Cycle max_cycles = 1'000'000'000)
{
    const auto plain = measure_workload(cfg, name, max_cycles);

    System sys(cfg);
    const auto id = sys.add_program(assemble(workload_source(name)));
    std::uint64_t cost = 1;
    if (mech == SwitchFlush::routine) {
        const auto routine = assemble(baseline_flush_program(cfg.dcache));
        sys.set_flush_routine(routine);
        cost = baseline_flush_instructions(cfg.dcache) + 1; // + the closing halt
    }
    SchedulerConfig sc;
    sc.quantum = q;
    sc.flush_on_switch = true;
    sc.mechanism = mech;
    const auto rep = sys.run(sc, max_cycles);
    if (!rep.completed)
        throw std::runtime_error("closure run did not finish");

    const auto workload_instrs = rep.contexts.at(id).instructions;
    ClosureResult r;
    r.quantum = q;
    r.flushes = rep.total_flushes;
    r.cost = cost;
    r.measured = static_cast<double>(rep.total_instructions - workload_instrs) / static_cast<double>(workload_instrs);
    const Rational clock(1'000'000'000);
    OverheadParams p{clock, clock / q, Rational(cost), Rational(plain.cycles), Rational(plain.instructions)};
    r.analytic = to_double(estimate_overhead(p));
    return r;
}

} // namespace simf
