#pragma once

#include <cstdint>
#include <string>

#include "simf/assembler.hpp"
#include "simf/cache.hpp"

namespace simf {

/// Software flush loop: clean+invalidate every D-cache line by set/way (way
/// outer, set inner), then the bulk invalidates, fenced on both sides.
/// Clobbers t0-t6.
inline std::string baseline_flush_body(const CacheGeometry& g)
{
    return fmt::format(R"(    fence.flush
    li t4, {nsets}
    lui t5, 0x10              # selector way stride (1 << 16)
    li t0, 0
    li t3, 0
    li t6, {assoc}
flush_way:
    li t1, 0
flush_set:
    add t2, t0, t1
    dcflush.sw t2
    addi t1, t1, 1
    blt t1, t4, flush_set
    add t0, t0, t5
    addi t3, t3, 1
    blt t3, t6, flush_way
    fence.flush
    tlbinv.all
    bpinv.all
    icinv.all
    fence.flush
)",
                       fmt::arg("nsets", g.nsets), fmt::arg("assoc", g.assoc));
}

/// The routine as a standalone machine-mode program (used by the scheduler
/// for the software mechanism).
inline std::string baseline_flush_program(const CacheGeometry& g)
{
    return ".mode machine\n.text 0x00400000\n_start:\n" + baseline_flush_body(g) + "    halt\n";
}

/// Dynamic instruction count of baseline_flush_body() for a geometry.
inline std::uint64_t baseline_flush_instructions(const CacheGeometry& g)
{
    auto li_size = [](std::uint64_t v) -> std::uint64_t { return v <= 2047 ? 1 : 2; };
    const std::uint64_t setup = 1 + li_size(g.nsets) + 1 + 1 + 1 + li_size(g.assoc);
    const std::uint64_t per_way = 1 + 4 * std::uint64_t{g.nsets} + 3;
    return setup + per_way * g.assoc + 5;
}

inline constexpr std::string_view kFlushRecordLabel = "bench_done";

/// Fill-then-flush microbenchmark: writes one word into every line of a
/// cache-sized buffer (leaving the whole D-cache dirty), then runs `body`
/// between two cycle/instret snapshots (s2/s3 before, s4/s5 after).
inline std::string flush_bench_program(const CacheGeometry& g, std::string_view body)
{
    return fmt::format(R"(.mode machine
.text
_start:
    la s0, bench_buf
    li s1, {lines}
    li s6, {line}
bench_fill:
    sw s1, 0(s0)
    add s0, s0, s6
    addi s1, s1, -1
    bnez s1, bench_fill
bench_start:
    csrr s2, cycle
    csrr s3, instret
{body}    csrr s4, cycle
    csrr s5, instret
bench_done:
    halt
.data
.align 12
bench_buf:
    .space {bytes}
)",
                       fmt::arg("lines", g.lines()), fmt::arg("line", g.line_bytes), fmt::arg("body", body),
                       fmt::arg("bytes", g.total_bytes()));
}

/// Small-footprint ALU loop: a handful of I-cache lines, no data traffic.
inline std::string alu_loop_program(std::uint32_t iterations)
{
    return fmt::format(R"(.mode user
.text
_start:
    li s1, {iters}
    li t0, 1
alu_loop:
    addi t1, t1, 3
    xor t2, t2, t1
    add t3, t3, t2
    sll t4, t0, t1
    or t5, t5, t4
    srl t6, t5, t0
    slt a0, t6, t3
    add a1, a1, a0
    addi s1, s1, -1
    bnez s1, alu_loop
    halt
)",
                       fmt::arg("iters", iterations));
}

/// Streams over a buffer with loads and stores; the footprint controls how
/// much of it stays resident.
inline std::string memsweep_program(std::uint32_t bytes, std::uint32_t passes)
{
    return fmt::format(R"(.mode user
.text
_start:
    li s2, {passes}
sweep_pass:
    la s0, sweep_buf
    li s1, {words}
sweep_word:
    lw t0, 0(s0)
    addi t0, t0, 1
    sw t0, 0(s0)
    addi s0, s0, 4
    addi s1, s1, -1
    bnez s1, sweep_word
    addi s2, s2, -1
    bnez s2, sweep_pass
    halt
.data
.align 12
sweep_buf:
    .space {bytes}
)",
                       fmt::arg("passes", passes), fmt::arg("words", bytes / 4), fmt::arg("bytes", bytes));
}

} // namespace simf
