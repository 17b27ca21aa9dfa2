#include <gtest/gtest.h>

#include <map>
#include <memory>
#include <random>

#include "random_program.hpp"
#include "simf/assembler.hpp"
#include "simf/core.hpp"

using namespace simf;

namespace {

constexpr auto IF = static_cast<std::size_t>(Stage::IF);
constexpr auto EX = static_cast<std::size_t>(Stage::EX);
constexpr auto WB = static_cast<std::size_t>(Stage::WB);

// Assembles, loads and runs a program, keeping every retired instruction.
struct Traced {
    PhysicalMemory mem;
    Program prog;
    std::unique_ptr<Core> core;
    std::vector<InFlight> retired;
    std::vector<CycleTrace> trace;

    explicit Traced(const std::string& src, CoreConfig cfg = {}, bool with_trace = false, Cycle limit = 5'000'000)
        : prog(assemble(src))
    {
        Loader loader(mem);
        core = std::make_unique<Core>(cfg, mem);
        core->load_context(loader.load(prog));
        core->on_retire([this](const InFlight& in) { retired.push_back(in); });
        if (with_trace)
            core->on_cycle([this](const CycleTrace& t) { trace.push_back(t); });
        EXPECT_TRUE(core->run(limit));
    }

    // Retirements of the instruction at `label`, in order.
    std::vector<InFlight> at(const std::string& label) const
    {
        std::vector<InFlight> out;
        const Addr pc = prog.symbol(label);
        for (const auto& in : retired)
            if (in.pc == pc && !in.injected)
                out.push_back(in);
        return out;
    }
};

// Two passes over `body`; the second runs with warm caches, TLBs and BTB.
std::string two_pass(const std::string& body)
{
    return ".text\n_start:\n    la s0, buf\n    li s1, 2\nloop:\n" + body +
           "    addi s1, s1, -1\n    bnez s1, loop\n    halt\n.data\n.align 6\nbuf: .space 256\n";
}

} // namespace

TEST(Pipeline, IndependentInstructionsRetireOnePerCycle)
{
    std::string body = "first:\n";
    for (int i = 0; i < 12; ++i)
        body += fmt::format("    addi t{}, t{}, {}\n", i % 6, (i + 1) % 6, i);
    body += "last:\n    nop\n";
    Traced r(two_pass(body));
    const auto first = r.at("first");
    const auto last = r.at("last");
    ASSERT_EQ(first.size(), 2u);
    // 13 instructions from first to last, one commit per cycle when warm.
    EXPECT_EQ(last[1].stamp[WB] - first[1].stamp[WB], 12u);
    EXPECT_EQ(first[1].stamp[EX] - first[1].stamp[IF], 2u);
    EXPECT_EQ(first[1].stamp[WB] - first[1].stamp[IF], 4u);
}

TEST(Pipeline, LoadUseCostsOneBubble)
{
    Traced r(two_pass(R"(
    lw t0, 0(s0)
use:
    add t1, t0, t0
    lw t2, 4(s0)
    addi t3, t3, 1
spaced:
    add t4, t2, t2
)"));
    const auto lw = r.at("use");
    const auto spaced = r.at("spaced");
    // Producer retires at use.WB - 2: one bubble between them.
    const auto& all = r.retired;
    auto wb_before = [&](const InFlight& in) {
        for (std::size_t i = 1; i < all.size(); ++i)
            if (all[i].seq == in.seq)
                return all[i - 1].stamp[WB];
        return kNever;
    };
    EXPECT_EQ(lw[1].stamp[WB] - wb_before(lw[1]), 2u);
    EXPECT_EQ(spaced[1].stamp[WB] - wb_before(spaced[1]), 1u);
    EXPECT_EQ(r.core->stats().bubble(Bubble::load_use), 2u);
}

TEST(Pipeline, MispredictSquashesTwoFetches)
{
    Traced r(two_pass(R"(
jump:
    j target
    addi t0, t0, 1
    addi t0, t0, 1
target:
    addi t1, t1, 1
)"));
    const auto j = r.at("jump");
    const auto t = r.at("target");
    // Cold BTB: the target retires three cycles after the jump.
    EXPECT_EQ(t[0].stamp[WB] - j[0].stamp[WB], 3u);
    // Warm: predicted, no gap.
    EXPECT_EQ(t[1].stamp[WB] - j[1].stamp[WB], 1u);
    EXPECT_EQ(r.core->hart().regs[5], 0u); // the skipped addi never wrote t0
    EXPECT_EQ(r.core->stats().mispredicts, 2u); // the jump once, the loop exit once
}

TEST(Pipeline, FlushxMeCyclesFollowTheLineLaw)
{
    std::mt19937 rng(2);
    for (int trial = 0; trial < 12; ++trial) {
        // Dirty a random subset of lines in a cache-sized buffer.
        std::string src = ".text\n_start:\n    la s0, buf\n";
        const int stores = trial == 0 ? 0 : static_cast<int>(rng() % 700);
        for (int i = 0; i < stores; ++i)
            src += fmt::format("    sw s0, {}(s0)\n", (rng() % 32) * 64);
        // s1 points at the middle of each page so every line is in reach
        src += "    li t0, 4096\n    li t1, 2048\n    add s1, s0, t1\n";
        for (int page = 0; page < 8; ++page) {
            for (int i = 0, n = static_cast<int>(rng() % 40); i < n; ++i)
                src += fmt::format("    sb t0, {}(s1)\n", static_cast<int>(rng() % 64) * 64 - 2048);
            src += "    add s1, s1, t0\n";
        }
        src += "    flushx\n    halt\n.data\n.align 12\nbuf: .space 32768\n";
        Traced r(src);
        ASSERT_EQ(r.core->flushx_log().size(), 1u);
        const auto& f = r.core->flushx_log()[0];
        EXPECT_EQ(f.me_cycles, 512u + 8u * f.dirty_lines);
        EXPECT_EQ(f.wb - f.me_start, f.me_cycles);
        EXPECT_EQ(r.core->dcache().count_dirty(), 0u);
    }
}

TEST(Pipeline, FlushxDrainsAndBlocksFetch)
{
    Traced r(R"(
.text
_start:
    la s0, buf
    sw s0, 0(s0)
    lw t0, 64(s0)
before:
    add t1, t0, t0
    flushx
after:
    addi t2, t2, 1
    halt
.data
.align 12
buf: .space 128
)");
    const auto& f = r.core->flushx_log().at(0);
    const auto before = r.at("before").at(0);
    const auto after = r.at("after").at(0);
    EXPECT_EQ(f.prev_wb, before.stamp[WB]);
    EXPECT_LT(before.stamp[WB], f.ex);
    EXPECT_LT(f.wb, after.stamp[IF]);
    EXPECT_EQ(f.next_if, after.stamp[IF]);
    EXPECT_EQ(f.next_if, f.wb + 1);
    EXPECT_EQ(f.dirty_lines, 1u);
}

TEST(Pipeline, SerializationHoldsOnRandomPrograms)
{
    for (std::uint64_t seed = 1; seed <= 40; ++seed) {
        gen::GenOptions o;
        o.flushx = true;
        Traced r(gen::random_program(seed, o));
        for (const auto& f : r.core->flushx_log()) {
            if (f.prev_wb != kNever) {
                EXPECT_LT(f.prev_wb, f.ex) << "seed " << seed;
            }
            if (f.next_if != kNever) {
                EXPECT_LT(f.wb, f.next_if) << "seed " << seed;
            }
            EXPECT_EQ(f.me_cycles, 512u + 8u * f.dirty_lines);
        }
    }
}

TEST(Pipeline, EveryCycleIsACommitOrOneBubble)
{
    for (std::uint64_t seed = 1; seed <= 40; ++seed) {
        gen::GenOptions o;
        o.flushx = seed % 2;
        o.maintenance = seed % 3 == 0;
        Traced r(gen::random_program(seed, o), {}, true);
        const auto& s = r.core->stats();
        EXPECT_EQ(s.retired + s.total_bubbles(), s.cycles) << "seed " << seed;
        std::uint64_t commits = 0;
        std::array<std::uint64_t, kBubbleKinds> seen{};
        for (const auto& t : r.trace) {
            const bool commit = t.events & CycleTrace::commit;
            commits += commit;
            if (!commit)
                ++seen[static_cast<std::size_t>(t.wb_bubble)];
        }
        EXPECT_EQ(commits, s.retired);
        EXPECT_EQ(seen, s.bubbles);
    }
}

TEST(Pipeline, FastForwardMatchesCycleByCycle)
{
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        gen::GenOptions o;
        o.flushx = true;
        const auto src = gen::random_program(seed, o);
        Traced fast(src);
        Traced slow(src, {}, true);
        EXPECT_EQ(fast.core->cycle(), slow.core->cycle()) << "seed " << seed;
        EXPECT_EQ(fast.core->hart(), slow.core->hart());
        EXPECT_EQ(fast.core->stats().bubbles, slow.core->stats().bubbles);
        EXPECT_EQ(fast.core->coherent_memory(), slow.core->coherent_memory());
    }
}

TEST(Pipeline, CacheMissStallsMemoryStage)
{
    Traced r(two_pass("miss:\n    lw t0, 128(s0)\n    sw t0, 192(s0)\n"));
    const auto& s = r.core->stats();
    EXPECT_GE(s.dcache_misses, 2u);
    EXPECT_GE(s.bubble(Bubble::mem_latency), 100u);
    const auto m = r.at("miss");
    // Second pass hits: back-to-back retirement with the previous instruction.
    EXPECT_GT(m[0].me_cycles, 1u);
    EXPECT_EQ(m[1].me_cycles, 1u);
}

TEST(Pipeline, UserModeFlushIsIllegal)
{
    const auto p = assemble(".mode user\n.text\n_start:\n    flushx\n    halt\n");
    PhysicalMemory mem;
    Loader loader(mem);
    Core core({}, mem);
    core.load_context(loader.load(p));
    try {
        core.run(10000);
        FAIL() << "expected a fault";
    } catch (const MachineFault& e) {
        EXPECT_EQ(e.fault().kind, FaultKind::illegal_instruction);
    }
}

TEST(Pipeline, RegisterFileFlushIsOptional)
{
    const std::string src = ".text\n_start:\n    li a0, 7\n    li s5, 9\n    flushx\n    halt\n";
    CoreConfig cfg;
    Traced keep(src, cfg);
    EXPECT_EQ(keep.core->hart().regs[10], 7u);
    cfg.rf_flush = true;
    Traced zero(src, cfg);
    for (int i = 0; i < 32; ++i)
        EXPECT_EQ(zero.core->hart().regs[i], 0u) << i;
}

TEST(Pipeline, InjectedFlushDoesNotCountAsProgramInstruction)
{
    const auto p = assemble(".mode user\n.trapvec h\n.text\n_start:\n    ecall\n    halt\nh:\n    mret\n");
    CoreConfig cfg;
    cfg.flush_on_trap = true;
    PhysicalMemory mem;
    Loader loader(mem);
    Core core(cfg, mem);
    core.load_context(loader.load(p));
    ASSERT_TRUE(core.run(100000));
    EXPECT_EQ(core.hart().csr_instret, 3u);
    EXPECT_EQ(core.stats().retired_injected, 2u);
    EXPECT_EQ(core.stats().flushes, 2u);
    for (const auto& f : core.flushx_log())
        EXPECT_TRUE(f.injected);
}
