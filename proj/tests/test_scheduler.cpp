#include <gtest/gtest.h>

#include <sstream>

#include "random_program.hpp"
#include "simf/assembler.hpp"
#include "simf/cosim.hpp"
#include "simf/routines.hpp"
#include "simf/scheduler.hpp"

using namespace simf;

namespace {

// Counts down from n, storing the counter into its own buffer as it goes.
std::string counter_program(std::uint32_t n)
{
    return fmt::format(R"(
.text
_start:
    la s0, buf
    li t0, {}
loop:
    sw t0, 0(s0)
    addi t0, t0, -1
    bnez t0, loop
    halt
.data
.align 12
buf: .space 64
)",
                       n);
}

} // namespace

TEST(Scheduler, RoundRobinRunsEveryContextToCompletion)
{
    System sys({});
    for (std::uint32_t n : {3000u, 5000u, 1000u})
        sys.add_program(assemble(counter_program(n)));
    SchedulerConfig sc;
    sc.quantum = 2000;
    const auto rep = sys.run(sc, 10'000'000);
    ASSERT_TRUE(rep.completed);
    ASSERT_EQ(rep.contexts.size(), 3u);
    std::uint64_t instrs = 0, cycles = 0;
    for (const auto& c : rep.contexts) {
        EXPECT_TRUE(c.halted);
        instrs += c.instructions;
        cycles += c.cycles;
    }
    // la(2) + li (two words above 2047) + 3n + halt
    EXPECT_EQ(rep.contexts[0].instructions, 3u * 3000 + 5);
    EXPECT_EQ(rep.contexts[2].instructions, 3u * 1000 + 4);
    EXPECT_EQ(instrs, rep.total_instructions);
    EXPECT_EQ(cycles, rep.total_cycles);
    EXPECT_GT(rep.switches, 5u);
    EXPECT_EQ(rep.total_flushes, 0u);
}

TEST(Scheduler, FlushOnSwitchCountsOneFlushPerSwitch)
{
    System sys({});
    sys.add_program(assemble(counter_program(4000)));
    sys.add_program(assemble(counter_program(4000)));
    SchedulerConfig sc;
    sc.quantum = 3000;
    sc.flush_on_switch = true;
    const auto rep = sys.run(sc, 10'000'000);
    ASSERT_TRUE(rep.completed);
    EXPECT_EQ(rep.total_flushes, rep.switches);
    EXPECT_EQ(sys.core().stats().flushes, rep.switches);
    // An injected flush is not a program instruction.
    EXPECT_EQ(rep.contexts[0].instructions, 3u * 4000 + 5);
}

TEST(Scheduler, ContextsAreIsolatedArchitecturally)
{
    // Each context's final state matches running it alone on the reference.
    System sys({});
    std::vector<Program> progs;
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        progs.push_back(assemble(gen::random_program(seed)));
        sys.add_program(progs.back());
    }
    SchedulerConfig sc;
    sc.quantum = 500;
    sc.flush_on_switch = true;
    const auto rep = sys.run(sc, 50'000'000);
    ASSERT_TRUE(rep.completed);
    for (std::uint32_t i = 0; i < progs.size(); ++i) {
        const auto solo = cosimulate({}, progs[i]);
        ASSERT_TRUE(solo.ok());
        const auto& h = sys.contexts()[i].state;
        for (int r = 1; r < 32; ++r)
            EXPECT_EQ(h.regs[r], solo.reference.regs[r]) << "context " << i << " x" << r;
        EXPECT_EQ(h.csr_instret, solo.reference.csr_instret);
    }
}

TEST(Scheduler, SoftwareRoutineCostsMoreThanFlushx)
{
    auto run = [](SwitchFlush m) {
        System sys({});
        sys.add_program(assemble(counter_program(6000)));
        sys.add_program(assemble(counter_program(6000)));
        sys.set_flush_routine(assemble(baseline_flush_program(CoreConfig{}.dcache)));
        SchedulerConfig sc;
        sc.quantum = 5000;
        sc.flush_on_switch = true;
        sc.mechanism = m;
        return sys.run(sc, 50'000'000);
    };
    const auto hw = run(SwitchFlush::flushx);
    const auto sw = run(SwitchFlush::routine);
    ASSERT_TRUE(hw.completed && sw.completed);
    EXPECT_EQ(hw.switches, sw.switches);
    EXPECT_GT(sw.total_cycles, hw.total_cycles);
    EXPECT_GT(sw.total_instructions, hw.total_instructions + 2000 * sw.switches);
}

TEST(Scheduler, ReportCsvHasOneRowPerContextAndATotal)
{
    System sys({});
    sys.add_program(assemble(counter_program(10)));
    sys.add_program(assemble(counter_program(20)));
    const auto rep = sys.run({}, 1'000'000);
    std::istringstream in(rep.csv());
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line))
        lines.push_back(line);
    ASSERT_EQ(lines.size(), 4u);
    EXPECT_EQ(lines[0], "context,cycles,instructions,flushes");
    EXPECT_EQ(lines[1].rfind("0,", 0), 0u);
    EXPECT_EQ(lines[2].rfind("1,", 0), 0u);
    EXPECT_EQ(lines[3].rfind("total,", 0), 0u);
    EXPECT_NE(lines[1].find(",34,0"), std::string::npos); // 3*10 + 4 instructions, no flushes
}

TEST(Scheduler, RejectsBadSetups)
{
    System empty({});
    EXPECT_THROW(empty.run({}, 1000), ConfigError);
    System sys({});
    sys.add_program(assemble(counter_program(10)));
    SchedulerConfig sc;
    sc.flush_on_switch = true;
    sc.mechanism = SwitchFlush::routine;
    EXPECT_THROW(sys.run(sc, 1000), ConfigError);
    sc = {};
    sc.quantum = 0;
    EXPECT_THROW(sys.run(sc, 1000), ConfigError);
}
