// Acceptance run: one PASS/FAIL line per criterion. Tolerances and time
// limits are fixed here. `--smoke` swaps the 20,000-sample channel run for
// the 200-sample variant.

#include <chrono>
#include <cstring>
#include <functional>
#include <random>
#include <set>

#include <fmt/core.h>

#include "random_program.hpp"
#include "simf/simf.hpp"

using namespace simf;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool ok = true;
    std::string detail;
};

int failures = 0;

void criterion(int id, const char* name, double limit_s, const std::function<Outcome()>& body)
{
    const auto t0 = Clock::now();
    Outcome r;
    try {
        r = body();
    } catch (const std::exception& e) {
        r = {false, fmt::format("exception: {}", e.what())};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    const bool in_time = secs <= limit_s;
    const bool pass = r.ok && in_time;
    failures += !pass;
    fmt::print("{} {} {}: {} ({:.2f} s, limit {:g} s{})\n", pass ? "PASS" : "FAIL", id, name, r.detail, secs,
               limit_s, in_time ? "" : ", too slow");
    std::fflush(stdout);
}

std::string with_final_flush(std::uint64_t seed, const gen::GenOptions& o)
{
    auto src = gen::random_program(seed, o);
    src.insert(src.find("    halt\n"), "    flushx\n");
    return src;
}

// 1. Every sphere-of-flushing structure equals its power-on state right
// after flushx commits; with rf_flush, so does the register file.
Outcome flush_completeness()
{
    int good = 0;
    std::string first_bad;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        CoreConfig cfg;
        cfg.rf_flush = seed % 2 == 0;
        gen::GenOptions o;
        o.maintenance = seed % 3 == 0;
        const auto p = assemble(with_final_flush(seed, o));
        PhysicalMemory mem, scratch;
        Loader loader(mem);
        Core core(cfg, mem);
        core.load_context(loader.load(p));
        const auto power_on = Core(cfg, scratch).dump_sof();
        bool seen = false, warm = false, ok = false;
        core.on_retire([&](const InFlight& in) {
            if (seen)
                return;
            if (in.inst.op != Opcode::flushx) {
                warm = !core.sof_is_reset();
                return;
            }
            seen = true;
            ok = core.dump_sof() == power_on;
            if (cfg.rf_flush)
                for (auto r : core.hart().regs)
                    ok = ok && r == 0;
        });
        const bool finished = core.run(5'000'000);
        if (finished && seen && warm && ok)
            ++good;
        else if (first_bad.empty())
            first_bad = fmt::format(", first failure seed {}", seed);
    }
    return {good == 100, fmt::format("{}/100 pre-states reset{}", good, first_bad)};
}

// 2. DRAM after (trace; flushx) equals the reference interpreter's memory.
Outcome writeback_preservation()
{
    int good = 0;
    std::uint64_t dirty = 0;
    for (std::uint64_t seed = 101; seed <= 200; ++seed) {
        const auto p = assemble(with_final_flush(seed, {}));
        PhysicalMemory mem;
        Loader loader(mem);
        const auto start = loader.load(p);
        ArchState ref{start, mem};
        Core core({}, mem);
        core.load_context(start);
        const bool finished = core.run(5'000'000);
        run_reference(ref, {}, 5'000'000);
        if (!core.flushx_log().empty())
            dirty += core.flushx_log().back().dirty_lines;
        good += finished && ref.hart.halted && core.memory().bytes() == ref.memory.bytes();
    }
    return {good == 100 && dirty > 0,
            fmt::format("{}/100 traces match the oracle, {} dirty lines written back", good, dirty)};
}

// 3. From the retirement stream: the instruction before flushx commits
// before flushx executes, and the next one is fetched after flushx commits.
Outcome serialization()
{
    int programs = 0;
    std::uint64_t checked = 0, violations = 0;
    for (std::uint64_t seed = 1; programs < 50; ++seed) {
        gen::GenOptions o;
        o.flushx = true;
        const auto p = assemble(with_final_flush(seed, o));
        PhysicalMemory mem;
        Loader loader(mem);
        Core core({}, mem);
        core.load_context(loader.load(p));
        std::vector<InFlight> retired;
        core.on_retire([&](const InFlight& in) { retired.push_back(in); });
        if (!core.run(5'000'000))
            return {false, fmt::format("seed {} did not halt", seed)};
        ++programs;
        for (std::size_t k = 1; k + 1 < retired.size(); ++k) {
            const auto& f = retired[k];
            if (f.inst.op != Opcode::flushx)
                continue;
            ++checked;
            const auto i0_wb = retired[k - 1].stamp[static_cast<std::size_t>(Stage::WB)];
            const auto f_ex = f.stamp[static_cast<std::size_t>(Stage::EX)];
            const auto f_wb = f.stamp[static_cast<std::size_t>(Stage::WB)];
            const auto i2_if = retired[k + 1].stamp[static_cast<std::size_t>(Stage::IF)];
            violations += !(i0_wb < f_ex && f_wb < i2_if);
        }
    }
    return {violations == 0 && checked >= 50,
            fmt::format("{} flushx in 50 programs, {} ordering violations", checked, violations)};
}

// 4. Instruction counts from the fill-then-flush benchmark.
Outcome instruction_reduction()
{
    const auto c = measure_flush_costs({});
    const double ratio = static_cast<double>(c.c_norm) / static_cast<double>(c.c_opt);
    return {c.c_opt == 1 && c.c_norm >= 2000 && ratio >= 100,
            fmt::format("C_opt={} C_norm={} reduction={:.0f}x (need 1, >=2000, >=100x)", c.c_opt, c.c_norm, ratio)};
}

// 5. ME occupancy of flushx against the number of distinct lines written,
// in a buffer exactly the size of the cache so nothing is evicted early.
Outcome latency_law()
{
    std::mt19937 rng(5);
    int good = 0;
    std::string first_bad;
    const CacheGeometry g;
    const std::uint32_t trials = 40;
    for (std::uint32_t t = 0; t < trials; ++t) {
        std::set<std::uint32_t> lines;
        const std::uint32_t target = t == 0 ? 0 : t == 1 ? g.lines() : rng() % g.lines();
        std::string src = ".text\n_start:\n    la s0, buf\n    li t0, 2048\n    add s0, s0, t0\n";
        std::vector<std::uint32_t> order(g.lines());
        for (std::uint32_t i = 0; i < order.size(); ++i)
            order[i] = i;
        std::shuffle(order.begin(), order.end(), rng);
        for (std::uint32_t i = 0; i < target; ++i) {
            const auto line = order[i];
            lines.insert(line);
            const int off = static_cast<int>(line % 64) * 64 - 2048;
            src += fmt::format("    li t1, {}\n    add t1, t1, s0\n    sb t0, {}(t1)\n", (line / 64) * 4096, off);
        }
        src += "    flushx\n    halt\n.data\n.align 12\nbuf: .space 32768\n";
        PhysicalMemory mem;
        Loader loader(mem);
        Core core({}, mem);
        core.load_context(loader.load(assemble(src)));
        std::uint64_t me = 0;
        core.on_retire([&](const InFlight& in) {
            if (in.inst.op == Opcode::flushx)
                me = in.me_cycles;
        });
        if (!core.run(5'000'000))
            return {false, "program did not halt"};
        const auto want = 512 + 8 * std::uint64_t{lines.size()};
        if (me == want)
            ++good;
        else if (first_bad.empty())
            first_bad = fmt::format(", {} dirty: {} cycles, expected {}", lines.size(), me, want);
    }
    return {good == static_cast<int>(trials),
            fmt::format("{}/{} trials with 0..512 dirty lines match 512+8d{}", good, trials, first_bad)};
}

// 6. Prime+probe with and without flush-on-trap.
Outcome channel_closure(std::uint32_t samples)
{
    const CoreConfig cfg;
    const ProbeBands bands;
    PrimeProbeOptions o;
    o.samples = samples;

    std::vector<Secret> secrets;
    const auto open_map = run_prime_probe(cfg, VictimSpec::random(1), o, &secrets);
    const auto open = analyze_channel(open_map, secrets, bands);

    o.flush = true;
    const auto closed_map = run_prime_probe(cfg, VictimSpec::random(1), o, &secrets);
    const auto closed = analyze_channel(closed_map, secrets, bands);
    std::uint32_t min_probe = ~0u;
    for (auto v : closed_map.latency)
        min_probe = std::min(min_probe, v);
    const auto other_map = run_prime_probe(cfg, VictimSpec::random(2), o);
    const bool identical = closed_map == other_map;

    const bool ok = open.accuracy >= 0.99 && open.mutual_information >= 0.9 && min_probe > bands.miss_min &&
                    closed.mutual_information <= 0.01 && identical;
    return {ok, fmt::format("{} samples; open acc={:.4f} MI={:.4f}; flushed min probe={} MI={:.6f} "
                            "maps for two secrets {}",
                            samples, open.accuracy, open.mutual_information, min_probe, closed.mutual_information,
                            identical ? "identical" : "differ")};
}

// 7. The overhead model and its agreement with the simulator.
Outcome overhead_model()
{
    std::vector<std::string> bad;
    const auto anchor = estimate_overhead({Rational(100'000'000), Rational(1000), Rational(10'000), 1, 1});
    if (anchor != Rational(1, 10))
        bad.push_back("anchor");

    std::mt19937_64 rng(7);
    for (int k = 0; k < 200; ++k) {
        const Rational clock(rng() % 4'000'000'000 + 1'000'000), f(rng() % 100'000), c(rng() % 5000 + 1);
        const Rational ncyc(rng() % 10'000'000 + 1), nins(rng() % 10'000'000 + 1);
        const auto base = estimate_overhead({clock, f, c, ncyc, nins});
        if (estimate_overhead({clock, 2 * f, c, ncyc, nins}) != 2 * base ||
            base != ncyc * f * c / (clock * nins)) {
            bad.push_back("linearity");
            break;
        }
    }

    const CoreConfig cfg;
    const auto costs = measure_flush_costs(cfg);
    const auto w = measure_workload(cfg, "alu");
    const auto pts = sweep(w, {100'000'000, 1'000'000'000}, frequency_grid(), costs);
    const Rational ratio(costs.c_norm, costs.c_opt);
    for (std::size_t i = 0; i + 9 <= pts.size(); i += 18)
        for (std::size_t j = 0; j < 9; ++j)
            if (pts[i + 9 + j].overhead != ratio * pts[i + j].overhead) {
                bad.push_back("ratio");
                i = pts.size();
                break;
            }
    if (!sweep_is_monotone(pts))
        bad.push_back("monotone");

    double worst = 0;
    for (auto mech : {SwitchFlush::flushx, SwitchFlush::routine})
        worst = std::max(worst, measure_closure(cfg, "alu", w.cycles / 200, mech).relative_error());
    if (worst > 0.05)
        bad.push_back("closure");

    std::string failed;
    for (const auto& b : bad)
        failed += " " + b;
    return {bad.empty(), fmt::format("anchor={} ratio={} closure error {:.2f}% (limit 5%){}{}", to_double(anchor),
                                     costs.c_norm / costs.c_opt, 100 * worst, bad.empty() ? "" : "; failed:", failed)};
}

// 8. Co-simulation of programs without flushx.
Outcome cosim()
{
    int good = 0;
    std::string first_bad;
    for (std::uint64_t seed = 1; seed <= 500; ++seed) {
        gen::GenOptions o;
        o.user_mode = seed % 4 == 0;
        const auto r = cosimulate({}, assemble(gen::random_program(seed, o)));
        if (r.ok())
            ++good;
        else if (first_bad.empty())
            first_bad = fmt::format(", seed {}: {}", seed, r.divergences.empty() ? "" : r.divergences.front());
    }
    return {good == 500, fmt::format("{}/500 programs agree{}", good, first_bad)};
}

} // namespace

int main(int argc, char** argv)
{
    const bool smoke = argc > 1 && std::strcmp(argv[1], "--smoke") == 0;
    criterion(1, "flush completeness", 10, flush_completeness);
    criterion(2, "write-back preservation", 30, writeback_preservation);
    criterion(3, "serialization", 30, serialization);
    criterion(4, "instruction-count reduction", 5, instruction_reduction);
    criterion(5, "flush latency law", 30, latency_law);
    if (smoke)
        criterion(6, "channel closure (smoke)", 5, [] { return channel_closure(200); });
    else
        criterion(6, "channel closure", 300, [] { return channel_closure(20000); });
    criterion(7, "overhead model", 60, overhead_model);
    criterion(8, "co-simulation", 120, cosim);
    fmt::print("{} of 8 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
