// simf: assembler, timed simulator and flush experiments.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>

#include "simf/simf.hpp"

namespace fs = std::filesystem;
using namespace simf;

namespace {

struct Common {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_given = false;
};

Settings resolve(const Common& c)
{
    Settings s;
    if (!c.config_path.empty())
        s = load_config_file(c.config_path, s);
    for (const auto& o : c.overrides)
        apply_override(s, o);
    if (!c.out_dir.empty())
        s.out_dir = c.out_dir;
    if (c.seed_given)
        s.seed = c.seed;
    s.validate();
    return s;
}

void add_common(CLI::App* app, Common& c)
{
    app->add_option("-c,--config", c.config_path, "config file (key = value under [section] headers)")
        ->check(CLI::ExistingFile);
    app->add_option("--set", c.overrides, "override one setting, section.key=value (repeatable)");
    app->add_option("-o,--out", c.out_dir, "output directory");
    app->add_option("--seed", c.seed, "random seed")->each([&c](const std::string&) { c.seed_given = true; });
}

std::string read_text(const std::string& path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw std::runtime_error(fmt::format("cannot open '{}'", path));
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

fs::path output(const Settings& s, const std::string& name)
{
    fs::create_directories(s.out_dir);
    return fs::path(s.out_dir) / name;
}

void write_text(const fs::path& p, std::string_view text)
{
    std::ofstream f(p, std::ios::binary);
    if (!f)
        throw std::runtime_error(fmt::format("cannot write '{}'", p.string()));
    f << text;
}

/// Source text or a binary image, decided by the magic.
Program load_program(const std::string& path)
{
    const auto text = read_text(path);
    const std::span<const std::uint8_t> bytes(reinterpret_cast<const std::uint8_t*>(text.data()), text.size());
    if (looks_like_image(bytes))
        return deserialize(bytes);
    try {
        return assemble(text);
    } catch (const AssemblyError& e) {
        throw std::runtime_error(fmt::format("{}:{}", path, e.what()));
    }
}

std::string hart_dump(const HartState& h)
{
    std::string out = fmt::format("pc 0x{:08x}\nmode {}\nhalted {}\ninstret {}\n", h.pc, to_string(h.mode),
                                  h.halted ? 1 : 0, h.csr_instret);
    for (int r = 0; r < 32; ++r)
        out += fmt::format("{:<4} 0x{:08x}\n", kAbiNames[r], h.regs[r]);
    return out;
}

int cmd_asm(const std::string& in, std::string out, bool disasm)
{
    const auto text = read_text(in);
    if (disasm) {
        const std::span<const std::uint8_t> bytes(reinterpret_cast<const std::uint8_t*>(text.data()), text.size());
        const auto listing = disassemble(deserialize(bytes));
        if (out.empty())
            std::cout << listing;
        else
            write_text(out, listing);
        return 0;
    }
    Program p;
    try {
        p = assemble(text);
    } catch (const AssemblyError& e) {
        std::cerr << in << ":" << e.what() << "\n";
        return 1;
    }
    if (out.empty())
        out = fs::path(in).replace_extension(".img").string();
    const auto img = serialize(p);
    write_text(out, std::string_view(reinterpret_cast<const char*>(img.data()), img.size()));
    std::cout << fmt::format("{}: {} bytes text, {} bytes data, entry 0x{:x}\n", out, p.text.size() * 4, p.data.size(),
                             p.entry);
    return 0;
}

int cmd_run(const Settings& s, const std::vector<std::string>& paths, bool cosim, Cycle max_cycles)
{
    std::vector<Program> progs;
    for (const auto& p : paths)
        progs.push_back(load_program(p));

    if (cosim && progs.size() != 1)
        throw ConfigError("--cosim takes exactly one program");

    System sys(s.core);
    for (const auto& p : progs)
        sys.add_program(p);
    if (s.scheduler.flush_on_switch && s.scheduler.mechanism == SwitchFlush::routine)
        sys.set_flush_routine(assemble(baseline_flush_program(s.core.dcache)));

    std::ofstream trace;
    if (s.trace) {
        trace.open(output(s, "trace.txt"));
        sys.core().on_cycle([&trace](const CycleTrace& t) { trace << t.to_string() << "\n"; });
    }
    RunReport rep;
    try {
        rep = sys.run(s.scheduler, max_cycles);
    } catch (const MachineFault& e) {
        std::cerr << "fault: " << e.what() << "\n";
        return 3;
    }
    write_text(output(s, "run_report.csv"), rep.csv());
    std::string state;
    for (const auto& c : sys.contexts())
        state += fmt::format("[context {}]\n{}", c.id, hart_dump(c.state));
    state += sys.core().dump_sof();
    write_text(output(s, "final_state.txt"), state);
    std::cout << rep.csv();
    if (!rep.completed) {
        std::cerr << fmt::format("stopped at the cycle limit ({})\n", max_cycles);
        return 4;
    }
    if (cosim) {
        auto cfg = s.core;
        cfg.flush_on_trap = s.scheduler.flush_on_trap;
        const auto r = cosimulate(cfg, progs[0], max_cycles);
        if (!r.ok()) {
            std::cerr << "co-simulation diverged:\n";
            for (const auto& d : r.divergences)
                std::cerr << "  " << d << "\n";
            return 2;
        }
        std::cout << fmt::format("co-simulation agrees after {} instructions\n", r.timed.csr_instret);
    }
    return 0;
}

int cmd_attack(const Settings& s, bool flush, std::uint32_t samples, const std::string& pattern, bool per_way)
{
    PrimeProbeOptions o;
    o.flush = flush;
    o.samples = samples;
    o.per_way = per_way;
    VictimSpec v = pattern == "alternating" ? VictimSpec::alternating(s.core.dcache.nsets) : VictimSpec::random(s.seed);
    std::vector<Secret> secrets;
    const auto map = run_prime_probe(s.core, v, o, &secrets);
    const auto m = analyze_channel(map, secrets);
    write_text(output(s, "heatmap.csv"), heatmap_csv(map));
    const auto report = fmt::format("flush={}\nsamples={}\nseed={}\npattern={}\n", flush ? "on" : "off", samples,
                                    s.seed, pattern) +
                        m.report();
    write_text(output(s, "metrics.txt"), report);
    std::cout << report;
    return 0;
}

int cmd_flushcost(const Settings& s)
{
    const auto none = run_flush_bench(s.core, FlushMechanism::none);
    const auto opt = run_flush_bench(s.core, FlushMechanism::flushx);
    const auto norm = run_flush_bench(s.core, FlushMechanism::baseline);
    const auto ci = [&](const FlushBenchResult& r) { return r.instructions - none.instructions; };
    const auto cc = [&](const FlushBenchResult& r) { return r.cycles - none.cycles; };

    std::string csv = "mechanism,cycles,instructions\n";
    csv += fmt::format("flushx,{},{}\n", cc(opt), ci(opt));
    csv += fmt::format("baseline,{},{}\n", cc(norm), ci(norm));
    write_text(output(s, "flushcost.csv"), csv);

    std::cout << fmt::format("dirty lines before flush: {}\n", opt.dirty_before);
    std::cout << fmt::format("{:<10} {:>10} {:>13}\n", "mechanism", "cycles", "instructions");
    std::cout << fmt::format("{:<10} {:>10} {:>13}\n", "flushx", cc(opt), ci(opt));
    std::cout << fmt::format("{:<10} {:>10} {:>13}\n", "baseline", cc(norm), ci(norm));
    std::cout << fmt::format("instruction ratio {:.1f}x, cycle ratio {:.3f}x\n",
                             static_cast<double>(ci(norm)) / static_cast<double>(ci(opt)),
                             static_cast<double>(cc(norm)) / static_cast<double>(cc(opt)));
    return 0;
}

std::vector<std::uint64_t> parse_clocks(const std::string& text)
{
    std::vector<std::uint64_t> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto comma = text.find(',', pos);
        const auto tok = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        std::size_t used = 0;
        const double v = std::stod(tok, &used);
        if (used != tok.size() || v < 1 || v != static_cast<double>(static_cast<std::uint64_t>(v)))
            throw ConfigError(fmt::format("bad clock '{}'", tok));
        out.push_back(static_cast<std::uint64_t>(v));
        if (comma == std::string::npos)
            break;
        pos = comma + 1;
    }
    return out;
}

int cmd_overhead(const Settings& s, const std::string& workload, const std::string& clocks, const std::string& frange)
{
    const auto colon = frange.find(':');
    if (colon == std::string::npos)
        throw ConfigError("--frange takes lo:hi");
    const auto grid = frequency_grid(std::stoull(frange.substr(0, colon)), std::stoull(frange.substr(colon + 1)));
    const auto w = measure_workload(s.core, workload);
    const auto costs = measure_flush_costs(s.core);
    const auto pts = sweep(w, parse_clocks(clocks), grid, costs);
    if (!sweep_is_monotone(pts)) {
        std::cerr << "overhead curve is not monotone; nothing written\n";
        return 5;
    }
    write_text(output(s, "overhead.csv"), sweep_csv(pts));
    std::cout << fmt::format("workload {}: {} cycles, {} instructions\n", w.name, w.cycles, w.instructions);
    std::cout << fmt::format("C_opt {} C_norm {}\n", costs.c_opt, costs.c_norm);
    std::cout << sweep_csv(pts);
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"simf: in-order core simulator with a single-instruction flush"};
    app.require_subcommand(1);

    Common common;

    auto* asm_cmd = app.add_subcommand("asm", "assemble a source file into a program image");
    std::string asm_in, asm_out;
    bool disasm = false;
    asm_cmd->add_option("input", asm_in, "assembly source (or image with --disasm)")->required()->check(CLI::ExistingFile);
    asm_cmd->add_option("-o,--output", asm_out, "output path (default: input with .img)");
    asm_cmd->add_flag("-d,--disasm", disasm, "print the listing of an image instead");

    auto* run_cmd = app.add_subcommand("run", "run one or more programs as scheduled contexts");
    std::vector<std::string> run_paths;
    bool cosim = false;
    Cycle max_cycles = 100'000'000;
    run_cmd->add_option("programs", run_paths, "sources or images")->required()->check(CLI::ExistingFile);
    run_cmd->add_flag("--cosim", cosim, "cross-check against the reference interpreter");
    run_cmd->add_option("--max-cycles", max_cycles, "cycle limit");
    add_common(run_cmd, common);

    auto* attack_cmd = app.add_subcommand("attack", "Prime+Probe on the L1 D-cache");
    std::string flush_flag = "off", pattern = "random";
    std::uint32_t samples = 20000;
    bool per_way = false;
    attack_cmd->add_option("--flush", flush_flag, "flush on every trap")->check(CLI::IsMember({"on", "off"}));
    attack_cmd->add_option("--samples", samples, "probe samples")->check(CLI::Range(1u, 10'000'000u));
    attack_cmd->add_option("--pattern", pattern, "victim secret")->check(CLI::IsMember({"random", "alternating"}));
    attack_cmd->add_flag("--per-way", per_way, "time each way separately");
    add_common(attack_cmd, common);

    auto* cost_cmd = app.add_subcommand("flushcost", "flushx vs the software flush routine");
    add_common(cost_cmd, common);

    auto* ov_cmd = app.add_subcommand("overhead", "flush overhead against flush frequency");
    std::string workload = "alu", clocks = "1e8,1e9", frange = "100:50000";
    ov_cmd->add_option("--workload", workload, "alu or memsweep")->check(CLI::IsMember({"alu", "memsweep"}));
    ov_cmd->add_option("--clocks", clocks, "comma-separated clock frequencies in Hz");
    ov_cmd->add_option("--frange", frange, "flush frequency range lo:hi in Hz (1-2-5 steps)");
    add_common(ov_cmd, common);

    auto* cfg_cmd = app.add_subcommand("config", "print the effective configuration");
    add_common(cfg_cmd, common);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*asm_cmd)
            return cmd_asm(asm_in, asm_out, disasm);
        const Settings s = resolve(common);
        if (*run_cmd)
            return cmd_run(s, run_paths, cosim, max_cycles);
        if (*attack_cmd)
            return cmd_attack(s, flush_flag == "on", samples, pattern, per_way);
        if (*cost_cmd)
            return cmd_flushcost(s);
        if (*ov_cmd)
            return cmd_overhead(s, workload, clocks, frange);
        if (*cfg_cmd) {
            std::cout << render_config(s);
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
