#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "simf/assembler.hpp"
#include "simf/core.hpp"

namespace simf {

/// Probe latencies, one window per (sample, set). In per-way mode the
/// individual load windows are kept too.
struct ProbeMap {
    std::uint32_t samples = 0;
    std::uint32_t nsets = 0;
    std::uint32_t assoc = 0;
    std::vector<std::uint32_t> latency;     // samples * nsets
    std::vector<std::uint32_t> way_latency; // samples * nsets * assoc, per-way mode only

    std::uint32_t& at(std::uint32_t sample, std::uint32_t set) { return latency[std::size_t{sample} * nsets + set]; }
    std::uint32_t at(std::uint32_t sample, std::uint32_t set) const
    {
        return latency[std::size_t{sample} * nsets + set];
    }
    bool operator==(const ProbeMap&) const = default;
};

/// One bit per set; bit i set means the victim touches set i.
using Secret = std::vector<bool>;

struct VictimSpec {
    enum class Kind : std::uint8_t { fixed, random };
    Kind kind = Kind::random;
    Secret pattern; // fixed only
    std::uint64_t seed = 1;

    static VictimSpec fixed(Secret s) { return {Kind::fixed, std::move(s), 0}; }
    static VictimSpec alternating(std::uint32_t nsets)
    {
        Secret s(nsets);
        for (std::uint32_t i = 0; i < nsets; ++i)
            s[i] = i % 2 == 0;
        return fixed(std::move(s));
    }
    static VictimSpec random(std::uint64_t seed) { return {Kind::random, {}, seed}; }

    /// Secrets for `samples` samples. Random bits come straight from the
    /// engine output so the sequence is identical on every platform.
    std::vector<Secret> generate(std::uint32_t samples, std::uint32_t nsets) const
    {
        std::vector<Secret> out;
        out.reserve(samples);
        if (kind == Kind::fixed) {
            if (pattern.size() != nsets)
                throw ConfigError(fmt::format("victim pattern has {} bits, cache has {} sets", pattern.size(), nsets));
            out.assign(samples, pattern);
            return out;
        }
        std::mt19937_64 rng(seed);
        for (std::uint32_t s = 0; s < samples; ++s) {
            Secret bits(nsets);
            std::uint64_t word = 0;
            for (std::uint32_t i = 0; i < nsets; ++i) {
                if (i % 64 == 0)
                    word = rng();
                bits[i] = (word >> (i % 64)) & 1;
            }
            out.push_back(std::move(bits));
        }
        return out;
    }
};

struct PrimeProbeOptions {
    bool flush = false;
    std::uint32_t samples = 20000;
    bool per_way = false;
    /// Ways covered by the attacker's eviction buffer; 0 means the cache's
    /// associativity, anything else must equal it.
    std::uint32_t evict_ways = 0;
    Cycle max_cycles = 0; // 0: derived from the sample count
};

namespace detail {

// Registers holding the per-way base pointers of the eviction buffer.
inline constexpr std::array<const char*, 16> kWayRegs = {"s0", "s1", "s2", "s3", "s4",  "s5",  "s6", "s7",
                                                         "s8", "s9", "s10", "s11", "t3", "t4", "t5", "t6"};
inline constexpr std::uint32_t kSecretRegs = 4; // a0..a3 carry the secret into the victim

inline void way_bases(std::string& out, std::uint32_t assoc, std::uint32_t way_bytes)
{
    out += fmt::format("    la {}, evict_buf\n    li t0, {}\n", kWayRegs[0], way_bytes);
    for (std::uint32_t w = 1; w < assoc; ++w)
        out += fmt::format("    add {}, {}, t0\n", kWayRegs[w], kWayRegs[w - 1]);
}

inline void advance_bases(std::string& out, std::uint32_t assoc, std::uint32_t line)
{
    for (std::uint32_t w = 0; w < assoc; ++w)
        out += fmt::format("    addi {0}, {0}, {1}\n", kWayRegs[w], line);
}

} // namespace detail

/// Attacker (user mode) and victim (machine-mode trap handler) in one image.
/// Each sample primes every set, traps into the victim, then probes every set
/// with the ways in reverse order so a set the victim touched costs exactly
/// one miss. The last loop iteration is a warm-up that is discarded.
inline std::string prime_probe_program(const CacheGeometry& g, std::uint32_t samples, bool per_way)
{
    const std::uint32_t way_bytes = g.nsets * g.line_bytes;
    std::string s = fmt::format(".mode user\n.trapvec victim\n.text\n_start:\n    li sp, {}\nsample_loop:\n", samples + 1);

    detail::way_bases(s, g.assoc, way_bytes);
    s += fmt::format("    li gp, {}\nprime_set:\n", g.nsets);
    for (std::uint32_t w = 0; w < g.assoc; ++w)
        s += fmt::format("    lw t1, 0({})\n", detail::kWayRegs[w]);
    detail::advance_bases(s, g.assoc, g.line_bytes);
    s += "    addi gp, gp, -1\n    bnez gp, prime_set\n    ecall\n";

    detail::way_bases(s, g.assoc, way_bytes);
    s += fmt::format("    li gp, {}\nprobe_set:\n", g.nsets);
    if (per_way) {
        for (std::uint32_t k = 0; k < g.assoc; ++k) {
            const std::uint32_t w = g.assoc - 1 - k;
            s += fmt::format("    rdcycle t0\n    lw t1, 0({})\n    rdcycle t1\nway_record_{}:\n    sub t2, t1, t0\n",
                             detail::kWayRegs[w], w);
        }
    } else {
        s += "    rdcycle t0\n";
        for (std::uint32_t k = 0; k < g.assoc; ++k)
            s += fmt::format("    lw t1, 0({})\n", detail::kWayRegs[g.assoc - 1 - k]);
        s += "    rdcycle t1\nprobe_record:\n    sub t2, t1, t0\n";
    }
    detail::advance_bases(s, g.assoc, g.line_bytes);
    s += "    addi gp, gp, -1\n    bnez gp, probe_set\n    addi sp, sp, -1\n    bnez sp, sample_loop\n    halt\n";

    // Victim: walks the secret words a bit at a time, one load per set bit,
    // then scrubs its registers before returning.
    s += "victim:\n    la a7, victim_buf\n    li a4, 1\n";
    for (std::uint32_t w = 0; w * 32 < g.nsets; ++w) {
        const std::uint32_t bits = std::min<std::uint32_t>(32, g.nsets - w * 32);
        s += fmt::format(R"(    li a6, {1}
victim_bit_{0}:
    and a5, a{0}, a4
    beqz a5, victim_skip_{0}
    lw a5, 0(a7)
victim_skip_{0}:
    srl a{0}, a{0}, a4
    addi a7, a7, {2}
    addi a6, a6, -1
    bnez a6, victim_bit_{0}
)",
                         w, bits, g.line_bytes);
    }
    for (int r = 0; r < 8; ++r)
        s += fmt::format("    li a{}, 0\n", r);
    s += fmt::format("    mret\n.data\n.align 12\nevict_buf:\n    .space {}\nvictim_buf:\n    .space {}\n",
                     way_bytes * g.assoc, way_bytes);
    return s;
}

/// Runs the experiment on a fresh core. With `flush`, the core injects a
/// flushx after every trap entry and return.
inline ProbeMap run_prime_probe(const CoreConfig& cfg, const VictimSpec& victim, const PrimeProbeOptions& opt,
                                std::vector<Secret>* secrets_out = nullptr)
{
    const auto& g = cfg.dcache;
    g.validate("dcache");
    const std::uint32_t evict = opt.evict_ways == 0 ? g.assoc : opt.evict_ways;
    if (evict != g.assoc)
        throw ConfigError(fmt::format("eviction buffer covers {} ways, the cache has {}", evict, g.assoc));
    if (g.assoc > detail::kWayRegs.size())
        throw ConfigError(fmt::format("prime+probe supports at most {} ways", detail::kWayRegs.size()));
    if (g.nsets > 32 * detail::kSecretRegs)
        throw ConfigError(fmt::format("prime+probe supports at most {} sets", 32 * detail::kSecretRegs));
    if (opt.samples == 0)
        throw ConfigError("prime+probe needs at least one sample");

    const auto secrets = victim.generate(opt.samples, g.nsets);
    const Program prog = assemble(prime_probe_program(g, opt.samples, opt.per_way));

    auto c = cfg;
    c.flush_on_trap = opt.flush;
    PhysicalMemory mem;
    Loader loader(mem);
    Core core(c, mem);
    core.load_context(loader.load(prog));

    ProbeMap map;
    map.samples = opt.samples;
    map.nsets = g.nsets;
    map.assoc = g.assoc;
    map.latency.assign(std::size_t{opt.samples} * g.nsets, 0);
    if (opt.per_way)
        map.way_latency.assign(map.latency.size() * g.assoc, 0);

    // The probe after ecall k belongs to sample k-1; k = 0 is the warm-up.
    std::int64_t sample = -2;
    std::uint32_t set = 0;
    core.on_trap([&](const TrapEvent& ev, HartState& h) {
        if (ev.kind != TrapKind::ecall)
            return;
        ++sample;
        set = 0;
        const Secret* bits = sample >= 0 ? &secrets[static_cast<std::size_t>(sample)] : nullptr;
        for (std::uint32_t w = 0; w < detail::kSecretRegs; ++w) {
            std::uint32_t v = 0;
            for (std::uint32_t b = 0; b < 32 && bits && w * 32 + b < g.nsets; ++b)
                v |= static_cast<std::uint32_t>((*bits)[w * 32 + b]) << b;
            h.regs[10 + w] = v;
        }
    });

    const Addr probe_pc = opt.per_way ? 0 : prog.symbol("probe_record");
    std::vector<Addr> way_pcs(g.assoc, 0);
    if (opt.per_way)
        for (std::uint32_t w = 0; w < g.assoc; ++w)
            way_pcs[w] = prog.symbol(fmt::format("way_record_{}", w));
    std::uint32_t ways_seen = 0;
    core.on_retire([&](const InFlight& in) {
        if (in.injected || in.inst.op != Opcode::sub)
            return;
        if (!opt.per_way) {
            if (in.pc != probe_pc)
                return;
            if (sample >= 0)
                map.at(static_cast<std::uint32_t>(sample), set) = in.result;
            ++set;
            return;
        }
        for (std::uint32_t w = 0; w < g.assoc; ++w) {
            if (in.pc != way_pcs[w])
                continue;
            if (sample >= 0) {
                const auto idx = std::size_t{static_cast<std::uint32_t>(sample)} * g.nsets + set;
                map.way_latency[idx * g.assoc + w] = in.result;
                map.latency[idx] += in.result;
            }
            if (++ways_seen == g.assoc) {
                ways_seen = 0;
                ++set;
            }
        }
    });

    const Cycle budget = opt.max_cycles ? opt.max_cycles : Cycle{200000} * (opt.samples + 1);
    if (!core.run(budget))
        throw std::runtime_error("prime+probe did not finish within the cycle budget");
    if (sample + 1 != static_cast<std::int64_t>(opt.samples))
        throw std::logic_error("prime+probe sample count mismatch");
    if (secrets_out)
        *secrets_out = secrets;
    return map;
}

/// Latency bands of a single probe window: all hits stay at or below
/// hit_max, anything with a miss lands above miss_min.
struct ProbeBands {
    std::uint32_t hit_max = 10;
    std::uint32_t miss_min = 50;
    std::uint32_t threshold() const { return (hit_max + miss_min) / 2; }
};

struct ChannelMetrics {
    std::uint64_t observations = 0;
    double mean_touched = 0;   // mean latency where the secret bit is 1
    double mean_untouched = 0; // and where it is 0
    std::vector<double> set_mean;
    double accuracy = 0;
    double mutual_information = 0; // bits per (sample, set)
    double base_rate = 0;          // fraction of 1 bits in the secrets
    bool degenerate = false;       // one of the variables is constant

    std::string report() const
    {
        std::string out;
        out += fmt::format("observations={}\n", observations);
        out += fmt::format("accuracy={:.6f}\n", accuracy);
        out += fmt::format("mutual_information_bits={:.6f}\n", mutual_information);
        out += fmt::format("base_rate={:.6f}\n", base_rate);
        out += fmt::format("mean_latency_touched={:.3f}\n", mean_touched);
        out += fmt::format("mean_latency_untouched={:.3f}\n", mean_untouched);
        out += fmt::format("degenerate={}\n", degenerate ? 1 : 0);
        return out;
    }
};

/// Plug-in estimate of I(X;Y) in bits from a 2x2 count table.
inline double mutual_information(const std::array<std::array<std::uint64_t, 2>, 2>& n)
{
    const double total = static_cast<double>(n[0][0] + n[0][1] + n[1][0] + n[1][1]);
    if (total == 0)
        return 0;
    double mi = 0;
    for (int x = 0; x < 2; ++x)
        for (int y = 0; y < 2; ++y) {
            if (n[x][y] == 0)
                continue;
            const double pxy = static_cast<double>(n[x][y]) / total;
            const double px = static_cast<double>(n[x][0] + n[x][1]) / total;
            const double py = static_cast<double>(n[0][y] + n[1][y]) / total;
            mi += pxy * std::log2(pxy / (px * py));
        }
    return std::max(0.0, mi);
}

inline ChannelMetrics analyze_channel(const ProbeMap& map, const std::vector<Secret>& secrets,
                                      const ProbeBands& bands = {})
{
    if (secrets.size() != map.samples)
        throw std::invalid_argument(
            fmt::format("{} secrets for a map of {} samples", secrets.size(), map.samples));
    ChannelMetrics m;
    m.set_mean.assign(map.nsets, 0);
    std::array<std::array<std::uint64_t, 2>, 2> joint{};
    double sum1 = 0, sum0 = 0;
    for (std::uint32_t s = 0; s < map.samples; ++s) {
        if (secrets[s].size() != map.nsets)
            throw std::invalid_argument("secret width does not match the map");
        for (std::uint32_t i = 0; i < map.nsets; ++i) {
            const auto lat = map.at(s, i);
            const int bit = secrets[s][i];
            const int guess = lat > bands.threshold();
            ++joint[bit][guess];
            (bit ? sum1 : sum0) += lat;
            m.set_mean[i] += lat;
        }
    }
    m.observations = std::uint64_t{map.samples} * map.nsets;
    if (m.observations == 0)
        return m;
    const auto ones = joint[1][0] + joint[1][1];
    const auto zeros = joint[0][0] + joint[0][1];
    m.mean_touched = ones ? sum1 / static_cast<double>(ones) : 0;
    m.mean_untouched = zeros ? sum0 / static_cast<double>(zeros) : 0;
    for (auto& v : m.set_mean)
        v /= map.samples;
    m.accuracy = static_cast<double>(joint[0][0] + joint[1][1]) / static_cast<double>(m.observations);
    m.base_rate = static_cast<double>(ones) / static_cast<double>(m.observations);
    m.mutual_information = mutual_information(joint);
    m.degenerate = ones == 0 || zeros == 0 || joint[0][1] + joint[1][1] == 0 || joint[0][0] + joint[1][0] == 0;
    return m;
}

inline std::string heatmap_csv(const ProbeMap& map)
{
    std::string out = "sample,set,latency_cycles\n";
    out.reserve(out.size() + map.latency.size() * 12);
    for (std::uint32_t s = 0; s < map.samples; ++s)
        for (std::uint32_t i = 0; i < map.nsets; ++i)
            fmt::format_to(std::back_inserter(out), "{},{},{}\n", s, i, map.at(s, i));
    return out;
}

/// Inverse of heatmap_csv. Rows must be in the emitted order; the CSV does
/// not carry the associativity, so the caller supplies it.
inline ProbeMap parse_heatmap_csv(std::string_view text, std::uint32_t assoc = 0)
{
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line) || line != "sample,set,latency_cycles")
        throw std::invalid_argument("heatmap: bad header");
    std::vector<std::array<std::uint64_t, 3>> rows;
    std::uint32_t nsets = 0;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::array<std::uint64_t, 3> r{};
        std::istringstream ls(line);
        char c1 = 0, c2 = 0;
        if (!(ls >> r[0] >> c1 >> r[1] >> c2 >> r[2]) || c1 != ',' || c2 != ',')
            throw std::invalid_argument(fmt::format("heatmap: bad row '{}'", line));
        if (r[0] == 0)
            nsets = static_cast<std::uint32_t>(r[1] + 1);
        rows.push_back(r);
    }
    ProbeMap map;
    map.nsets = nsets;
    map.assoc = assoc;
    map.samples = nsets ? static_cast<std::uint32_t>(rows.size() / nsets) : 0;
    if (nsets == 0 || rows.size() % nsets != 0)
        throw std::invalid_argument("heatmap: ragged rows");
    map.latency.reserve(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (rows[k][0] != k / nsets || rows[k][1] != k % nsets)
            throw std::invalid_argument(fmt::format("heatmap: row {} out of order", k + 2));
        map.latency.push_back(static_cast<std::uint32_t>(rows[k][2]));
    }
    return map;
}

} // namespace simf
