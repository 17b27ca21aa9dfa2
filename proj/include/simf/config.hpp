#pragma once

#include <charconv>
#include <fstream>
#include <cstdint>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "simf/core.hpp"
#include "simf/scheduler.hpp"

namespace simf {

/// Everything a command can be configured with. Layering: defaults, then the
/// config file, then command-line overrides.
struct Settings {
    CoreConfig core{};
    SchedulerConfig scheduler{};
    bool trace = false;
    std::uint64_t seed = 1;
    std::string out_dir = "out";

    void validate() const
    {
        core.validate();
        scheduler.validate();
    }
};

namespace detail {

inline std::uint64_t parse_uint(const std::string& key, const std::string& v)
{
    std::uint64_t out = 0;
    const auto* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc{} || p != end)
        throw ConfigError(fmt::format("{}: expected an unsigned integer, got '{}'", key, v));
    return out;
}

inline std::uint32_t parse_u32(const std::string& key, const std::string& v)
{
    const auto x = parse_uint(key, v);
    if (x > 0xFFFFFFFFull)
        throw ConfigError(fmt::format("{}: {} is out of range", key, v));
    return static_cast<std::uint32_t>(x);
}

inline bool parse_bool(const std::string& key, const std::string& v)
{
    if (v == "true" || v == "on" || v == "1" || v == "yes")
        return true;
    if (v == "false" || v == "off" || v == "0" || v == "no")
        return false;
    throw ConfigError(fmt::format("{}: expected a boolean, got '{}'", key, v));
}

struct Key {
    std::function<void(Settings&, const std::string&, const std::string&)> set;
    std::function<std::string(const Settings&)> get;
};

template <class Field>
Key u32_key(Field f)
{
    return {[f](Settings& s, const std::string& k, const std::string& v) { f(s) = parse_u32(k, v); },
            [f](const Settings& s) { return std::to_string(f(const_cast<Settings&>(s))); }};
}

template <class Field>
Key bool_key(Field f)
{
    return {[f](Settings& s, const std::string& k, const std::string& v) { f(s) = parse_bool(k, v); },
            [f](const Settings& s) { return std::string(f(const_cast<Settings&>(s)) ? "true" : "false"); }};
}

inline void cache_keys(std::map<std::string, Key>& m, const std::string& sec, CacheGeometry CoreConfig::*c)
{
    m[sec + ".nsets"] = u32_key([c](Settings& s) -> auto& { return (s.core.*c).nsets; });
    m[sec + ".assoc"] = u32_key([c](Settings& s) -> auto& { return (s.core.*c).assoc; });
    m[sec + ".line_bytes"] = u32_key([c](Settings& s) -> auto& { return (s.core.*c).line_bytes; });
    m[sec + ".hit_latency"] = u32_key([c](Settings& s) -> auto& { return (s.core.*c).hit_latency; });
    m[sec + ".miss_penalty"] = u32_key([c](Settings& s) -> auto& { return (s.core.*c).miss_penalty; });
    m[sec + ".writeback_cycles"] = u32_key([c](Settings& s) -> auto& { return (s.core.*c).writeback_cycles; });
}

inline const std::map<std::string, Key>& keys()
{
    static const auto table = [] {
        std::map<std::string, Key> m;
        cache_keys(m, "dcache", &CoreConfig::dcache);
        cache_keys(m, "icache", &CoreConfig::icache);
        m["tlb.itlb_entries"] = u32_key([](Settings& s) -> auto& { return s.core.tlb.itlb_entries; });
        m["tlb.dtlb_entries"] = u32_key([](Settings& s) -> auto& { return s.core.tlb.dtlb_entries; });
        m["tlb.l2_entries"] = u32_key([](Settings& s) -> auto& { return s.core.tlb.l2_entries; });
        m["tlb.l2_ways"] = u32_key([](Settings& s) -> auto& { return s.core.tlb.l2_ways; });
        m["tlb.l2_hit_extra"] = u32_key([](Settings& s) -> auto& { return s.core.tlb.l2_hit_extra; });
        m["tlb.walk_cycles"] = u32_key([](Settings& s) -> auto& { return s.core.tlb.walk_cycles; });
        m["bpu.btb_entries"] = u32_key([](Settings& s) -> auto& { return s.core.bpu.btb_entries; });
        m["bpu.ghr_bits"] = u32_key([](Settings& s) -> auto& { return s.core.bpu.ghr_bits; });
        m["bpu.pht_entries"] = u32_key([](Settings& s) -> auto& { return s.core.bpu.pht_entries; });
        m["bpu.ras_depth"] = u32_key([](Settings& s) -> auto& { return s.core.bpu.ras_depth; });
        m["core.rf_flush"] = bool_key([](Settings& s) -> auto& { return s.core.rf_flush; });
        m["scheduler.quantum_cycles"] = {
            [](Settings& s, const std::string& k, const std::string& v) { s.scheduler.quantum = parse_uint(k, v); },
            [](const Settings& s) { return std::to_string(s.scheduler.quantum); }};
        m["scheduler.flush_on_switch"] = bool_key([](Settings& s) -> auto& { return s.scheduler.flush_on_switch; });
        m["scheduler.flush_on_trap"] = bool_key([](Settings& s) -> auto& { return s.scheduler.flush_on_trap; });
        m["scheduler.mechanism"] = {
            [](Settings& s, const std::string& k, const std::string& v) {
                if (v == "flushx")
                    s.scheduler.mechanism = SwitchFlush::flushx;
                else if (v == "routine")
                    s.scheduler.mechanism = SwitchFlush::routine;
                else
                    throw ConfigError(fmt::format("{}: expected flushx or routine, got '{}'", k, v));
            },
            [](const Settings& s) {
                return std::string(s.scheduler.mechanism == SwitchFlush::flushx ? "flushx" : "routine");
            }};
        m["run.trace"] = bool_key([](Settings& s) -> auto& { return s.trace; });
        m["run.seed"] = {[](Settings& s, const std::string& k, const std::string& v) { s.seed = parse_uint(k, v); },
                         [](const Settings& s) { return std::to_string(s.seed); }};
        m["run.out_dir"] = {[](Settings& s, const std::string&, const std::string& v) { s.out_dir = v; },
                            [](const Settings& s) { return s.out_dir; }};
        return m;
    }();
    return table;
}

inline std::string trim(std::string s)
{
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

} // namespace detail

/// Sets `section.key` to `value`; unknown keys are an error.
inline void apply_setting(Settings& s, const std::string& key, const std::string& value)
{
    const auto& table = detail::keys();
    const auto it = table.find(key);
    if (it == table.end())
        throw ConfigError(fmt::format("unknown config key '{}'", key));
    it->second.set(s, key, detail::trim(value));
}

/// `section.key=value`, as given on the command line.
inline void apply_override(Settings& s, const std::string& assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError(fmt::format("override '{}' is not of the form section.key=value", assignment));
    apply_setting(s, detail::trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

inline void apply_config_text(Settings& s, const std::string& text)
{
    boost::property_tree::ptree tree;
    std::istringstream in(text);
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(fmt::format("config line {}: {}", e.line(), e.message()));
    }
    for (const auto& [section, body] : tree) {
        if (body.empty())
            throw ConfigError(fmt::format("config key '{}' is outside any section", section));
        for (const auto& [key, value] : body)
            apply_setting(s, section + "." + key, value.data());
    }
}

inline Settings load_config_file(const std::string& path, Settings base = {})
{
    std::ifstream f(path);
    if (!f)
        throw ConfigError(fmt::format("cannot open config file '{}'", path));
    std::stringstream ss;
    ss << f.rdbuf();
    apply_config_text(base, ss.str());
    return base;
}

/// The full settings as a config file; reading it back gives the same values.
inline std::string render_config(const Settings& s)
{
    std::string out, section;
    for (const auto& [key, k] : detail::keys()) {
        const auto dot = key.find('.');
        const auto sec = key.substr(0, dot);
        if (sec != section) {
            out += fmt::format("{}[{}]\n", out.empty() ? "" : "\n", sec);
            section = sec;
        }
        out += fmt::format("{} = {}\n", key.substr(dot + 1), k.get(s));
    }
    return out;
}

} // namespace simf
