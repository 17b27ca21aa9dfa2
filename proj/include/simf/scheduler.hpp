#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "simf/core.hpp"
#include "simf/memory.hpp"
#include "simf/program.hpp"

namespace simf {

/// How a context switch cleanses the core when flush_on_switch is set.
enum class SwitchFlush : std::uint8_t { flushx, routine };

struct SchedulerConfig {
    Cycle quantum = 100000;
    bool flush_on_switch = false;
    bool flush_on_trap = false;
    SwitchFlush mechanism = SwitchFlush::flushx;

    void validate() const
    {
        if (quantum < 1)
            throw ConfigError("scheduler: quantum_cycles must be >= 1");
    }
};

enum class ContextStatus : std::uint8_t { runnable, halted };

struct Context {
    std::uint32_t id = 0;
    HartState state{};
    ContextStatus status = ContextStatus::runnable;
    Cycle cycles = 0;
    std::uint64_t flushes = 0;
};

struct ContextReport {
    std::uint32_t id = 0;
    Cycle cycles = 0;
    std::uint64_t instructions = 0;
    std::uint64_t flushes = 0;
    bool halted = false;
};

struct RunReport {
    std::vector<ContextReport> contexts;
    Cycle total_cycles = 0;
    std::uint64_t total_instructions = 0;
    std::uint64_t total_flushes = 0;
    std::uint64_t switches = 0;
    bool completed = false;

    std::string csv() const
    {
        std::string out = "context,cycles,instructions,flushes\n";
        for (const auto& c : contexts)
            out += fmt::format("{},{},{},{}\n", c.id, c.cycles, c.instructions, c.flushes);
        out += fmt::format("total,{},{},{}\n", total_cycles, total_instructions, total_flushes);
        return out;
    }
};

/// Memory, loader, core and the contexts hosted on it. Contexts share every
/// microarchitectural structure and only their architectural state is
/// swapped.
class System {
public:
    explicit System(const CoreConfig& cfg, std::size_t memory_bytes = kDefaultMemoryBytes)
        : mem_(memory_bytes), loader_(mem_), core_(std::make_unique<Core>(cfg, mem_))
    {
    }

    std::uint32_t add_program(const Program& p)
    {
        Context c;
        c.id = static_cast<std::uint32_t>(contexts_.size());
        c.state = loader_.load(p, static_cast<std::uint16_t>(c.id + 1));
        contexts_.push_back(c);
        return c.id;
    }

    /// Program run at every switch when the software mechanism is selected.
    void set_flush_routine(const Program& p) { routine_ = loader_.load(p, kRoutineAsid); }

    Core& core() { return *core_; }
    const Core& core() const { return *core_; }
    PhysicalMemory& memory() { return mem_; }
    const std::vector<Context>& contexts() const { return contexts_; }
    Context& context(std::uint32_t id) { return contexts_.at(id); }

    /// Round-robin over runnable contexts. A quantum expiry always counts as
    /// a switch, even when the same context is the only one left.
    RunReport run(const SchedulerConfig& sc, Cycle max_cycles)
    {
        sc.validate();
        if (contexts_.empty())
            throw ConfigError("scheduler: no contexts");
        if (sc.flush_on_switch && sc.mechanism == SwitchFlush::routine && !routine_)
            throw ConfigError("scheduler: software flush selected but no routine loaded");
        if (core_->config().flush_on_trap != sc.flush_on_trap) {
            if (!core_->empty() || core_->cycle() != 0)
                throw std::logic_error("scheduler options changed after the core started");
            auto cfg = core_->config();
            cfg.flush_on_trap = sc.flush_on_trap;
            core_ = std::make_unique<Core>(cfg, mem_);
        }

        RunReport rep;
        Core& core = *core_;
        auto cur = next_runnable(contexts_.size() - 1);
        if (!cur) {
            rep.completed = true;
            return finish(rep);
        }
        core.load_context(contexts_[*cur].state);
        Cycle slice_start = core.cycle();
        std::uint64_t flush_mark = core.stats().flushes;

        while (core.cycle() < max_cycles) {
            core.advance(max_cycles);
            const bool halted = core.finished();
            if (!halted && !core.draining() && core.cycle() - slice_start >= sc.quantum)
                core.request_drain();
            if (!halted && !(core.draining() && core.empty()))
                continue;

            // Switch out.
            auto& ctx = contexts_[*cur];
            ctx.state = core.save_context();
            ctx.cycles += core.cycle() - slice_start;
            ctx.flushes += core.stats().flushes - flush_mark;
            if (halted)
                ctx.status = ContextStatus::halted;
            auto next = next_runnable(*cur);
            if (!next) {
                rep.completed = true;
                break;
            }
            ++rep.switches;
            if (sc.flush_on_switch) {
                switch_flush(sc, max_cycles);
                ++ctx.flushes;
            }
            cur = next;
            core.load_context(contexts_[*cur].state);
            slice_start = core.cycle();
            flush_mark = core.stats().flushes;
        }
        if (!rep.completed && cur) {
            auto& ctx = contexts_[*cur];
            ctx.cycles += core.cycle() - slice_start;
            ctx.flushes += core.stats().flushes - flush_mark;
            ctx.state = core.hart();
        }
        return finish(rep);
    }

private:
    static constexpr std::uint16_t kRoutineAsid = 0xFFFF;

    std::optional<std::size_t> next_runnable(std::size_t after) const
    {
        for (std::size_t k = 1; k <= contexts_.size(); ++k) {
            const auto i = (after + k) % contexts_.size();
            if (contexts_[i].status == ContextStatus::runnable)
                return i;
        }
        return std::nullopt;
    }

    void switch_flush(const SchedulerConfig& sc, Cycle max_cycles)
    {
        Core& core = *core_;
        if (sc.mechanism == SwitchFlush::flushx) {
            core.inject_flushx();
            while (!core.empty() && core.cycle() < max_cycles)
                core.advance(max_cycles);
        } else {
            core.load_context(*routine_);
            core.run(max_cycles);
        }
    }

    RunReport finish(RunReport& rep)
    {
        const auto& st = core_->stats();
        for (const auto& c : contexts_)
            rep.contexts.push_back({c.id, c.cycles, c.state.csr_instret, c.flushes, c.status == ContextStatus::halted});
        rep.total_cycles = core_->cycle();
        rep.total_instructions = st.retired;
        for (const auto& c : contexts_)
            rep.total_flushes += c.flushes;
        return rep;
    }

    PhysicalMemory mem_;
    Loader loader_;
    std::unique_ptr<Core> core_;
    std::vector<Context> contexts_;
    std::optional<HartState> routine_;
};

} // namespace simf
