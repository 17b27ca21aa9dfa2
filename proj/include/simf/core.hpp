#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "simf/bpu.hpp"
#include "simf/cache.hpp"
#include "simf/isa.hpp"
#include "simf/memory.hpp"
#include "simf/reference.hpp"
#include "simf/tlb.hpp"

namespace simf {

struct CoreConfig {
    CacheGeometry dcache{};
    CacheGeometry icache{};
    TlbConfig tlb{};
    BpuConfig bpu{};
    bool rf_flush = false;
    /// Aggressive scheme: a flushx follows every ecall and mret.
    bool flush_on_trap = false;

    void validate() const
    {
        dcache.validate("dcache");
        icache.validate("icache");
        tlb.validate();
        bpu.validate();
    }

    RefOptions ref_options() const { return {dcache.nsets, dcache.assoc, rf_flush}; }

    bool operator==(const CoreConfig&) const = default;
};

enum class Stage : std::uint8_t { IF, ID, EX, ME, WB };
inline constexpr std::size_t kStages = 5;
inline constexpr std::array<std::string_view, kStages> kStageNames{"IF", "ID", "EX", "ME", "WB"};

inline constexpr Cycle kNever = ~Cycle{0};

/// Why WB saw no instruction in a cycle. Every cycle is either a commit or
/// exactly one of these, traced back to the stage where the bubble formed.
enum class Bubble : std::uint8_t {
    fill,
    fetch_latency,
    fetch_blocked,
    fetch_fault,
    mispredict,
    serialize,
    load_use,
    mem_latency,
    flush_me,
    drain,
    idle,
};
inline constexpr std::size_t kBubbleKinds = 11;
inline constexpr std::array<std::string_view, kBubbleKinds> kBubbleNames{
    "fill", "fetch_latency", "fetch_blocked", "fetch_fault", "mispredict", "serialize",
    "load_use", "mem_latency", "flush_me", "drain", "idle"};

/// One instruction in flight, with the first cycle it spent in each stage.
struct InFlight {
    std::uint64_t seq = 0;
    Addr pc = 0;
    Instruction inst{};
    bool injected = false;
    Addr predicted_next = 0;
    Addr next_pc = 0;
    std::uint32_t a = 0, b = 0;
    std::uint32_t result = 0;
    Addr vaddr = 0;
    std::optional<Fault> fault;
    std::uint64_t remaining = 0;
    bool started = false;
    std::array<Cycle, kStages> stamp{kNever, kNever, kNever, kNever, kNever};
    std::uint64_t me_cycles = 0;
};

struct FlushxTrace {
    std::uint64_t seq = 0;
    Addr pc = 0;
    bool injected = false;
    Cycle id = kNever, ex = kNever, me_start = kNever, wb = kNever;
    std::uint64_t me_cycles = 0;
    std::uint32_t dirty_lines = 0;
    /// WB cycle of the youngest older instruction, and IF cycle of the next fetch.
    Cycle prev_wb = kNever, next_if = kNever;
};

struct CycleTrace {
    struct Slot {
        std::uint64_t seq = 0;
        Addr pc = 0;
        Opcode op = Opcode::illegal;
    };
    enum Event : std::uint32_t {
        fetch = 1u << 0,
        commit = 1u << 1,
        squash = 1u << 2,
        flush_dcache = 1u << 3,
        flush_wb = 1u << 4,
        trap = 1u << 5,
        load_use_stall = 1u << 6,
        drain_wait = 1u << 7,
    };
    Cycle cycle = 0;
    std::array<std::optional<Slot>, kStages> stage{};
    std::uint32_t events = 0;
    Bubble wb_bubble = Bubble::fill;

    std::string to_string() const
    {
        std::string out = fmt::format("{}", cycle);
        for (std::size_t s = 0; s < kStages; ++s) {
            if (stage[s])
                out += fmt::format(" {}={}:{:x}:{}", kStageNames[s], stage[s]->seq, stage[s]->pc, mnemonic(stage[s]->op));
            else
                out += fmt::format(" {}=-", kStageNames[s]);
        }
        static constexpr std::array<std::string_view, 8> names{"fetch",        "commit",   "squash", "flush_dcache",
                                                               "flush_wb",     "trap",     "load_use", "drain_wait"};
        for (std::size_t i = 0; i < names.size(); ++i)
            if (events & (1u << i))
                out += fmt::format(" {}", names[i]);
        if (!stage[4])
            out += fmt::format(" bubble={}", kBubbleNames[static_cast<std::size_t>(wb_bubble)]);
        return out;
    }
};

struct CoreStats {
    Cycle cycles = 0;
    std::uint64_t retired = 0;
    std::uint64_t retired_injected = 0;
    std::uint64_t flushes = 0;
    std::uint64_t squashed = 0;
    std::uint64_t mispredicts = 0;
    std::uint64_t dcache_hits = 0, dcache_misses = 0;
    std::uint64_t icache_hits = 0, icache_misses = 0;
    std::array<std::uint64_t, kBubbleKinds> bubbles{};

    std::uint64_t bubble(Bubble b) const { return bubbles[static_cast<std::size_t>(b)]; }
    std::uint64_t total_bubbles() const
    {
        std::uint64_t n = 0;
        for (auto b : bubbles)
            n += b;
        return n;
    }
};

enum class TrapKind : std::uint8_t { ecall, mret };

struct TrapEvent {
    TrapKind kind;
    Addr pc;
    Cycle cycle;
};

/// The timed in-order core. Owns every sphere-of-flushing component; memory
/// is shared with whoever loaded the programs.
class Core {
public:
    using RetireHook = std::function<void(const InFlight&)>;
    using TrapHook = std::function<void(const TrapEvent&, HartState&)>;
    using TraceHook = std::function<void(const CycleTrace&)>;

    Core(const CoreConfig& cfg, PhysicalMemory& mem)
        : cfg_((cfg.validate(), cfg)), mem_(mem), dcache_(cfg.dcache), icache_(cfg.icache), tlb_(cfg.tlb),
          bpu_(cfg.bpu)
    {
        tag_.fill(Bubble::fill);
    }

    const CoreConfig& config() const { return cfg_; }

    // --- context control ----------------------------------------------------

    void load_context(const HartState& h)
    {
        require_empty("load_context");
        hart_ = h;
        fetch_pc_ = h.pc;
        fetch_blocked_ = false;
        fetch_faulted_ = false;
        drain_requested_ = false;
        has_context_ = true;
    }

    HartState save_context()
    {
        require_empty("save_context");
        hart_.csr_cycle = cycle_;
        return hart_;
    }

    /// Stops fetching so in-flight instructions retire; see empty().
    void request_drain() { drain_requested_ = true; }
    bool draining() const { return drain_requested_; }

    bool empty() const
    {
        for (const auto& s : slot_)
            if (s)
                return false;
        return !inject_pending_;
    }

    /// Places a flushx straight into decode, as the scheduler does on a
    /// switch. Fetch stays blocked until it retires.
    void inject_flushx()
    {
        require_empty("inject_flushx");
        slot_[1] = make_injected();
        fetch_blocked_ = true;
    }

    bool halted() const { return hart_.halted; }
    bool finished() const { return (!has_context_ || hart_.halted) && empty(); }

    // --- stepping -------------------------------------------------------------

    /// Advances one cycle.
    void step()
    {
        CycleTrace* tr = nullptr;
        if (trace_hook_) {
            trace_ = CycleTrace{};
            trace_.cycle = cycle_;
            tr = &trace_;
        }
        for (std::size_t s = 0; s < kStages; ++s)
            if (tr && slot_[s])
                tr->stage[s] = CycleTrace::Slot{slot_[s]->seq, slot_[s]->pc, slot_[s]->inst.op};
        if (tr)
            tr->wb_bubble = tag_[4];

        stay_.fill(false);
        do_wb(tr);
        do_me(tr);
        do_ex(tr);
        do_id(tr);
        do_if(tr);
        end_of_cycle(tr);
        if (tr)
            trace_hook_(*tr);
    }

    /// step(), then skips ahead over cycles in which only a multi-cycle ME
    /// occupant makes progress. Never crosses `limit` and is disabled while a
    /// cycle trace is attached.
    void advance(Cycle limit = kNever)
    {
        step();
        if (!trace_hook_ && cycle_ < limit)
            skip_stall(limit - cycle_);
    }

    /// Runs until the context halts and the pipeline is empty, or the cycle
    /// limit. Returns true when finished.
    bool run(Cycle max_cycles)
    {
        while (!finished()) {
            if (cycle_ >= max_cycles)
                return false;
            advance(max_cycles);
        }
        return true;
    }

    // --- observation -----------------------------------------------------------

    const HartState& hart() const { return hart_; }
    HartState& hart() { return hart_; }
    Cycle cycle() const { return cycle_; }
    const CoreStats& stats() const { return stats_; }
    PhysicalMemory& memory() { return mem_; }
    const PhysicalMemory& memory() const { return mem_; }
    const CacheArray& dcache() const { return dcache_; }
    const CacheArray& icache() const { return icache_; }
    const TlbHierarchy& tlb() const { return tlb_; }
    const Bpu& bpu() const { return bpu_; }
    CacheArray& dcache() { return dcache_; }
    const std::vector<FlushxTrace>& flushx_log() const { return flushx_log_; }
    void clear_flushx_log() { flushx_log_.clear(); }
    const std::optional<InFlight>& slot(Stage s) const { return slot_[static_cast<std::size_t>(s)]; }

    /// Memory as the running program would read it (dirty lines overlaid).
    PhysicalMemory coherent_memory() const { return dcache_.coherent_view(mem_); }

    /// Text snapshot of every sphere-of-flushing component.
    std::string dump_sof() const
    {
        return dcache_.dump("L1D") + icache_.dump("L1I") + tlb_.dump() + bpu_.dump();
    }

    bool sof_is_reset() const
    {
        return dcache_.is_reset() && icache_.is_reset() && tlb_.is_reset() && bpu_.is_reset();
    }

    void on_retire(RetireHook h) { retire_hook_ = std::move(h); }
    void on_trap(TrapHook h) { trap_hook_ = std::move(h); }
    void on_cycle(TraceHook h) { trace_hook_ = std::move(h); }

private:
    static constexpr std::size_t IF = 0, ID = 1, EX = 2, ME = 3, WB = 4;

    struct MeView {
        bool valid = false;
        bool is_load = false;
        bool writes = false;
        bool injected = false;
        std::uint8_t rd = 0;
        std::uint32_t result = 0;
    };

    void require_empty(const char* what) const
    {
        if (!empty())
            throw std::logic_error(fmt::format("{} with instructions in flight", what));
    }

    InFlight make_injected()
    {
        InFlight f;
        f.seq = next_seq_++;
        f.pc = hart_.pc;
        f.inst = Instruction{Opcode::flushx, 0, 0, 0, 0};
        f.injected = true;
        f.predicted_next = f.next_pc = hart_.pc;
        return f;
    }

    PageTableView page_table() const { return {&mem_, hart_.ptbase, hart_.asid, hart_.mode}; }

    static Fault make_fault(FaultKind k, Addr pc, Addr addr = 0, std::string detail = {})
    {
        return Fault{k, pc, addr, std::move(detail)};
    }

    bool move(std::size_t from)
    {
        if (slot_[from + 1])
            return false;
        slot_[from + 1] = std::move(slot_[from]);
        slot_[from].reset();
        return true;
    }

    void hold(std::size_t s, Bubble cause)
    {
        stay_[s] = true;
        cause_[s] = cause;
    }

    // --- WB -------------------------------------------------------------------

    void do_wb(CycleTrace* tr)
    {
        me_view_ = MeView{};
        auto& s = slot_[WB];
        if (!s) {
            ++stats_.bubbles[static_cast<std::size_t>(tag_[WB])];
            cause_[WB] = tag_[WB];
            return;
        }
        InFlight in = std::move(*s);
        s.reset();
        in.stamp[WB] = cycle_;
        if (tr)
            tr->events |= CycleTrace::commit;
        commit(in, tr);
    }

    void commit(InFlight& in, CycleTrace* tr)
    {
        if (in.fault)
            throw MachineFault(*in.fault);
        const auto op = in.inst.op;
        switch (op) {
        case Opcode::flushx:
            icache_.invalidate_all();
            tlb_.flush_all();
            bpu_.flush();
            if (cfg_.rf_flush)
                for (int r = 1; r < 32; ++r)
                    hart_.regs[r] = 0;
            ++stats_.flushes;
            if (tr)
                tr->events |= CycleTrace::flush_wb;
            if (auto* t = flushx_trace(in.seq)) {
                t->wb = cycle_;
                pending_next_if_ = flushx_log_.size() - 1;
            }
            break;
        case Opcode::icinv_all: icache_.invalidate_all(); break;
        case Opcode::tlbinv_all: tlb_.flush_all(); break;
        case Opcode::bpinv_all: bpu_.flush(); break;
        case Opcode::ecall:
            hart_.mepc = in.pc + 4;
            hart_.prev_mode = hart_.mode;
            hart_.mode = Mode::machine;
            in.next_pc = hart_.trap_vector;
            break;
        case Opcode::mret:
            hart_.mode = hart_.prev_mode;
            in.next_pc = hart_.mepc;
            break;
        case Opcode::halt: hart_.halted = true; break;
        default: break;
        }
        if (writes_rd(in.inst))
            hart_.regs[in.inst.rd] = in.result;
        hart_.regs[0] = 0;
        ++stats_.retired;
        if (in.injected) {
            ++stats_.retired_injected;
        } else {
            hart_.pc = in.next_pc;
            ++hart_.csr_instret;
        }
        last_commit_cycle_ = cycle_;

        if (blocks_fetch(op) && op != Opcode::halt) {
            fetch_pc_ = hart_.pc;
            unblock_pending_ = true;
        }
        if (retire_hook_)
            retire_hook_(in);
        if (op == Opcode::ecall || op == Opcode::mret) {
            if (tr)
                tr->events |= CycleTrace::trap;
            if (trap_hook_)
                trap_hook_(TrapEvent{op == Opcode::ecall ? TrapKind::ecall : TrapKind::mret, in.pc, cycle_}, hart_);
            if (cfg_.flush_on_trap) {
                inject_pending_ = true;
                unblock_pending_ = false;
            }
        }
    }

    // --- ME -------------------------------------------------------------------

    void do_me(CycleTrace* tr)
    {
        auto& s = slot_[ME];
        if (!s) {
            cause_[ME] = tag_[ME];
            return;
        }
        InFlight& in = *s;
        if (!in.started) {
            in.started = true;
            in.stamp[ME] = cycle_;
            in.remaining = start_me(in, tr);
            in.me_cycles = in.remaining;
        }
        --in.remaining;
        me_view_ = MeView{true, is_load(in.inst.op), writes_rd(in.inst), in.injected, in.inst.rd, in.result};
        if (in.remaining > 0) {
            hold(ME, in.inst.op == Opcode::flushx ? Bubble::flush_me : Bubble::mem_latency);
            return;
        }
        in.started = false;
        move(ME);
    }

    std::uint64_t start_me(InFlight& in, CycleTrace* tr)
    {
        if (in.fault)
            return 1;
        const auto op = in.inst.op;
        if (is_mem(op)) {
            const auto type = is_load(op) ? AccessType::load : AccessType::store;
            const auto t = tlb_.translate(in.vaddr, type, page_table());
            if (!t.ok) {
                in.fault = make_fault(FaultKind::page_fault, in.pc, in.vaddr);
                return 1;
            }
            const unsigned size = (op == Opcode::lw || op == Opcode::sw) ? 4 : 1;
            if (!mem_.contains(t.paddr, size)) {
                in.fault = make_fault(FaultKind::bus_error, in.pc, t.paddr);
                return 1;
            }
            auto acc = dcache_.access(t.paddr, is_load(op) ? AccessKind::read : AccessKind::write, mem_);
            apply_writebacks(mem_, acc.writebacks);
            (acc.hit ? stats_.dcache_hits : stats_.dcache_misses) += 1;
            switch (op) {
            case Opcode::lw: in.result = dcache_.read32(acc, t.paddr); break;
            case Opcode::lb:
                in.result = static_cast<std::uint32_t>(sign_extend(dcache_.read8(acc, t.paddr), 8));
                break;
            case Opcode::sw: dcache_.write32(acc, t.paddr, in.b); break;
            case Opcode::sb: dcache_.write8(acc, t.paddr, static_cast<std::uint8_t>(in.b)); break;
            default: break;
            }
            return 1 + (acc.latency - cfg_.dcache.hit_latency) + t.extra;
        }
        if (op == Opcode::flushx) {
            const auto dirty = dcache_.count_dirty();
            auto rep = dcache_.flush_all();
            apply_writebacks(mem_, rep.writebacks);
            if (tr)
                tr->events |= CycleTrace::flush_dcache;
            if (auto* t = flushx_trace(in.seq)) {
                t->me_start = cycle_;
                t->me_cycles = rep.cycles;
                t->dirty_lines = dirty;
            }
            return rep.cycles;
        }
        if (op == Opcode::dcflush_sw) {
            auto rep = dcache_.flush_line(selector_set(in.a), selector_way(in.a));
            apply_writebacks(mem_, rep.writebacks);
            return rep.cycles;
        }
        return 1;
    }

    // --- EX -------------------------------------------------------------------

    void do_ex(CycleTrace* tr)
    {
        auto& s = slot_[EX];
        if (!s) {
            cause_[EX] = tag_[EX];
            return;
        }
        if (slot_[ME])
            return; // ME still busy; EX holds without creating a bubble
        InFlight& in = *s;
        const auto& i = in.inst;
        if (me_view_.valid && me_view_.is_load && me_view_.writes &&
            ((reads_rs1(i.op) && i.rs1 == me_view_.rd) || (reads_rs2(i.op) && i.rs2 == me_view_.rd))) {
            hold(EX, Bubble::load_use);
            if (tr)
                tr->events |= CycleTrace::load_use_stall;
            return;
        }
        in.stamp[EX] = cycle_;
        execute(in);
        if (i.op == Opcode::flushx)
            if (auto* t = flushx_trace(in.seq)) {
                t->ex = cycle_;
                t->prev_wb = last_commit_cycle_;
            }
        const auto seq = in.seq;
        const auto resolved = in.next_pc;
        const bool redirect = !in.fault && !blocks_fetch(i.op) && resolved != in.predicted_next;
        move(EX);
        if (redirect) {
            squash_seq_ = seq;
            squash_target_ = resolved;
            squash_pending_ = true;
            ++stats_.mispredicts;
        }
    }

    std::uint32_t operand(std::uint8_t r) const
    {
        if (r == 0)
            return 0;
        if (me_view_.valid && me_view_.writes && me_view_.rd == r)
            return me_view_.result;
        return hart_.regs[r];
    }

    void execute(InFlight& in)
    {
        const auto& i = in.inst;
        in.next_pc = in.pc + 4;
        if (in.fault)
            return;
        in.a = operand(i.rs1);
        in.b = operand(i.rs2);
        const auto imm = static_cast<std::uint32_t>(i.imm);
        switch (i.op) {
        case Opcode::add:
        case Opcode::sub:
        case Opcode::and_:
        case Opcode::or_:
        case Opcode::xor_:
        case Opcode::sll:
        case Opcode::srl:
        case Opcode::slt: in.result = alu(i.op, in.a, in.b); break;
        case Opcode::addi: in.result = in.a + imm; break;
        case Opcode::lui: in.result = imm << 12; break;
        case Opcode::lw:
        case Opcode::lb:
        case Opcode::sw:
        case Opcode::sb:
            in.vaddr = in.a + imm;
            if ((i.op == Opcode::lw || i.op == Opcode::sw) && in.vaddr % 4)
                in.fault = make_fault(FaultKind::misaligned_access, in.pc, in.vaddr);
            break;
        case Opcode::beq:
        case Opcode::bne:
        case Opcode::blt:
        case Opcode::bge:
            if (branch_taken(i.op, in.a, in.b))
                in.next_pc = in.pc + imm;
            break;
        case Opcode::jal:
            in.result = in.pc + 4;
            in.next_pc = in.pc + imm;
            break;
        case Opcode::jalr:
            in.result = in.pc + 4;
            in.next_pc = (in.a + imm) & ~1u;
            break;
        case Opcode::csrr:
            if (i.imm == static_cast<std::int32_t>(kCsrCycle))
                in.result = static_cast<std::uint32_t>(cycle_);
            else
                in.result = static_cast<std::uint32_t>(hart_.csr_instret +
                                                       ((me_view_.valid && !me_view_.injected) ? 1 : 0));
            break;
        case Opcode::ecall:
            if (hart_.trap_vector == 0)
                in.fault = make_fault(FaultKind::no_trap_vector, in.pc);
            break;
        case Opcode::halt: in.next_pc = in.pc; break;
        case Opcode::dcflush_sw:
            if (selector_set(in.a) >= cfg_.dcache.nsets || selector_way(in.a) >= cfg_.dcache.assoc)
                in.fault = make_fault(FaultKind::bad_selector, in.pc, 0, fmt::format("selector 0x{:x}", in.a));
            break;
        default: break;
        }
        if (in.injected)
            in.next_pc = in.pc;
        const auto kind = branch_kind(i);
        if (kind != BranchKind::none && !in.fault)
            bpu_.update(in.pc, kind, in.next_pc != in.pc + 4, in.next_pc);
    }

    // --- ID -------------------------------------------------------------------

    void do_id(CycleTrace* tr)
    {
        auto& s = slot_[ID];
        if (!s) {
            cause_[ID] = tag_[ID];
            return;
        }
        InFlight& in = *s;
        const auto op = in.inst.op;
        if (in.stamp[ID] == kNever) {
            in.stamp[ID] = cycle_;
            if (!in.fault) {
                if (op == Opcode::illegal)
                    in.fault = make_fault(FaultKind::illegal_instruction, in.pc);
                else if (is_privileged(op) && hart_.mode != Mode::machine && !in.injected)
                    in.fault = make_fault(FaultKind::illegal_instruction, in.pc, 0,
                                          fmt::format("'{}' in user mode", mnemonic(op)));
            }
            if (blocks_fetch(op))
                fetch_blocked_ = true;
            if (op == Opcode::flushx) {
                flushx_log_.push_back(FlushxTrace{in.seq, in.pc, in.injected, cycle_});
            }
        }
        if (slot_[EX])
            return;
        if (drains_pipeline(op) && (slot_[ME] || slot_[WB])) {
            hold(ID, Bubble::serialize);
            if (tr)
                tr->events |= CycleTrace::drain_wait;
            return;
        }
        move(ID);
    }

    // --- IF -------------------------------------------------------------------

    void do_if(CycleTrace* tr)
    {
        auto& s = slot_[IF];
        if (s) {
            if (s->remaining > 0)
                --s->remaining;
            if (s->remaining > 0) {
                hold(IF, Bubble::fetch_latency);
                return;
            }
            move(IF);
            return;
        }
        if (!can_fetch()) {
            cause_[IF] = idle_fetch_cause();
            return;
        }
        s = fetch();
        if (tr) {
            tr->events |= CycleTrace::fetch;
            tr->stage[IF] = CycleTrace::Slot{s->seq, s->pc, s->inst.op};
        }
        if (pending_next_if_ != kNone) {
            flushx_log_[pending_next_if_].next_if = cycle_;
            pending_next_if_ = kNone;
        }
        if (s->remaining > 0) {
            hold(IF, Bubble::fetch_latency);
            return;
        }
        move(IF);
    }

    InFlight fetch()
    {
        InFlight f;
        f.seq = next_seq_++;
        f.pc = fetch_pc_;
        f.stamp[IF] = cycle_;
        f.predicted_next = f.pc + 4;
        std::uint64_t occupancy = 1;
        if (f.pc % 4) {
            f.fault = make_fault(FaultKind::misaligned_access, f.pc, f.pc, "instruction fetch");
        } else {
            const auto t = tlb_.translate(f.pc, AccessType::fetch, page_table());
            if (!t.ok) {
                f.fault = make_fault(FaultKind::page_fault, f.pc, f.pc, "instruction fetch");
            } else if (!mem_.contains(t.paddr, 4)) {
                f.fault = make_fault(FaultKind::bus_error, f.pc, t.paddr);
            } else {
                auto acc = icache_.access(t.paddr, AccessKind::ifetch, mem_);
                (acc.hit ? stats_.icache_hits : stats_.icache_misses) += 1;
                f.inst = decode(icache_.read32(acc, t.paddr));
                occupancy += (acc.latency - cfg_.icache.hit_latency) + t.extra;
                const auto p = bpu_.predict(f.pc, branch_kind(f.inst));
                if (p.taken)
                    f.predicted_next = p.target;
            }
        }
        if (f.fault)
            fetch_faulted_ = true;
        fetch_pc_ = f.predicted_next;
        f.remaining = occupancy - 1;
        return f;
    }

    bool can_fetch() const
    {
        return has_context_ && !hart_.halted && !drain_requested_ && !fetch_blocked_ && !fetch_faulted_;
    }

    Bubble idle_fetch_cause() const
    {
        if (!has_context_ || hart_.halted)
            return Bubble::idle;
        if (drain_requested_)
            return Bubble::drain;
        if (fetch_blocked_)
            return Bubble::fetch_blocked;
        return Bubble::fetch_fault;
    }

    // Either the whole front end is parked behind ME, or it is empty and
    // cannot fetch. Nothing but ME's countdown changes until ME finishes, so
    // those cycles are accounted in bulk.
    void skip_stall(Cycle budget)
    {
        if (!slot_[ME] || slot_[WB] || inject_pending_ || unblock_pending_)
            return;
        auto& me = *slot_[ME];
        if (me.remaining < 2)
            return;
        const bool parked = slot_[EX] && slot_[ID] && slot_[IF] && slot_[IF]->remaining == 0;
        const bool idle = !slot_[EX] && !slot_[ID] && !slot_[IF] && !can_fetch();
        if (!parked && !idle)
            return;
        const Cycle k = std::min<Cycle>(me.remaining - 1, budget);
        if (k == 0)
            return;
        stats_.bubbles[static_cast<std::size_t>(tag_[WB])] += k;
        me.remaining -= k;
        if (idle) {
            const auto c = idle_fetch_cause();
            tag_[EX] = k >= 2 ? c : tag_[ID];
            tag_[ID] = c;
        }
        cycle_ += k;
        stats_.cycles = cycle_;
    }

    // --- end of cycle -----------------------------------------------------------

    void end_of_cycle(CycleTrace* tr)
    {
        // Bubble provenance for slots that will be empty next cycle.
        std::array<Bubble, kStages> next = tag_;
        for (std::size_t s = WB; s >= ID; --s)
            if (!slot_[s])
                next[s] = cause_[s - 1];

        if (squash_pending_) {
            squash_pending_ = false;
            std::uint64_t n = 0;
            for (std::size_t s = IF; s <= EX; ++s)
                if (slot_[s] && slot_[s]->seq > squash_seq_) {
                    slot_[s].reset();
                    ++n;
                }
            for (std::size_t s = IF; s <= EX; ++s)
                if (!slot_[s])
                    next[s] = Bubble::mispredict;
            stats_.squashed += n;
            // a wrong-path flushx may already have been logged at ID
            while (!flushx_log_.empty() && flushx_log_.back().seq > squash_seq_)
                flushx_log_.pop_back();
            fetch_pc_ = squash_target_;
            fetch_blocked_ = false;
            fetch_faulted_ = false;
            if (tr)
                tr->events |= CycleTrace::squash;
        }
        if (unblock_pending_) {
            unblock_pending_ = false;
            fetch_blocked_ = false;
        }
        if (inject_pending_) {
            inject_pending_ = false;
            slot_[ID] = make_injected();
            fetch_blocked_ = true;
        }
        tag_ = next;
        ++cycle_;
        stats_.cycles = cycle_;
    }

    FlushxTrace* flushx_trace(std::uint64_t seq)
    {
        for (auto it = flushx_log_.rbegin(); it != flushx_log_.rend(); ++it)
            if (it->seq == seq)
                return &*it;
        return nullptr;
    }

    static constexpr std::size_t kNone = ~std::size_t{0};

    CoreConfig cfg_;
    PhysicalMemory& mem_;
    CacheArray dcache_;
    CacheArray icache_;
    TlbHierarchy tlb_;
    Bpu bpu_;
    HartState hart_{};
    bool has_context_ = false;

    std::array<std::optional<InFlight>, kStages> slot_{};
    std::array<Bubble, kStages> tag_{};
    std::array<Bubble, kStages> cause_{};
    std::array<bool, kStages> stay_{};
    MeView me_view_{};

    Cycle cycle_ = 0;
    Cycle last_commit_cycle_ = kNever;
    std::uint64_t next_seq_ = 1;
    Addr fetch_pc_ = 0;
    bool fetch_blocked_ = false;
    bool fetch_faulted_ = false;
    bool drain_requested_ = false;
    bool unblock_pending_ = false;
    bool inject_pending_ = false;
    bool squash_pending_ = false;
    std::uint64_t squash_seq_ = 0;
    Addr squash_target_ = 0;
    std::size_t pending_next_if_ = kNone;

    CoreStats stats_{};
    std::vector<FlushxTrace> flushx_log_;
    CycleTrace trace_{};
    RetireHook retire_hook_;
    TrapHook trap_hook_;
    TraceHook trace_hook_;
};

} // namespace simf
