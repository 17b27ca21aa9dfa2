#pragma once

#include <cstdint>

#include "simf/isa.hpp"
#include "simf/memory.hpp"

namespace simf {

/// Settings the untimed interpreter needs from the machine configuration.
struct RefOptions {
    std::uint32_t dcache_sets = 64;
    std::uint32_t dcache_ways = 8;
    bool rf_flush = false;
};

/// dcflush.sw selector: way in the upper half, set in the lower half.
constexpr std::uint32_t make_selector(std::uint32_t set, std::uint32_t way) { return way << 16 | set; }
constexpr std::uint32_t selector_set(std::uint32_t v) { return v & 0xFFFFu; }
constexpr std::uint32_t selector_way(std::uint32_t v) { return v >> 16; }

namespace detail {

[[noreturn]] inline void raise(FaultKind k, Addr pc, Addr addr = 0, std::string detail = {})
{
    throw MachineFault(Fault{k, pc, addr, std::move(detail)});
}

inline Addr translate_or_fault(const ArchState& s, Addr vaddr, AccessType type)
{
    auto w = walk(s.memory, s.hart.ptbase, vaddr, type, s.hart.mode);
    if (!w.ok)
        raise(FaultKind::page_fault, s.hart.pc, vaddr);
    if (!s.memory.contains(w.paddr))
        raise(FaultKind::bus_error, s.hart.pc, w.paddr);
    return w.paddr;
}

} // namespace detail

/// Architectural ALU result for register-register and register-immediate ops.
constexpr std::uint32_t alu(Opcode op, std::uint32_t a, std::uint32_t b)
{
    switch (op) {
    case Opcode::add:
    case Opcode::addi: return a + b;
    case Opcode::sub: return a - b;
    case Opcode::and_: return a & b;
    case Opcode::or_: return a | b;
    case Opcode::xor_: return a ^ b;
    case Opcode::sll: return a << (b & 31);
    case Opcode::srl: return a >> (b & 31);
    case Opcode::slt: return static_cast<std::int32_t>(a) < static_cast<std::int32_t>(b) ? 1u : 0u;
    default: return 0;
    }
}

constexpr bool branch_taken(Opcode op, std::uint32_t a, std::uint32_t b)
{
    switch (op) {
    case Opcode::beq: return a == b;
    case Opcode::bne: return a != b;
    case Opcode::blt: return static_cast<std::int32_t>(a) < static_cast<std::int32_t>(b);
    case Opcode::bge: return static_cast<std::int32_t>(a) >= static_cast<std::int32_t>(b);
    default: return false;
    }
}

/// Fetches and decodes the instruction at the current pc.
inline Instruction fetch_reference(const ArchState& s)
{
    if (s.hart.pc % 4)
        detail::raise(FaultKind::misaligned_access, s.hart.pc, s.hart.pc, "instruction fetch");
    return decode(s.memory.read32(detail::translate_or_fault(s, s.hart.pc, AccessType::fetch)));
}

/// Executes `i` (the instruction at s.hart.pc) with no timing model.
inline void step_reference(ArchState& s, const Instruction& i, const RefOptions& opt = {})
{
    auto& h = s.hart;
    if (h.halted)
        return;
    if (i.op == Opcode::illegal)
        detail::raise(FaultKind::illegal_instruction, h.pc);
    if (is_privileged(i.op) && h.mode != Mode::machine)
        detail::raise(FaultKind::illegal_instruction, h.pc, 0, fmt::format("'{}' in user mode", mnemonic(i.op)));

    const std::uint32_t a = h.regs[i.rs1];
    const std::uint32_t b = h.regs[i.rs2];
    const auto imm = static_cast<std::uint32_t>(i.imm);
    Addr next = h.pc + 4;
    std::uint32_t result = 0;

    switch (i.op) {
    case Opcode::add:
    case Opcode::sub:
    case Opcode::and_:
    case Opcode::or_:
    case Opcode::xor_:
    case Opcode::sll:
    case Opcode::srl:
    case Opcode::slt: result = alu(i.op, a, b); break;
    case Opcode::addi: result = a + imm; break;
    case Opcode::lui: result = imm << 12; break;
    case Opcode::lw:
    case Opcode::lb: {
        const Addr va = a + imm;
        if (i.op == Opcode::lw && va % 4)
            detail::raise(FaultKind::misaligned_access, h.pc, va);
        const Addr pa = detail::translate_or_fault(s, va, AccessType::load);
        result = i.op == Opcode::lw ? s.memory.read32(pa)
                                    : static_cast<std::uint32_t>(sign_extend(s.memory.read8(pa), 8));
        break;
    }
    case Opcode::sw:
    case Opcode::sb: {
        const Addr va = a + imm;
        if (i.op == Opcode::sw && va % 4)
            detail::raise(FaultKind::misaligned_access, h.pc, va);
        const Addr pa = detail::translate_or_fault(s, va, AccessType::store);
        if (i.op == Opcode::sw)
            s.memory.write32(pa, b);
        else
            s.memory.write8(pa, static_cast<std::uint8_t>(b));
        break;
    }
    case Opcode::beq:
    case Opcode::bne:
    case Opcode::blt:
    case Opcode::bge:
        if (branch_taken(i.op, a, b))
            next = h.pc + imm;
        break;
    case Opcode::jal:
        result = h.pc + 4;
        next = h.pc + imm;
        break;
    case Opcode::jalr:
        result = h.pc + 4;
        next = (a + imm) & ~1u;
        break;
    case Opcode::csrr:
        result = static_cast<std::uint32_t>(i.imm == static_cast<std::int32_t>(kCsrCycle) ? h.csr_cycle : h.csr_instret);
        break;
    case Opcode::ecall:
        if (h.trap_vector == 0)
            detail::raise(FaultKind::no_trap_vector, h.pc);
        h.mepc = h.pc + 4;
        h.prev_mode = h.mode;
        h.mode = Mode::machine;
        next = h.trap_vector;
        break;
    case Opcode::mret:
        h.mode = h.prev_mode;
        next = h.mepc;
        break;
    case Opcode::halt:
        h.halted = true;
        next = h.pc;
        break;
    case Opcode::flushx:
        if (opt.rf_flush)
            for (int r = 1; r < 32; ++r)
                h.regs[r] = 0;
        break;
    case Opcode::dcflush_sw:
        if (selector_set(a) >= opt.dcache_sets || selector_way(a) >= opt.dcache_ways)
            detail::raise(FaultKind::bad_selector, h.pc, 0, fmt::format("selector 0x{:x}", a));
        break;
    case Opcode::icinv_all:
    case Opcode::tlbinv_all:
    case Opcode::bpinv_all:
    case Opcode::fence_flush:
    case Opcode::illegal: break;
    }

    if (writes_rd(i))
        h.regs[i.rd] = result;
    h.regs[0] = 0;
    h.pc = next;
    ++h.csr_cycle;
    ++h.csr_instret;
}

/// Runs until halt or `max_steps`; returns the number of steps taken.
inline std::uint64_t run_reference(ArchState& s, const RefOptions& opt, std::uint64_t max_steps)
{
    std::uint64_t n = 0;
    while (!s.hart.halted && n < max_steps) {
        step_reference(s, fetch_reference(s), opt);
        ++n;
    }
    return n;
}

} // namespace simf
