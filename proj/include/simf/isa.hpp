#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "simf/common.hpp"

namespace simf {

// RV32I subset plus the flush extension. Standard instructions use their
// RV32I encodings; the flush family lives in the custom-0 major opcode.
enum class Opcode : std::uint8_t {
    illegal,
    add, sub, and_, or_, xor_, sll, srl, slt,
    addi, lui,
    lw, lb,
    sw, sb,
    beq, bne, blt, bge,
    jal, jalr,
    csrr,
    ecall, mret, halt,
    flushx, dcflush_sw, icinv_all, tlbinv_all, bpinv_all, fence_flush,
};

inline constexpr int kNumOpcodes = static_cast<int>(Opcode::fence_flush) + 1;

inline constexpr std::uint32_t kCsrCycle = 0xC00;
inline constexpr std::uint32_t kCsrInstret = 0xC02;

struct Instruction {
    Opcode op = Opcode::illegal;
    std::uint8_t rd = 0;
    std::uint8_t rs1 = 0;
    std::uint8_t rs2 = 0;
    /// Sign-extended immediate. Branch/jump: byte offset. lui: the 20-bit
    /// upper value (not shifted). csrr: the CSR number.
    std::int32_t imm = 0;

    bool operator==(const Instruction&) const = default;
};

enum class Format : std::uint8_t { none, r, i, load, store, branch, jal, jalr, u, csr, sys, flush_rs1 };

struct OpInfo {
    std::string_view mnemonic;
    Format format;
};

inline constexpr std::array<OpInfo, kNumOpcodes> kOpInfo{{
    {"illegal", Format::none},
    {"add", Format::r}, {"sub", Format::r}, {"and", Format::r}, {"or", Format::r},
    {"xor", Format::r}, {"sll", Format::r}, {"srl", Format::r}, {"slt", Format::r},
    {"addi", Format::i}, {"lui", Format::u},
    {"lw", Format::load}, {"lb", Format::load},
    {"sw", Format::store}, {"sb", Format::store},
    {"beq", Format::branch}, {"bne", Format::branch}, {"blt", Format::branch}, {"bge", Format::branch},
    {"jal", Format::jal}, {"jalr", Format::jalr},
    {"csrr", Format::csr},
    {"ecall", Format::sys}, {"mret", Format::sys}, {"halt", Format::sys},
    {"flushx", Format::sys}, {"dcflush.sw", Format::flush_rs1}, {"icinv.all", Format::sys},
    {"tlbinv.all", Format::sys}, {"bpinv.all", Format::sys}, {"fence.flush", Format::sys},
}};

constexpr const OpInfo& info(Opcode op) { return kOpInfo[static_cast<std::size_t>(op)]; }
constexpr std::string_view mnemonic(Opcode op) { return info(op).mnemonic; }

inline std::optional<Opcode> opcode_from_mnemonic(std::string_view m)
{
    for (int i = 1; i < kNumOpcodes; ++i)
        if (kOpInfo[i].mnemonic == m)
            return static_cast<Opcode>(i);
    return std::nullopt;
}

constexpr bool is_load(Opcode op) { return op == Opcode::lw || op == Opcode::lb; }
constexpr bool is_store(Opcode op) { return op == Opcode::sw || op == Opcode::sb; }
constexpr bool is_mem(Opcode op) { return is_load(op) || is_store(op); }
constexpr bool is_cond_branch(Opcode op)
{
    return op == Opcode::beq || op == Opcode::bne || op == Opcode::blt || op == Opcode::bge;
}

/// Machine-mode-only instructions.
constexpr bool is_privileged(Opcode op)
{
    switch (op) {
    case Opcode::mret:
    case Opcode::flushx:
    case Opcode::dcflush_sw:
    case Opcode::icinv_all:
    case Opcode::tlbinv_all:
    case Opcode::bpinv_all:
    case Opcode::fence_flush:
        return true;
    default:
        return false;
    }
}

/// Instructions that block younger fetch from decode until they retire.
constexpr bool blocks_fetch(Opcode op)
{
    switch (op) {
    case Opcode::flushx:
    case Opcode::fence_flush:
    case Opcode::ecall:
    case Opcode::mret:
    case Opcode::halt:
        return true;
    default:
        return false;
    }
}

/// Instructions that wait in decode until every older instruction retired.
constexpr bool drains_pipeline(Opcode op) { return op == Opcode::flushx || op == Opcode::fence_flush; }

constexpr bool writes_rd(const Instruction& i)
{
    switch (info(i.op).format) {
    case Format::r:
    case Format::i:
    case Format::load:
    case Format::jal:
    case Format::jalr:
    case Format::u:
    case Format::csr:
        return i.rd != 0;
    default:
        return false;
    }
}

constexpr bool reads_rs1(Opcode op)
{
    switch (info(op).format) {
    case Format::r:
    case Format::i:
    case Format::load:
    case Format::store:
    case Format::branch:
    case Format::jalr:
    case Format::flush_rs1:
        return true;
    default:
        return false;
    }
}

constexpr bool reads_rs2(Opcode op)
{
    const auto f = info(op).format;
    return f == Format::r || f == Format::store || f == Format::branch;
}

/// Control-flow class used by the branch predictor (from predecode).
enum class BranchKind : std::uint8_t { none, conditional, jump, call, ret, indirect };

constexpr BranchKind branch_kind(const Instruction& i)
{
    if (is_cond_branch(i.op))
        return BranchKind::conditional;
    if (i.op == Opcode::jal)
        return i.rd == 1 ? BranchKind::call : BranchKind::jump;
    if (i.op == Opcode::jalr) {
        if (i.rd == 1)
            return BranchKind::call;
        if (i.rd == 0 && i.rs1 == 1 && i.imm == 0)
            return BranchKind::ret;
        return BranchKind::indirect;
    }
    return BranchKind::none;
}

// --- binary encoding -------------------------------------------------------

namespace enc {
inline constexpr std::uint32_t kOpLoad = 0x03, kOpCustom0 = 0x0B, kOpImm = 0x13, kOpStore = 0x23,
                               kOpReg = 0x33, kOpLui = 0x37, kOpBranch = 0x63, kOpJalr = 0x67,
                               kOpJal = 0x6F, kOpSystem = 0x73;
inline constexpr std::uint32_t kEcall = 0x00000073, kEbreak = 0x00100073, kMret = 0x30200073;
} // namespace enc

constexpr std::int32_t sign_extend(std::uint32_t v, unsigned bits)
{
    const std::uint32_t m = std::uint32_t{1} << (bits - 1);
    v &= (bits == 32) ? 0xFFFFFFFFu : ((std::uint32_t{1} << bits) - 1);
    return static_cast<std::int32_t>((v ^ m) - m);
}

/// Encodes a canonical instruction. Out-of-range fields are truncated; the
/// assembler range-checks before calling this.
constexpr std::uint32_t encode(const Instruction& in)
{
    using namespace enc;
    const std::uint32_t rd = in.rd & 31u, rs1 = in.rs1 & 31u, rs2 = in.rs2 & 31u;
    const auto imm = static_cast<std::uint32_t>(in.imm);
    auto r_type = [&](std::uint32_t f3, std::uint32_t f7) {
        return (f7 << 25) | (rs2 << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | kOpReg;
    };
    auto i_type = [&](std::uint32_t opc, std::uint32_t f3) {
        return ((imm & 0xFFFu) << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | opc;
    };
    auto s_type = [&](std::uint32_t f3) {
        return (((imm >> 5) & 0x7Fu) << 25) | (rs2 << 20) | (rs1 << 15) | (f3 << 12) |
               ((imm & 0x1Fu) << 7) | kOpStore;
    };
    auto b_type = [&](std::uint32_t f3) {
        return (((imm >> 12) & 1u) << 31) | (((imm >> 5) & 0x3Fu) << 25) | (rs2 << 20) |
               (rs1 << 15) | (f3 << 12) | (((imm >> 1) & 0xFu) << 8) | (((imm >> 11) & 1u) << 7) |
               kOpBranch;
    };
    auto custom = [&](std::uint32_t f3) { return (rs1 << 15) | (f3 << 12) | kOpCustom0; };

    switch (in.op) {
    case Opcode::add: return r_type(0, 0);
    case Opcode::sub: return r_type(0, 0x20);
    case Opcode::sll: return r_type(1, 0);
    case Opcode::slt: return r_type(2, 0);
    case Opcode::xor_: return r_type(4, 0);
    case Opcode::srl: return r_type(5, 0);
    case Opcode::or_: return r_type(6, 0);
    case Opcode::and_: return r_type(7, 0);
    case Opcode::addi: return i_type(kOpImm, 0);
    case Opcode::lui: return ((imm & 0xFFFFFu) << 12) | (rd << 7) | kOpLui;
    case Opcode::lb: return i_type(kOpLoad, 0);
    case Opcode::lw: return i_type(kOpLoad, 2);
    case Opcode::sb: return s_type(0);
    case Opcode::sw: return s_type(2);
    case Opcode::beq: return b_type(0);
    case Opcode::bne: return b_type(1);
    case Opcode::blt: return b_type(4);
    case Opcode::bge: return b_type(5);
    case Opcode::jal:
        return (((imm >> 20) & 1u) << 31) | (((imm >> 1) & 0x3FFu) << 21) | (((imm >> 11) & 1u) << 20) |
               (((imm >> 12) & 0xFFu) << 12) | (rd << 7) | kOpJal;
    case Opcode::jalr: return i_type(kOpJalr, 0);
    case Opcode::csrr: return ((imm & 0xFFFu) << 20) | (2u << 12) | (rd << 7) | kOpSystem;
    case Opcode::ecall: return kEcall;
    case Opcode::mret: return kMret;
    case Opcode::halt: return kEbreak;
    case Opcode::flushx: return custom(0);
    case Opcode::dcflush_sw: return custom(1);
    case Opcode::icinv_all: return custom(2);
    case Opcode::tlbinv_all: return custom(3);
    case Opcode::bpinv_all: return custom(4);
    case Opcode::fence_flush: return custom(5);
    case Opcode::illegal: break;
    }
    return 0;
}

/// Decodes a 32-bit word; anything outside the subset yields Opcode::illegal.
constexpr Instruction decode(std::uint32_t w)
{
    using namespace enc;
    Instruction in;
    const auto opc = w & 0x7Fu;
    const auto rd = static_cast<std::uint8_t>((w >> 7) & 31u);
    const auto f3 = (w >> 12) & 7u;
    const auto rs1 = static_cast<std::uint8_t>((w >> 15) & 31u);
    const auto rs2 = static_cast<std::uint8_t>((w >> 20) & 31u);
    const auto f7 = w >> 25;
    const auto i_imm = sign_extend(w >> 20, 12);

    switch (opc) {
    case kOpReg: {
        Opcode op = Opcode::illegal;
        if (f7 == 0) {
            constexpr Opcode by_f3[8] = {Opcode::add, Opcode::sll, Opcode::slt, Opcode::illegal,
                                         Opcode::xor_, Opcode::srl, Opcode::or_, Opcode::and_};
            op = by_f3[f3];
        } else if (f7 == 0x20 && f3 == 0) {
            op = Opcode::sub;
        }
        if (op != Opcode::illegal)
            in = {op, rd, rs1, rs2, 0};
        break;
    }
    case kOpImm:
        if (f3 == 0)
            in = {Opcode::addi, rd, rs1, 0, i_imm};
        break;
    case kOpLui:
        in = {Opcode::lui, rd, 0, 0, static_cast<std::int32_t>(w >> 12)};
        break;
    case kOpLoad:
        if (f3 == 0 || f3 == 2)
            in = {f3 == 0 ? Opcode::lb : Opcode::lw, rd, rs1, 0, i_imm};
        break;
    case kOpStore:
        if (f3 == 0 || f3 == 2)
            in = {f3 == 0 ? Opcode::sb : Opcode::sw, 0, rs1, rs2,
                  sign_extend(((w >> 25) << 5) | ((w >> 7) & 0x1Fu), 12)};
        break;
    case kOpBranch: {
        constexpr Opcode by_f3[8] = {Opcode::beq, Opcode::bne, Opcode::illegal, Opcode::illegal,
                                     Opcode::blt, Opcode::bge, Opcode::illegal, Opcode::illegal};
        const std::uint32_t raw = (((w >> 31) & 1u) << 12) | (((w >> 7) & 1u) << 11) |
                                  (((w >> 25) & 0x3Fu) << 5) | (((w >> 8) & 0xFu) << 1);
        if (by_f3[f3] != Opcode::illegal)
            in = {by_f3[f3], 0, rs1, rs2, sign_extend(raw, 13)};
        break;
    }
    case kOpJal: {
        const std::uint32_t raw = (((w >> 31) & 1u) << 20) | (((w >> 12) & 0xFFu) << 12) |
                                  (((w >> 20) & 1u) << 11) | (((w >> 21) & 0x3FFu) << 1);
        in = {Opcode::jal, rd, 0, 0, sign_extend(raw, 21)};
        break;
    }
    case kOpJalr:
        if (f3 == 0)
            in = {Opcode::jalr, rd, rs1, 0, i_imm};
        break;
    case kOpSystem:
        if (w == kEcall)
            in = {Opcode::ecall, 0, 0, 0, 0};
        else if (w == kMret)
            in = {Opcode::mret, 0, 0, 0, 0};
        else if (w == kEbreak)
            in = {Opcode::halt, 0, 0, 0, 0};
        else if (f3 == 2 && rs1 == 0) {
            const auto csr = (w >> 20) & 0xFFFu;
            if (csr == kCsrCycle || csr == kCsrInstret)
                in = {Opcode::csrr, rd, 0, 0, static_cast<std::int32_t>(csr)};
        }
        break;
    case kOpCustom0:
        if (rd == 0 && rs2 == 0 && f7 == 0) {
            constexpr Opcode by_f3[8] = {Opcode::flushx, Opcode::dcflush_sw, Opcode::icinv_all,
                                         Opcode::tlbinv_all, Opcode::bpinv_all, Opcode::fence_flush,
                                         Opcode::illegal, Opcode::illegal};
            const Opcode op = by_f3[f3];
            if (op == Opcode::dcflush_sw)
                in = {op, 0, rs1, 0, 0};
            else if (op != Opcode::illegal && rs1 == 0)
                in = {op, 0, 0, 0, 0};
        }
        break;
    default:
        break;
    }
    return in;
}

// --- registers & disassembly ------------------------------------------------

inline constexpr std::array<std::string_view, 32> kAbiNames{
    "zero", "ra", "sp", "gp", "tp", "t0", "t1", "t2", "s0", "s1", "a0", "a1", "a2", "a3", "a4", "a5",
    "a6", "a7", "s2", "s3", "s4", "s5", "s6", "s7", "s8", "s9", "s10", "s11", "t3", "t4", "t5", "t6"};

inline std::optional<std::uint8_t> parse_register(std::string_view s)
{
    if (s.size() >= 2 && s[0] == 'x') {
        unsigned v = 0;
        for (char c : s.substr(1)) {
            if (c < '0' || c > '9')
                return std::nullopt;
            v = v * 10 + static_cast<unsigned>(c - '0');
            if (v > 31)
                return std::nullopt;
        }
        if (s.size() > 2 && s[1] == '0')
            return std::nullopt;
        return static_cast<std::uint8_t>(v);
    }
    if (s == "fp")
        return 8;
    for (std::size_t i = 0; i < kAbiNames.size(); ++i)
        if (kAbiNames[i] == s)
            return static_cast<std::uint8_t>(i);
    return std::nullopt;
}

/// Canonical text for one instruction. Branch and jal targets are printed as
/// signed byte offsets, which the assembler accepts back.
inline std::string disassemble(const Instruction& in)
{
    const auto m = mnemonic(in.op);
    switch (info(in.op).format) {
    case Format::r: return fmt::format("{} x{}, x{}, x{}", m, in.rd, in.rs1, in.rs2);
    case Format::i: return fmt::format("{} x{}, x{}, {}", m, in.rd, in.rs1, in.imm);
    case Format::load: return fmt::format("{} x{}, {}(x{})", m, in.rd, in.imm, in.rs1);
    case Format::store: return fmt::format("{} x{}, {}(x{})", m, in.rs2, in.imm, in.rs1);
    case Format::branch: return fmt::format("{} x{}, x{}, {}", m, in.rs1, in.rs2, in.imm);
    case Format::jal: return fmt::format("{} x{}, {}", m, in.rd, in.imm);
    case Format::jalr: return fmt::format("{} x{}, {}(x{})", m, in.rd, in.imm, in.rs1);
    case Format::u: return fmt::format("{} x{}, 0x{:x}", m, in.rd, static_cast<std::uint32_t>(in.imm));
    case Format::csr:
        return fmt::format("{} x{}, {}", m, in.rd, in.imm == static_cast<std::int32_t>(kCsrCycle) ? "cycle" : "instret");
    case Format::flush_rs1: return fmt::format("{} x{}", m, in.rs1);
    case Format::sys: return std::string(m);
    case Format::none: break;
    }
    return "illegal";
}

} // namespace simf
