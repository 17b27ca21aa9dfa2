#include <gtest/gtest.h>

#include <random>

#include "random_program.hpp"
#include "simf/assembler.hpp"

using namespace simf;

namespace {

// A random, well-formed instruction of the given opcode.
Instruction random_instruction(Opcode op, std::mt19937& rng)
{
    auto r = [&] { return static_cast<std::uint8_t>(rng() % 32); };
    auto range = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    Instruction in{op, 0, 0, 0, 0};
    switch (info(op).format) {
    case Format::r: in.rd = r(); in.rs1 = r(); in.rs2 = r(); break;
    case Format::i:
    case Format::load:
    case Format::jalr: in.rd = r(); in.rs1 = r(); in.imm = range(-2048, 2047); break;
    case Format::store: in.rs1 = r(); in.rs2 = r(); in.imm = range(-2048, 2047); break;
    case Format::branch: in.rs1 = r(); in.rs2 = r(); in.imm = range(-2048, 2047) * 2; break;
    case Format::jal: in.rd = r(); in.imm = range(-(1 << 19), (1 << 19) - 1) * 2; break;
    case Format::u: in.rd = r(); in.imm = range(0, 0xFFFFF); break;
    case Format::csr: in.rd = r(); in.imm = rng() % 2 ? kCsrCycle : kCsrInstret; break;
    case Format::flush_rs1: in.rs1 = r(); break;
    case Format::sys:
    case Format::none: break;
    }
    return in;
}

} // namespace

TEST(Encoding, RoundTripsEveryOpcode)
{
    std::mt19937 rng(7);
    for (int k = 1; k < kNumOpcodes; ++k) {
        const auto op = static_cast<Opcode>(k);
        for (int n = 0; n < 200; ++n) {
            const auto in = random_instruction(op, rng);
            EXPECT_EQ(decode(encode(in)), in) << disassemble(in);
        }
    }
}

TEST(Encoding, StandardInstructionsUseBaseEncodings)
{
    // addi a0, zero, 1 / add a0, a1, a2 / lw a0, 8(sp) / jal ra, 0
    EXPECT_EQ(encode({Opcode::addi, 10, 0, 0, 1}), 0x00100513u);
    EXPECT_EQ(encode({Opcode::add, 10, 11, 12, 0}), 0x00c58533u);
    EXPECT_EQ(encode({Opcode::lw, 10, 2, 0, 8}), 0x00812503u);
    EXPECT_EQ(encode({Opcode::jal, 1, 0, 0, 0}), 0x000000efu);
    EXPECT_EQ(encode({Opcode::ecall, 0, 0, 0, 0}), 0x00000073u);
    EXPECT_EQ(encode({Opcode::mret, 0, 0, 0, 0}), 0x30200073u);
}

TEST(Encoding, UnknownWordsDecodeAsIllegal)
{
    EXPECT_EQ(decode(0).op, Opcode::illegal);
    EXPECT_EQ(decode(0xFFFFFFFFu).op, Opcode::illegal);
}

TEST(Encoding, MnemonicTableIsConsistent)
{
    for (int k = 1; k < kNumOpcodes; ++k) {
        const auto op = static_cast<Opcode>(k);
        ASSERT_TRUE(opcode_from_mnemonic(mnemonic(op)).has_value());
        EXPECT_EQ(*opcode_from_mnemonic(mnemonic(op)), op);
    }
    EXPECT_FALSE(opcode_from_mnemonic("frob"));
}

TEST(Encoding, RegisterNames)
{
    EXPECT_EQ(parse_register("zero"), 0);
    EXPECT_EQ(parse_register("ra"), 1);
    EXPECT_EQ(parse_register("fp"), 8);
    EXPECT_EQ(parse_register("s0"), 8);
    EXPECT_EQ(parse_register("a7"), 17);
    EXPECT_EQ(parse_register("t6"), 31);
    EXPECT_EQ(parse_register("x31"), 31);
    EXPECT_FALSE(parse_register("x32"));
    EXPECT_FALSE(parse_register("q1"));
}

TEST(Assembler, LabelsDirectivesAndPseudos)
{
    const auto p = assemble(R"(
.equ COUNT, 3
.text
_start:
    li t0, COUNT        # one instruction
    li t1, 0x12345678   // two instructions
    la a0, table
    call fn
    j done
fn:
    ret
done:
    halt
.data
table: .word 1, 2, 0xdeadbeef
bytes: .byte 1, 2
.align 2
half: .half 0x1234
.space 6
)");
    EXPECT_EQ(p.text_base, kDefaultTextBase);
    EXPECT_EQ(p.entry, p.symbol("_start"));
    EXPECT_EQ(p.text[0], (Instruction{Opcode::addi, 5, 0, 0, 3}));
    EXPECT_EQ(p.text[1].op, Opcode::lui);
    EXPECT_EQ(p.text[2].op, Opcode::addi);
    EXPECT_EQ(p.symbol("table"), kDefaultDataBase);
    EXPECT_EQ(p.symbol("bytes"), kDefaultDataBase + 12);
    EXPECT_EQ(p.symbol("half"), kDefaultDataBase + 16);
    EXPECT_EQ(p.data.size(), 24u);
    EXPECT_EQ(p.data[8], 0xef);
    EXPECT_EQ(p.data[11], 0xde);
    EXPECT_EQ(p.data[16], 0x34);
    // call fn is a jal ra with a pc-relative offset
    const auto call = p.text[5];
    EXPECT_EQ(call.op, Opcode::jal);
    EXPECT_EQ(call.rd, 1);
    EXPECT_EQ(p.text_base + 5 * 4 + call.imm, p.symbol("fn"));
}

TEST(Assembler, ReportsLineNumbers)
{
    auto line_of = [](const char* src) {
        try {
            assemble(src);
        } catch (const AssemblyError& e) {
            return e.line();
        }
        return -1;
    };
    EXPECT_EQ(line_of(".text\n_start:\n  frob a0\n"), 3);
    EXPECT_EQ(line_of(".text\n  addi a0, a0, 5000\n"), 2);
    EXPECT_EQ(line_of(".text\n  beq a0, a1, nowhere\n"), 2);
    EXPECT_EQ(line_of(".text\nx:\nx:\n  halt\n"), 3);
    EXPECT_EQ(line_of(".text\n  add a0, a1\n"), 2);
    EXPECT_EQ(line_of(".text\n  lw a0, 4(q9)\n"), 2);
    EXPECT_EQ(line_of(".text\n  csrr a0, mstatus\n"), 2);
}

TEST(Assembler, ModeAndTrapVector)
{
    const auto p = assemble(".mode user\n.trapvec h\n.text\n_start:\n ecall\n halt\nh:\n mret\n");
    EXPECT_EQ(p.start_mode, Mode::user);
    EXPECT_EQ(p.trap_vector, p.symbol("h"));
}

TEST(Image, SerializeRoundTrip)
{
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto p = assemble(gen::random_program(seed));
        const auto bytes = serialize(p);
        ASSERT_TRUE(looks_like_image(bytes));
        const auto q = deserialize(bytes);
        EXPECT_EQ(q.text, p.text);
        EXPECT_EQ(q.data, p.data);
        EXPECT_EQ(q.entry, p.entry);
        EXPECT_EQ(q.start_mode, p.start_mode);
        EXPECT_EQ(q.trap_vector, p.trap_vector);
        EXPECT_EQ(q.pages, layout_pages(p));
    }
}

TEST(Image, RejectsTruncatedInput)
{
    const auto bytes = serialize(assemble(".text\n_start:\n halt\n"));
    for (std::size_t n : {std::size_t{0}, std::size_t{8}, bytes.size() - 1})
        EXPECT_ANY_THROW(deserialize(std::span(bytes).first(n)));
}

TEST(Disassembler, ReassemblesToTheSameImage)
{
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        gen::GenOptions o;
        o.flushx = seed % 2;
        const auto p = assemble(gen::random_program(seed, o));
        const auto listing = disassemble(p);
        const auto q = assemble(listing);
        EXPECT_EQ(serialize(q), serialize(p)) << "seed " << seed;
    }
}
