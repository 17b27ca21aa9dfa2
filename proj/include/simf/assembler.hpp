#pragma once

#include <cctype>
#include <charconv>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "simf/isa.hpp"
#include "simf/program.hpp"

namespace simf {

class AssemblyError : public std::runtime_error {
public:
    AssemblyError(int line, const std::string& msg)
        : std::runtime_error(fmt::format("line {}: {}", line, msg)), line_(line)
    {
    }
    int line() const noexcept { return line_; }

private:
    int line_;
};

inline constexpr Addr kDefaultTextBase = 0x00010000;
inline constexpr Addr kDefaultDataBase = 0x00100000;

namespace detail {

inline std::string_view trim(std::string_view s)
{
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
        s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
        s.remove_suffix(1);
    return s;
}

inline bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '.'; }
inline bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '$'; }

inline std::vector<std::string> split_operands(std::string_view s)
{
    std::vector<std::string> out;
    s = trim(s);
    if (s.empty())
        return out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == ',') {
            out.emplace_back(trim(s.substr(start, i - start)));
            start = i + 1;
        }
    }
    return out;
}

class Assembler {
public:
    explicit Assembler(std::string_view src) : src_(src) {}

    Program run()
    {
        parse_lines();
        layout();
        emit();
        return finish();
    }

private:
    enum class Section { text, data };

    struct Line {
        int number = 0;
        Section section = Section::text;
        std::string op;  // lower-case mnemonic or directive
        std::vector<std::string> args;
        Addr addr = 0;   // address of the first emitted byte / instruction
        unsigned size = 0;  // instructions (text) or bytes (data)
        std::vector<std::string> labels;
    };

    // --- pass 0: tokenize -----------------------------------------------------

    void parse_lines()
    {
        int number = 0;
        std::size_t pos = 0;
        std::vector<std::string> pending_labels;
        while (pos <= src_.size()) {
            auto nl = src_.find('\n', pos);
            if (nl == std::string_view::npos)
                nl = src_.size();
            std::string_view raw = src_.substr(pos, nl - pos);
            pos = nl + 1;
            ++number;

            if (auto c = raw.find('#'); c != std::string_view::npos)
                raw = raw.substr(0, c);
            if (auto c = raw.find("//"); c != std::string_view::npos)
                raw = raw.substr(0, c);
            std::string_view body = trim(raw);

            // Leading labels.
            while (!body.empty()) {
                std::size_t i = 0;
                if (!is_ident_start(body[0]) || body[0] == '.')
                    break;
                while (i < body.size() && is_ident_char(body[i]))
                    ++i;
                if (i < body.size() && body[i] == ':') {
                    pending_labels.emplace_back(body.substr(0, i));
                    body = trim(body.substr(i + 1));
                } else {
                    break;
                }
            }
            if (body.empty()) {
                if (!pending_labels.empty()) {
                    // Labels alone on a line bind to the next emitting line.
                    lines_.push_back(Line{number, Section::text, "", {}, 0, 0, std::move(pending_labels)});
                    pending_labels.clear();
                }
                if (pos > src_.size())
                    break;
                continue;
            }
            std::size_t i = 0;
            while (i < body.size() && !std::isspace(static_cast<unsigned char>(body[i])))
                ++i;
            Line l;
            l.number = number;
            l.op.assign(body.substr(0, i));
            for (auto& ch : l.op)
                ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
            l.args = split_operands(body.substr(i));
            l.labels = std::move(pending_labels);
            pending_labels.clear();
            lines_.push_back(std::move(l));
            if (pos > src_.size())
                break;
        }
        if (!pending_labels.empty())
            lines_.push_back(Line{number, Section::text, "", {}, 0, 0, std::move(pending_labels)});
    }

    // --- expressions ----------------------------------------------------------

    [[noreturn]] void fail(int line, const std::string& msg) const { throw AssemblyError(line, msg); }

    static std::optional<std::int64_t> parse_number(std::string_view s)
    {
        bool neg = false;
        if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
            neg = s[0] == '-';
            s.remove_prefix(1);
        }
        if (s.empty())
            return std::nullopt;
        int base = 10;
        if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
            base = 16;
            s.remove_prefix(2);
        }
        std::uint64_t v = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
        if (ec != std::errc{} || p != s.data() + s.size() || v > 0xFFFFFFFFull)
            return std::nullopt;
        return neg ? -static_cast<std::int64_t>(v) : static_cast<std::int64_t>(v);
    }

    /// Evaluates `term (+|- term)*`. With allow_unresolved, unknown symbols
    /// return nullopt instead of failing (used for sizing in pass 1).
    std::optional<std::int64_t> eval(std::string_view expr, int line, bool allow_unresolved) const
    {
        expr = trim(expr);
        if (expr.empty())
            fail(line, "missing operand");
        std::int64_t total = 0;
        std::size_t i = 0;
        int sign = 1;
        bool expect_term = true;
        while (i < expr.size()) {
            char c = expr[i];
            if (std::isspace(static_cast<unsigned char>(c))) {
                ++i;
                continue;
            }
            if (expect_term) {
                if (c == '-' || c == '+') {
                    if (c == '-')
                        sign = -sign;
                    ++i;
                    continue;
                }
                std::size_t j = i;
                while (j < expr.size() && (is_ident_char(expr[j])))
                    ++j;
                if (j == i)
                    fail(line, fmt::format("bad expression '{}'", expr));
                std::string_view tok = expr.substr(i, j - i);
                std::int64_t v = 0;
                if (std::isdigit(static_cast<unsigned char>(tok[0]))) {
                    auto n = parse_number(tok);
                    if (!n)
                        fail(line, fmt::format("bad number '{}'", tok));
                    v = *n;
                } else if (auto it = constants_.find(std::string(tok)); it != constants_.end()) {
                    v = it->second;
                } else if (auto it2 = labels_.find(std::string(tok)); it2 != labels_.end()) {
                    v = it2->second;
                } else {
                    if (allow_unresolved)
                        return std::nullopt;
                    fail(line, fmt::format("unresolved symbol '{}'", tok));
                }
                total += sign * v;
                sign = 1;
                expect_term = false;
                i = j;
            } else {
                if (c == '+')
                    sign = 1;
                else if (c == '-')
                    sign = -1;
                else
                    fail(line, fmt::format("bad expression '{}'", expr));
                expect_term = true;
                ++i;
            }
        }
        if (expect_term)
            fail(line, fmt::format("bad expression '{}'", expr));
        return total;
    }

    std::int64_t value(std::string_view expr, int line) const { return *eval(expr, line, false); }

    static bool is_plain_number(std::string_view s) { return parse_number(trim(s)).has_value(); }

    std::uint8_t reg(const std::string& s, int line) const
    {
        auto r = parse_register(s);
        if (!r)
            fail(line, fmt::format("bad register '{}'", s));
        return *r;
    }

    /// Parses `imm(reg)` or `(reg)`.
    std::pair<std::int64_t, std::uint8_t> mem_operand(const std::string& s, int line) const
    {
        auto open = s.find('(');
        auto close = s.rfind(')');
        if (open == std::string::npos || close == std::string::npos || close < open)
            fail(line, fmt::format("expected offset(register), got '{}'", s));
        std::string off(trim(std::string_view(s).substr(0, open)));
        std::string r(trim(std::string_view(s).substr(open + 1, close - open - 1)));
        return {off.empty() ? 0 : value(off, line), reg(r, line)};
    }

    void expect_args(const Line& l, std::size_t n) const
    {
        if (l.args.size() != n)
            fail(l.number, fmt::format("'{}' expects {} operand(s), got {}", l.op, n, l.args.size()));
    }

    // --- pass 1: sizes and addresses -----------------------------------------

    static bool is_directive(const std::string& op) { return !op.empty() && op[0] == '.'; }

    unsigned text_size(Line& l)
    {
        const auto& op = l.op;
        if (op == "li") {
            expect_args(l, 2);
            auto v = eval(l.args[1], l.number, true);
            if (v && *v >= -2048 && *v <= 2047)
                return 1;
            return 2;
        }
        if (op == "la")
            return 2;
        if (is_pseudo(op) || opcode_from_mnemonic(op))
            return 1;
        fail(l.number, fmt::format("unknown mnemonic '{}'", op));
    }

    static bool is_pseudo(const std::string& op)
    {
        static const char* const names[] = {"nop", "mv", "li", "la", "j", "call", "ret", "jr",
                                            "beqz", "bnez", "rdcycle", "rdinstret"};
        for (auto* n : names)
            if (op == n)
                return true;
        return false;
    }

    void define_label(const std::string& name, Addr addr, int line)
    {
        if (constants_.count(name) || !labels_.emplace(name, addr).second)
            fail(line, fmt::format("duplicate symbol '{}'", name));
    }

    void layout()
    {
        Section sec = Section::text;
        Addr text_count = 0, data_count = 0;
        text_base_ = kDefaultTextBase;
        data_base_ = kDefaultDataBase;
        auto here = [&]() -> Addr {
            return sec == Section::text ? text_base_ + 4 * text_count : data_base_ + data_count;
        };

        for (auto& l : lines_) {
            l.section = sec;
            const bool switches = l.op == ".text" || l.op == ".data";
            if (!switches) {
                l.addr = here();
                for (const auto& name : l.labels)
                    define_label(name, l.addr, l.number);
            }
            if (l.op.empty())
                continue;
            if (l.op == ".text" || l.op == ".data") {
                const bool to_text = l.op == ".text";
                if (!l.args.empty()) {
                    auto base = static_cast<Addr>(value(l.args.at(0), l.number));
                    if (to_text) {
                        if (text_count != 0 && base != text_base_)
                            fail(l.number, ".text base set after text was emitted");
                        if (base % 4)
                            fail(l.number, ".text base must be word aligned");
                        text_base_ = base;
                    } else {
                        if (data_count != 0 && base != data_base_)
                            fail(l.number, ".data base set after data was emitted");
                        data_base_ = base;
                    }
                }
                sec = to_text ? Section::text : Section::data;
                l.section = sec;
                l.addr = here();
                for (const auto& name : l.labels)
                    define_label(name, l.addr, l.number);
                continue;
            }
            if (l.op == ".equ" || l.op == ".set") {
                expect_args(l, 2);
                const auto& name = l.args[0];
                if (labels_.count(name))
                    fail(l.number, fmt::format("duplicate symbol '{}'", name));
                constants_[name] = value(l.args[1], l.number);
                continue;
            }
            if (l.op == ".globl" || l.op == ".global" || l.op == ".entry" || l.op == ".mode" ||
                l.op == ".trapvec")
                continue;
            if (l.op == ".align" || l.op == ".balign") {
                expect_args(l, 1);
                auto n = value(l.args[0], l.number);
                std::int64_t bytes = l.op == ".align" ? (n >= 0 && n < 31 ? (std::int64_t{1} << n) : -1) : n;
                if (bytes <= 0 || !is_pow2(static_cast<std::uint64_t>(bytes)))
                    fail(l.number, "alignment must be a power of two");
                const Addr a = here();
                const Addr aligned = (a + static_cast<Addr>(bytes) - 1) & ~(static_cast<Addr>(bytes) - 1);
                if (sec == Section::text) {
                    if (bytes < 4)
                        bytes = 4;
                    l.size = (aligned - a) / 4;
                    text_count += l.size;
                } else {
                    l.size = aligned - a;
                    data_count += l.size;
                }
                continue;
            }
            if (is_directive(l.op)) {
                if (sec != Section::data)
                    fail(l.number, fmt::format("data directive '{}' outside .data", l.op));
                unsigned size = 0;
                if (l.op == ".word")
                    size = 4 * static_cast<unsigned>(l.args.size());
                else if (l.op == ".half")
                    size = 2 * static_cast<unsigned>(l.args.size());
                else if (l.op == ".byte")
                    size = static_cast<unsigned>(l.args.size());
                else if (l.op == ".space" || l.op == ".zero") {
                    if (l.args.empty() || l.args.size() > 2)
                        fail(l.number, fmt::format("'{}' expects a size and an optional fill", l.op));
                    auto n = value(l.args[0], l.number);
                    if (n < 0 || n > static_cast<std::int64_t>(kVirtualLimit))
                        fail(l.number, "bad .space size");
                    size = static_cast<unsigned>(n);
                } else {
                    fail(l.number, fmt::format("unknown directive '{}'", l.op));
                }
                if ((l.op == ".word" || l.op == ".half" || l.op == ".byte") && l.args.empty())
                    fail(l.number, fmt::format("'{}' needs at least one value", l.op));
                l.size = size;
                data_count += size;
                continue;
            }
            if (sec != Section::text)
                fail(l.number, fmt::format("instruction '{}' outside .text", l.op));
            l.size = text_size(l);
            text_count += l.size;
        }
        text_count_ = text_count;
        data_count_ = data_count;
    }

    // --- pass 2: encoding -----------------------------------------------------

    std::int32_t check_imm(std::int64_t v, std::int64_t lo, std::int64_t hi, int line, std::string_view what) const
    {
        if (v < lo || v > hi)
            fail(line, fmt::format("immediate out of range for {}: {} (allowed {}..{})", what, v, lo, hi));
        return static_cast<std::int32_t>(v);
    }

    std::int32_t i_imm(std::int64_t v, int line) const { return check_imm(v, -2048, 2047, line, "12-bit immediate"); }

    std::int32_t branch_target(const std::string& arg, Addr pc, int line, bool is_jal) const
    {
        std::int64_t off = is_plain_number(arg) ? *parse_number(trim(arg)) : value(arg, line) - static_cast<std::int64_t>(pc);
        if (off % 2 != 0)
            fail(line, fmt::format("branch offset {} is not 2-byte aligned", off));
        if (is_jal)
            return check_imm(off, -(1 << 20), (1 << 20) - 2, line, "jal offset");
        return check_imm(off, -4096, 4094, line, "branch offset");
    }

    void push(Instruction in) { text_.push_back(in); }

    void emit_li(std::uint8_t rd, std::int64_t v, unsigned size, int line)
    {
        if (v < -2147483648LL || v > 0xFFFFFFFFLL)
            fail(line, fmt::format("immediate out of range for li: {}", v));
        const auto u = static_cast<std::uint32_t>(v);
        if (size == 1) {
            push({Opcode::addi, rd, 0, 0, i_imm(static_cast<std::int32_t>(u), line)});
            return;
        }
        const std::uint32_t hi = ((u + 0x800u) >> 12) & 0xFFFFFu;
        const std::int32_t lo = sign_extend(u & 0xFFFu, 12);
        push({Opcode::lui, rd, 0, 0, static_cast<std::int32_t>(hi)});
        push({Opcode::addi, rd, rd, 0, lo});
    }

    void emit_instruction(const Line& l)
    {
        const int n = l.number;
        const auto& op = l.op;
        const auto& a = l.args;
        const Addr pc = l.addr;

        if (op == "nop") {
            expect_args(l, 0);
            return push({Opcode::addi, 0, 0, 0, 0});
        }
        if (op == "mv") {
            expect_args(l, 2);
            return push({Opcode::addi, reg(a[0], n), reg(a[1], n), 0, 0});
        }
        if (op == "li") {
            expect_args(l, 2);
            return emit_li(reg(a[0], n), value(a[1], n), l.size, n);
        }
        if (op == "la") {
            expect_args(l, 2);
            return emit_li(reg(a[0], n), value(a[1], n), 2, n);
        }
        if (op == "j") {
            expect_args(l, 1);
            return push({Opcode::jal, 0, 0, 0, branch_target(a[0], pc, n, true)});
        }
        if (op == "call") {
            expect_args(l, 1);
            return push({Opcode::jal, 1, 0, 0, branch_target(a[0], pc, n, true)});
        }
        if (op == "ret") {
            expect_args(l, 0);
            return push({Opcode::jalr, 0, 1, 0, 0});
        }
        if (op == "jr") {
            expect_args(l, 1);
            return push({Opcode::jalr, 0, reg(a[0], n), 0, 0});
        }
        if (op == "beqz" || op == "bnez") {
            expect_args(l, 2);
            return push({op == "beqz" ? Opcode::beq : Opcode::bne, 0, reg(a[0], n), 0,
                         branch_target(a[1], pc, n, false)});
        }
        if (op == "rdcycle" || op == "rdinstret") {
            expect_args(l, 1);
            return push({Opcode::csrr, reg(a[0], n), 0, 0,
                         static_cast<std::int32_t>(op == "rdcycle" ? kCsrCycle : kCsrInstret)});
        }

        const Opcode opc = *opcode_from_mnemonic(op);
        switch (info(opc).format) {
        case Format::r:
            expect_args(l, 3);
            return push({opc, reg(a[0], n), reg(a[1], n), reg(a[2], n), 0});
        case Format::i:
            expect_args(l, 3);
            return push({opc, reg(a[0], n), reg(a[1], n), 0, i_imm(value(a[2], n), n)});
        case Format::load: {
            expect_args(l, 2);
            auto [off, base] = mem_operand(a[1], n);
            return push({opc, reg(a[0], n), base, 0, i_imm(off, n)});
        }
        case Format::store: {
            expect_args(l, 2);
            auto [off, base] = mem_operand(a[1], n);
            return push({opc, 0, base, reg(a[0], n), i_imm(off, n)});
        }
        case Format::branch:
            expect_args(l, 3);
            return push({opc, 0, reg(a[0], n), reg(a[1], n), branch_target(a[2], pc, n, false)});
        case Format::jal:
            if (a.size() == 1)
                return push({opc, 1, 0, 0, branch_target(a[0], pc, n, true)});
            expect_args(l, 2);
            return push({opc, reg(a[0], n), 0, 0, branch_target(a[1], pc, n, true)});
        case Format::jalr:
            if (a.size() == 1)
                return push({opc, 1, reg(a[0], n), 0, 0});
            if (a.size() == 3)
                return push({opc, reg(a[0], n), reg(a[1], n), 0, i_imm(value(a[2], n), n)});
            expect_args(l, 2);
            {
                auto [off, base] = mem_operand(a[1], n);
                return push({opc, reg(a[0], n), base, 0, i_imm(off, n)});
            }
        case Format::u:
            expect_args(l, 2);
            return push({opc, reg(a[0], n), 0, 0, check_imm(value(a[1], n), 0, 0xFFFFF, n, "lui")});
        case Format::csr: {
            expect_args(l, 2);
            std::int64_t csr = 0;
            if (a[1] == "cycle")
                csr = kCsrCycle;
            else if (a[1] == "instret")
                csr = kCsrInstret;
            else
                csr = value(a[1], n);
            if (csr != kCsrCycle && csr != kCsrInstret)
                fail(n, fmt::format("unsupported CSR '{}'", a[1]));
            return push({opc, reg(a[0], n), 0, 0, static_cast<std::int32_t>(csr)});
        }
        case Format::flush_rs1:
            expect_args(l, 1);
            return push({opc, 0, reg(a[0], n), 0, 0});
        case Format::sys:
            expect_args(l, 0);
            return push({opc, 0, 0, 0, 0});
        case Format::none:
            break;
        }
        fail(n, fmt::format("unknown mnemonic '{}'", op));
    }

    void emit_data(const Line& l)
    {
        const int n = l.number;
        auto put = [&](std::int64_t v, unsigned bytes) {
            const std::int64_t lo = -(std::int64_t{1} << (8 * bytes - 1));
            const std::int64_t hi = (std::int64_t{1} << (8 * bytes)) - 1;
            if (v < lo || v > hi)
                fail(n, fmt::format("value {} does not fit in {} byte(s)", v, bytes));
            for (unsigned i = 0; i < bytes; ++i)
                data_.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(v) >> (8 * i)));
        };
        if (l.op == ".word")
            for (auto& a : l.args)
                put(value(a, n), 4);
        else if (l.op == ".half")
            for (auto& a : l.args)
                put(value(a, n), 2);
        else if (l.op == ".byte")
            for (auto& a : l.args)
                put(value(a, n), 1);
        else if (l.op == ".space" || l.op == ".zero") {
            std::int64_t fill = l.args.size() == 2 ? value(l.args[1], n) : 0;
            if (fill < -128 || fill > 255)
                fail(n, "fill value does not fit in a byte");
            data_.insert(data_.end(), l.size, static_cast<std::uint8_t>(fill));
        }
    }

    void emit()
    {
        for (const auto& l : lines_) {
            if (l.op.empty() || l.op == ".text" || l.op == ".data" || l.op == ".equ" || l.op == ".set" ||
                l.op == ".globl" || l.op == ".global")
                continue;
            if (l.op == ".entry" || l.op == ".trapvec") {
                expect_args(l, 1);
                auto v = static_cast<Addr>(value(l.args[0], l.number));
                (l.op == ".entry" ? entry_ : trap_vector_) = v;
                continue;
            }
            if (l.op == ".mode") {
                expect_args(l, 1);
                if (l.args[0] == "user")
                    mode_ = Mode::user;
                else if (l.args[0] == "machine")
                    mode_ = Mode::machine;
                else
                    fail(l.number, fmt::format("unknown mode '{}'", l.args[0]));
                continue;
            }
            if (l.op == ".align" || l.op == ".balign") {
                if (l.section == Section::text)
                    for (unsigned i = 0; i < l.size; ++i)
                        push({Opcode::addi, 0, 0, 0, 0});
                else
                    data_.insert(data_.end(), l.size, 0);
                continue;
            }
            if (is_directive(l.op)) {
                emit_data(l);
                continue;
            }
            const auto before = text_.size();
            emit_instruction(l);
            if (text_.size() - before != l.size)
                fail(l.number, "internal error: instruction size changed between passes");
        }
    }

    Program finish()
    {
        Program p;
        p.text_base = text_base_;
        p.text = std::move(text_);
        p.data_base = data_base_;
        p.data = std::move(data_);
        p.start_mode = mode_;
        p.trap_vector = trap_vector_.value_or(0);
        if (entry_)
            p.entry = *entry_;
        else if (auto it = labels_.find("_start"); it != labels_.end())
            p.entry = it->second;
        else
            p.entry = text_base_;
        for (const auto& [name, addr] : labels_)
            p.symbols.emplace(name, addr);
        try {
            p.pages = layout_pages(p);
        } catch (const ConfigError& e) {
            fail(0, e.what());
        }
        return p;
    }

    std::string_view src_;
    std::vector<Line> lines_;
    std::map<std::string, std::int64_t> constants_;
    std::map<std::string, Addr> labels_;
    Addr text_base_ = kDefaultTextBase;
    Addr data_base_ = kDefaultDataBase;
    Addr text_count_ = 0;
    Addr data_count_ = 0;
    std::vector<Instruction> text_;
    std::vector<std::uint8_t> data_;
    std::optional<Addr> entry_;
    std::optional<Addr> trap_vector_;
    Mode mode_ = Mode::machine;
};

} // namespace detail

/// Assembles line-based source into a Program. Throws AssemblyError with the
/// offending line number.
inline Program assemble(std::string_view source) { return detail::Assembler(source).run(); }

/// Renders a Program as canonical assembly that assembles back to an equal
/// Program (labels, segment bases, entry, mode and trap vector included).
inline std::string disassemble(const Program& p)
{
    std::multimap<Addr, std::string> by_addr;
    for (const auto& [name, addr] : p.symbols)
        by_addr.emplace(addr, name);

    std::string out;
    out += fmt::format(".mode {}\n", to_string(p.start_mode));
    out += fmt::format(".entry 0x{:x}\n", p.entry);
    if (p.trap_vector != 0)
        out += fmt::format(".trapvec 0x{:x}\n", p.trap_vector);

    auto labels_at = [&](Addr a) {
        auto [lo, hi] = by_addr.equal_range(a);
        for (auto it = lo; it != hi; ++it)
            out += it->second + ":\n";
    };

    out += fmt::format(".text 0x{:x}\n", p.text_base);
    for (std::size_t i = 0; i < p.text.size(); ++i) {
        labels_at(p.text_base + static_cast<Addr>(4 * i));
        out += "    " + disassemble(p.text[i]) + "\n";
    }
    labels_at(p.text_end());

    if (!p.data.empty() || by_addr.count(p.data_base)) {
        out += fmt::format(".data 0x{:x}\n", p.data_base);
        std::size_t i = 0;
        while (i < p.data.size()) {
            labels_at(p.data_base + static_cast<Addr>(i));
            // Break runs at the next label so it lands on its own line.
            auto next_label = by_addr.upper_bound(p.data_base + static_cast<Addr>(i));
            std::size_t limit = p.data.size();
            if (next_label != by_addr.end() && next_label->first < p.data_end())
                limit = next_label->first - p.data_base;
            std::size_t run = std::min<std::size_t>(16, limit - i);
            out += "    .byte ";
            for (std::size_t k = 0; k < run; ++k)
                out += fmt::format("{}{}", k ? ", " : "", p.data[i + k]);
            out += "\n";
            i += run;
        }
        if (!p.data.empty())
            labels_at(p.data_end());
    }
    return out;
}

} // namespace simf
