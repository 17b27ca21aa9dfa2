#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>

#include "simf/assembler.hpp"
#include "simf/cosim.hpp"

using namespace simf;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> read_bytes(const fs::path& p)
{
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::string read_text(const fs::path& p)
{
    std::ifstream f(p);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::vector<fs::path> sources()
{
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(SIMF_ASM_DIR))
        if (e.path().extension() == ".s")
            out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace

TEST(Golden, CorpusAssemblesToStoredImages)
{
    const auto srcs = sources();
    ASSERT_GE(srcs.size(), 5u);
    for (const auto& s : srcs) {
        auto img = s;
        img.replace_extension(".img");
        ASSERT_TRUE(fs::exists(img)) << img;
        EXPECT_EQ(serialize(assemble(read_text(s))), read_bytes(img)) << s;
    }
}

TEST(Golden, CorpusRunsAndAgreesWithTheReference)
{
    for (const auto& s : sources()) {
        const auto p = assemble(read_text(s));
        if (s.stem() == "user_flush") {
            EXPECT_THROW(cosimulate({}, p), MachineFault);
            continue;
        }
        const auto r = cosimulate({}, p);
        EXPECT_TRUE(r.ok()) << s;
    }
}

TEST(Golden, SamplesComputeWhatTheyClaim)
{
    const auto sum = cosimulate({}, assemble(read_text(fs::path(SIMF_ASM_DIR) / "sum.s")));
    EXPECT_EQ(sum.timed.regs[10], 5050u);
    const auto fib = cosimulate({}, assemble(read_text(fs::path(SIMF_ASM_DIR) / "fib.s")));
    EXPECT_EQ(fib.timed.regs[10], 46368u); // F(24)
    const auto sc = cosimulate({}, assemble(read_text(fs::path(SIMF_ASM_DIR) / "syscall_flush.s")));
    EXPECT_EQ(sc.timed.regs[11], 4u); // one handler entry per ecall
}
