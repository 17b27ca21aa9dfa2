#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>

#include <fmt/core.h>

namespace fs = std::filesystem;

namespace {

struct Cli {
    fs::path dir;

    Cli()
    {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir = fs::temp_directory_path() / fmt::format("simf_cli_{}_{}", info->name(), ::getpid());
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Cli() { fs::remove_all(dir); }

    // Runs the CLI with stdout and stderr captured to files in `dir`.
    int operator()(const std::string& args) const
    {
        const auto cmd = fmt::format("'{}' {} > '{}' 2> '{}'", SIMF_CLI, args, (dir / "stdout").string(),
                                     (dir / "stderr").string());
        const int rc = std::system(cmd.c_str());
        return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    }

    std::string read(const std::string& name) const
    {
        std::ifstream f(dir / name);
        return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
    }

    void write(const std::string& name, const std::string& text) const { std::ofstream(dir / name) << text; }
    std::string path(const std::string& name) const { return (dir / name).string(); }
};

std::string asm_file(const char* name) { return (fs::path(SIMF_ASM_DIR) / name).string(); }

} // namespace

TEST(Cli, AsmSucceedsOrReportsTheLine)
{
    Cli cli;
    EXPECT_EQ(cli(fmt::format("asm {} -o {}", asm_file("sum.s"), cli.path("sum.img"))), 0);
    EXPECT_TRUE(fs::exists(cli.path("sum.img")));
    cli.write("bad.s", ".text\n_start:\n    frob a0, a1\n");
    EXPECT_NE(cli("asm " + cli.path("bad.s")), 0);
    EXPECT_NE(cli.read("stderr").find("line 3"), std::string::npos) << cli.read("stderr");
    EXPECT_NE(cli.read("stderr").find("frob"), std::string::npos);
}

TEST(Cli, RunWritesAReportAndFlagsIllegalFlush)
{
    Cli cli;
    EXPECT_EQ(cli(fmt::format("run {} --cosim -o {}", asm_file("sum.s"), cli.dir.string())), 0);
    const auto csv = cli.read("run_report.csv");
    EXPECT_EQ(csv.rfind("context,cycles,instructions,flushes\n0,", 0), 0u) << csv;
    EXPECT_TRUE(fs::exists(cli.path("final_state.txt")));

    EXPECT_EQ(cli(fmt::format("run {} {} -o {}", asm_file("sum.s"), asm_file("fib.s"), cli.dir.string())), 0);
    EXPECT_NE(cli.read("run_report.csv").find("\n1,"), std::string::npos);

    EXPECT_NE(cli(fmt::format("run {} -o {}", asm_file("user_flush.s"), cli.dir.string())), 0);
    EXPECT_NE(cli.read("stderr").find("illegal instruction"), std::string::npos) << cli.read("stderr");
}

TEST(Cli, AttackIsDeterministicAndSized)
{
    Cli cli;
    const auto args = fmt::format("attack --samples 200 --seed 7 -o {}", cli.dir.string());
    ASSERT_EQ(cli(args), 0);
    const auto first = cli.read("heatmap.csv");
    EXPECT_EQ(std::count(first.begin(), first.end(), '\n'), 1 + 200 * 64);
    ASSERT_EQ(cli(args), 0);
    EXPECT_EQ(cli.read("heatmap.csv"), first);

    ASSERT_EQ(cli(fmt::format("attack --flush on --samples 200 -o {}", cli.dir.string())), 0);
    const auto metrics = cli.read("metrics.txt");
    const auto at = metrics.find("mutual_information_bits=");
    ASSERT_NE(at, std::string::npos);
    EXPECT_LE(std::stod(metrics.substr(at + 24)), 0.01);
}

TEST(Cli, FlushcostAndOverheadTables)
{
    Cli cli;
    ASSERT_EQ(cli(fmt::format("flushcost -o {}", cli.dir.string())), 0);
    const auto fc = cli.read("flushcost.csv");
    EXPECT_EQ(fc.rfind("mechanism,cycles,instructions\n", 0), 0u);
    EXPECT_NE(fc.find("flushx,"), std::string::npos);
    EXPECT_NE(fc.find(",1\n"), std::string::npos);

    ASSERT_EQ(cli(fmt::format("overhead --workload alu -o {}", cli.dir.string())), 0);
    const auto ov = cli.read("overhead.csv");
    EXPECT_EQ(ov.rfind("clock_hz,mechanism,flush_hz,overhead\n", 0), 0u);
    // 2 clocks x 2 mechanisms x 9 frequencies
    EXPECT_EQ(std::count(ov.begin(), ov.end(), '\n'), 1 + 36);
    EXPECT_NE(ov.find(",opt,100,"), std::string::npos);
    EXPECT_NE(ov.find(",norm,50000,"), std::string::npos);
}

TEST(Cli, ConfigLayeringAndRejection)
{
    Cli cli;
    cli.write("c.ini", "[dcache]\nnsets = 32\n[run]\nseed = 3\n");
    ASSERT_EQ(cli(fmt::format("config -c {} --set dcache.assoc=4", cli.path("c.ini"))), 0);
    const auto out = cli.read("stdout");
    EXPECT_NE(out.find("nsets = 32"), std::string::npos) << out;
    EXPECT_NE(out.find("assoc = 4"), std::string::npos);
    EXPECT_NE(out.find("seed = 3"), std::string::npos);

    cli.write("bad.ini", "[dcache]\nsize = 32\n");
    EXPECT_NE(cli(fmt::format("config -c {}", cli.path("bad.ini"))), 0);
    EXPECT_NE(cli.read("stderr").find("dcache.size"), std::string::npos);
}
