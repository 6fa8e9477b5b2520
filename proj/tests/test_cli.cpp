#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "mihash/io.hpp"

using namespace mihash;
namespace fs = std::filesystem;

namespace {

const fs::path& work_dir() {
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / "mihash_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string path(const std::string& name) { return (work_dir() / name).string(); }

struct RunResult {
    int status;
    std::string err;
};

RunResult run(const std::string& args) {
    const std::string err_file = path("stderr.txt");
    const std::string cmd = std::string(MIHASH_CLI_PATH) + " " + args + " > " + path("stdout.txt") + " 2> " + err_file;
    const int raw = std::system(cmd.c_str());
    std::ifstream in(err_file);
    std::stringstream ss;
    ss << in.rdbuf();
    return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, ss.str()};
}

std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t line_count(const std::string& text) { return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')); }

void prepare() {
    static bool done = false;
    if (done) return;
    ASSERT_EQ(run("gen-synthetic --samples 120 --dim 12 --clusters 3 --seed 1 --out " + path("db.bin") + " --labels " +
                  path("db_labels.txt")).status, 0);
    ASSERT_EQ(run("gen-synthetic --samples 30 --dim 12 --clusters 3 --seed 1 --out " + path("q.bin") + " --labels " +
                  path("q_labels.txt")).status, 0);
    io::write_text(path("cfg.txt"), "code_len = 8\nepochs = 4\nlr_decay_every = 2\nbatch_size = 16\n");
    ASSERT_EQ(run("train --features " + path("db.bin") + " --config " + path("cfg.txt") + " --out-dir " + path("run") +
                  " beta=0.001").status, 0);
    done = true;
}

}  // namespace

TEST(Cli, TrainWritesArtifacts) {
    prepare();
    EXPECT_TRUE(fs::exists(path("run/model.bin")));
    EXPECT_TRUE(fs::exists(path("run/codes.bin")));
    EXPECT_TRUE(fs::exists(path("run/checkpoint_epoch2.bin")));
    EXPECT_TRUE(fs::exists(path("run/checkpoint_epoch4.bin")));
    const std::string log = slurp(path("run/log.csv"));
    EXPECT_EQ(log.substr(0, log.find('\n')), "epoch,lr,L_m,L_sim,L_reg,distinct_codes");
    EXPECT_EQ(line_count(log), 5u);
    const TrainConfig c = io::load_config(path("run/config.txt"));
    EXPECT_EQ(c.beta, 0.001);
    EXPECT_EQ(c.code_len, 8u);
}

TEST(Cli, TrainIsDeterministic) {
    prepare();
    ASSERT_EQ(run("train --features " + path("db.bin") + " --config " + path("cfg.txt") + " --out-dir " + path("run2") +
                  " beta=0.001").status, 0);
    for (const char* f : {"model.bin", "codes.bin", "log.csv"})
        EXPECT_EQ(slurp(path(std::string("run/") + f)), slurp(path(std::string("run2/") + f))) << f;
}

TEST(Cli, EncodeQueryEval) {
    prepare();
    ASSERT_EQ(run("encode --model " + path("run/model.bin") + " --features " + path("q.bin") + " --out " + path("q_codes.bin")).status, 0);
    EXPECT_EQ(io::load_codes(path("q_codes.bin")).rows(), 30u);

    ASSERT_EQ(run("query --db " + path("run/codes.bin") + " --queries " + path("q_codes.bin") + " --k 5 --out " +
                  path("results.csv")).status, 0);
    EXPECT_EQ(line_count(slurp(path("results.csv"))), 1u + 30u * 5u);

    ASSERT_EQ(run("index --codes " + path("run/codes.bin") + " --labels " + path("db_labels.txt") + " --out " +
                  path("util.csv")).status, 0);
    EXPECT_GT(line_count(slurp(path("util.csv"))), 1u);

    ASSERT_EQ(run("eval --db " + path("run/codes.bin") + " --db-labels " + path("db_labels.txt") + " --queries " +
                  path("q_codes.bin") + " --query-labels " + path("q_labels.txt") + " --k 20 --out-dir " + path("eval")).status, 0);
    const std::string map = slurp(path("eval/map.csv"));
    EXPECT_EQ(map.substr(0, 6), "k,map\n");
    EXPECT_EQ(line_count(slurp(path("eval/pr.csv"))), 1u + 120u);
    EXPECT_TRUE(fs::exists(path("eval/utilization.csv")));
}

TEST(Cli, StatsSimulateScatter) {
    prepare();
    ASSERT_EQ(run("stats --codes " + path("run/codes.bin") + " --out " + path("stats.csv")).status, 0);
    EXPECT_EQ(line_count(slurp(path("stats.csv"))), 1u + 28u);

    ASSERT_EQ(run("simulate-convergence --steps 100 --out " + path("slack.csv")).status, 0);
    EXPECT_EQ(line_count(slurp(path("slack.csv"))), 102u);

    ASSERT_EQ(run("scatter --features " + path("db.bin") + " --code-len 8 --steps 3 --out-dir " + path("scatter")).status, 0);
    EXPECT_TRUE(fs::exists(path("scatter/frame_000.csv")));
    EXPECT_TRUE(fs::exists(path("scatter/frame_003.csv")));
    EXPECT_EQ(line_count(slurp(path("scatter/summary.csv"))), 5u);
}

TEST(Cli, ErrorsAreOneMachineReadableLine) {
    prepare();
    const auto missing = run("encode --model " + path("nope.bin") + " --features " + path("q.bin"));
    EXPECT_NE(missing.status, 0);
    EXPECT_EQ(line_count(missing.err), 1u);
    EXPECT_EQ(missing.err.rfind("error code=io_error message=", 0), 0u);

    io::write_text(path("garbage.bin"), "not a model at all");
    const auto garbage = run("encode --model " + path("garbage.bin") + " --features " + path("q.bin"));
    EXPECT_NE(garbage.status, 0);
    EXPECT_EQ(garbage.err.rfind("error code=bad_magic", 0), 0u);

    const auto unknown = run("train --features " + path("db.bin") + " --out-dir " + path("bad") + " gamma=1");
    EXPECT_NE(unknown.status, 0);
    EXPECT_EQ(unknown.err.rfind("error code=unknown_key", 0), 0u);

    const auto odd = run("scatter --features " + path("db.bin") + " --code-len 7 --out-dir " + path("odd"));
    EXPECT_EQ(odd.err.rfind("error code=odd_code_length", 0), 0u);

    const auto usage = run("no-such-command");
    EXPECT_NE(usage.status, 0);
    EXPECT_EQ(usage.err.rfind("error code=usage", 0), 0u);
    EXPECT_EQ(line_count(usage.err), 1u);
}
