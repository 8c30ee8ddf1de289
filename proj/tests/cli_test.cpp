#include <gtest/gtest.h>

#include <sys/wait.h>

#include <filesystem>

#include "prorobust/serialize.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;

namespace {

int cli(const std::vector<std::string>& args) {
    std::string cmd = std::string("\"") + PROROBUST_CLI_PATH + "\"";
    for (const auto& a : args) cmd += " \"" + a + "\"";
    cmd += " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

struct TempDir {
    fs::path path = fs::temp_directory_path() / ("prorobust_cli_" + std::to_string(::getpid()) + "_" +
                                                 ::testing::UnitTest::GetInstance()->current_test_info()->name());
    TempDir() { fs::remove_all(path); }
    ~TempDir() { fs::remove_all(path); }
};

const std::string kCase = testing_util::data_path("case5_a.json");

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
    TempDir t;
    EXPECT_EQ(cli({"generate-data", "--case", kCase, "--n", "0", "--run-dir", (t.path / "a").string()}), 2);
    EXPECT_EQ(cli({"generate-data", "--case", kCase, "--n", "10", "--split", "6:5", "--run-dir", (t.path / "b").string()}), 2);
    EXPECT_EQ(cli({"no-such-command"}), 2);
    EXPECT_EQ(cli({}), 2);
}

TEST(Cli, DataErrorsExitThree) {
    TempDir t;
    EXPECT_EQ(cli({"generate-data", "--case", (t.path / "missing.json").string(), "--run-dir", (t.path / "a").string()}), 3);
}

TEST(Cli, TrainAndEvaluateValidation) {
    TempDir t;
    const std::string data = (t.path / "d").string();
    ASSERT_EQ(cli({"generate-data", "--case", kCase, "--n", "40", "--split", "30:10", "--run-dir", data}), 0);
    EXPECT_EQ(cli({"train", "--case", kCase, "--data", data, "--epochs", "0", "--run-dir", (t.path / "t0").string()}), 2);
    EXPECT_EQ(cli({"train", "--case", kCase, "--data", data, "--sampling", "bogus", "--run-dir", (t.path / "t1").string()}), 2);
    EXPECT_EQ(cli({"evaluate", "--case", kCase, "--data", data, "--policy", "perc:90:10", "--run-dir", (t.path / "e0").string()}), 2);
    EXPECT_EQ(cli({"evaluate", "--case", kCase, "--data", data, "--policy", "prescriptive:" + (t.path / "nope.json").string(),
                   "--run-dir", (t.path / "e1").string()}),
              3);
    ASSERT_EQ(cli({"train", "--case", kCase, "--data", data, "--epochs", "1", "--batch", "2", "--quiet", "--run-dir",
                   (t.path / "t").string()}),
              0);
    for (const char* f : {"weights.json", "trace.jsonl", "manifest.json"}) EXPECT_TRUE(fs::exists(t.path / "t" / f)) << f;
    ASSERT_EQ(cli({"evaluate", "--case", kCase, "--data", data, "--policy", "prescriptive:" + (t.path / "t" / "weights.json").string(),
                   "--run-dir", (t.path / "e").string()}),
              0);
    const auto report = prorobust::read_json(t.path / "e" / "report.json");
    EXPECT_EQ(report.at("n"), 10);
    EXPECT_EQ(report.at("total_quartiles").size(), 3u);
}

TEST(Cli, SameSeedSameBytes) {
    TempDir t;
    for (const char* d : {"a", "b"})
        ASSERT_EQ(cli({"generate-data", "--case", kCase, "--n", "50", "--split", "40:10", "--seed", "7", "--run-dir",
                       (t.path / d).string()}),
                  0);
    EXPECT_EQ(prorobust::detail::read_file(t.path / "a" / "dataset.csv"),
              prorobust::detail::read_file(t.path / "b" / "dataset.csv"));
    const auto m = prorobust::read_json(t.path / "a" / "manifest.json");
    EXPECT_EQ(m.at("n_train"), 40);
    EXPECT_EQ(m.at("dataset_hash"), prorobust::fnv1a_hex(prorobust::detail::read_file(t.path / "a" / "dataset.csv")));
}
