#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "fedgram/config.hpp"
#include "fedgram/report.hpp"

using namespace fedgram;
namespace fs = std::filesystem;

namespace {

bool mentions(const std::vector<std::string>& violations, const std::string& needle) {
    for (const auto& v : violations) {
        if (v.find(needle) != std::string::npos) {
            return true;
        }
    }
    return false;
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("fedgram_cfg_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path write_file(const fs::path& path, const std::string& body) {
    std::ofstream(path) << body;
    return path;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

int cli(const std::string& args) {
    const std::string cmd = std::string(FEDGRAM_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::size_t count_lines(const std::string& text) {
    std::size_t n = 0;
    for (char c : text) {
        n += c == '\n' ? 1 : 0;
    }
    return n;
}

// A few quick rounds on a small population.
const char* kTiny = R"({
  "num_clients": 10, "rounds": 2,
  "local": {"steps": 2},
  "data": {"samples_per_class": 30},
  "partition": {"min_samples_per_client": 2},
  "attack": {"kind": "lie"}
})";

}  // namespace

TEST(Config, EmptyObjectGivesDefaults) {
    const auto p = parse_config(Json::object());
    EXPECT_TRUE(p.ok());
    const ExperimentConfig d;
    EXPECT_EQ(p.config.num_clients, d.num_clients);
    EXPECT_EQ(p.config.rounds, 150u);
    EXPECT_EQ(p.config.defense.kind, DefenseKind::fedgram);
    EXPECT_EQ(p.config.arch.input_dim, 20u);
    EXPECT_EQ(p.config.arch.num_classes, 10u);
    EXPECT_FALSE(p.config.arch.embedding_rectified);
}

TEST(Config, EmptyFileParses) {
    const auto dir = scratch("empty");
    const auto path = write_file(dir / "empty.json", "  \n");
    EXPECT_TRUE(load_config(path.string()).ok());
    EXPECT_THROW(load_config((dir / "missing.json").string()), Error);
    const auto bad = write_file(dir / "bad.json", "{ not json");
    EXPECT_THROW(load_config(bad.string()), Error);
}

TEST(Config, OverridesApply) {
    const auto p = parse_config(Json::parse(R"({
        "seed": 9, "arch": {"hidden_dims": [8, 4], "embedding_rectified": true},
        "data": {"num_classes": 4, "feature_dim": 6},
        "defense": {"kind": "fedgram_trim", "C": 0.4},
        "attack": {"kind": "minsum", "minsum_bound": "pairwise_max"}})"));
    ASSERT_TRUE(p.ok()) << p.violations.front();
    EXPECT_EQ(p.config.seed, 9u);
    EXPECT_EQ(p.config.arch.hidden_dims, (std::vector<std::size_t>{8, 4}));
    EXPECT_TRUE(p.config.arch.embedding_rectified);
    EXPECT_EQ(p.config.arch.num_classes, 4u);
    EXPECT_EQ(p.config.arch.input_dim, 6u);
    EXPECT_EQ(p.config.defense.then, PostFilter::trimmed_mean);
    EXPECT_EQ(p.config.defense.filter_fraction, 0.4);
    EXPECT_EQ(p.config.attack.minsum_bound, MinSumBound::pairwise_max);
}

TEST(Config, MaliciousFractionViolation) {
    const auto p = parse_config(Json::parse(R"({"malicious_fraction": 0.6})"));
    EXPECT_TRUE(mentions(p.violations, "malicious_fraction < 0.5"));
}

TEST(Config, UnknownAttackNamesTheField) {
    const auto p = parse_config(Json::parse(R"({"attack": {"kind": "teleport"}})"));
    ASSERT_FALSE(p.ok());
    EXPECT_TRUE(mentions(p.violations, "attack.kind"));
    EXPECT_TRUE(mentions(p.violations, "teleport"));
}

TEST(Config, SchemaErrorsAreAllReported) {
    const auto p = parse_config(Json::parse(R"({
        "bogus": 1, "rounds": -3, "local": {"lr": "fast"},
        "arch": {"embedding_rectified": 1}, "defense": {"C": 1.5}})"));
    EXPECT_TRUE(mentions(p.violations, "bogus: unknown key"));
    EXPECT_TRUE(mentions(p.violations, "rounds: expected a non-negative integer"));
    EXPECT_TRUE(mentions(p.violations, "local.lr: expected a number"));
    EXPECT_TRUE(mentions(p.violations, "arch.embedding_rectified: expected a boolean"));
    EXPECT_TRUE(mentions(p.violations, "defense.C in (0, 1)"));
}

TEST(Config, ResolvedConfigRoundTrips) {
    auto p = parse_config(Json::parse(R"({"defense": {"kind": "krum", "f": 2}, "partition": {"beta": 0.2}})"));
    ASSERT_TRUE(p.ok());
    const auto j = to_json(p.config);
    const auto again = parse_config(j);
    ASSERT_TRUE(again.ok()) << again.violations.front();
    EXPECT_EQ(to_json(again.config).dump(), j.dump());
}

TEST(Cli, ValidateExitCodes) {
    const auto dir = scratch("validate");
    EXPECT_EQ(cli("validate " + write_file(dir / "ok.json", "{}").string()), 0);
    EXPECT_EQ(cli("validate " + write_file(dir / "bad.json", R"({"malicious_fraction": 0.6})").string()), 2);
    EXPECT_EQ(cli("validate " + (dir / "missing.json").string()), 2);
    EXPECT_EQ(cli("frobnicate"), 2);
}

TEST(Cli, RunWritesOneRowPerRoundAndIsByteStable) {
    const auto dir = scratch("run");
    const auto cfg = write_file(dir / "tiny.json", R"({"num_clients": 10, "rounds": 1, "local": {"steps": 2},
        "data": {"samples_per_class": 30}, "partition": {"min_samples_per_client": 2}})");
    ASSERT_EQ(cli("run " + cfg.string() + " --out " + (dir / "a").string()), 0);
    const auto csv = slurp(dir / "a" / "metrics.csv");
    EXPECT_EQ(count_lines(csv), 2u);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), kCsvHeader);

    const auto tiny = write_file(dir / "tiny2.json", kTiny);
    ASSERT_EQ(cli("run " + tiny.string() + " --out " + (dir / "b").string()), 0);
    ASSERT_EQ(cli("run " + tiny.string() + " --out " + (dir / "c").string()), 0);
    EXPECT_EQ(slurp(dir / "b" / "metrics.csv"), slurp(dir / "c" / "metrics.csv"));
    EXPECT_EQ(slurp(dir / "b" / "summary.json"), slurp(dir / "c" / "summary.json"));

    ASSERT_EQ(cli("run " + tiny.string() + " --out " + (dir / "d").string() + " --seed 77"), 0);
    EXPECT_NE(slurp(dir / "b" / "metrics.csv"), slurp(dir / "d" / "metrics.csv"));
}

TEST(Cli, ManifestRecordsResolvedConfig) {
    const auto dir = scratch("manifest");
    const auto tiny = write_file(dir / "tiny.json", kTiny);
    ASSERT_EQ(cli("run " + tiny.string() + " --out " + (dir / "a").string() + " --seed 5"), 0);
    const auto m = Json::parse(slurp(dir / "a" / "manifest.json"));
    EXPECT_EQ(m.at("seed"), 5);
    EXPECT_EQ(m.at("config").at("seed"), 5);
    EXPECT_EQ(m.at("artifact_version"), kVersion);
    EXPECT_FALSE(m.at("started_at").get<std::string>().empty());
    EXPECT_FALSE(m.at("finished_at").is_null());
    EXPECT_EQ(m.at("config_hash").get<std::string>(), hex64(fnv1a64(m.at("config").dump())));
}

TEST(Cli, BetaSweepWritesRunDirsAndSummary) {
    const auto dir = scratch("sweep");
    const auto tiny = write_file(dir / "tiny.json", kTiny);
    const auto out = dir / "out";
    ASSERT_EQ(cli("sweep " + tiny.string() + " --axis beta --values 10,1,0.2 --out " + out.string()), 0);
    std::size_t runs = 0;
    for (const auto& e : fs::directory_iterator(out)) {
        runs += e.is_directory() ? 1 : 0;
    }
    EXPECT_EQ(runs, 3u);
    for (const char* v : {"beta=10", "beta=1", "beta=0.2"}) {
        EXPECT_TRUE(fs::exists(out / v / "metrics.csv")) << v;
    }
    const auto summary = slurp(out / "sweep_summary.csv");
    EXPECT_EQ(count_lines(summary), 4u);
    EXPECT_EQ(summary.rfind("beta,best_acc", 0), 0u);
}

TEST(Cli, SingleValueSweepMatchesRun) {
    const auto dir = scratch("single");
    const auto tiny = write_file(dir / "tiny.json", kTiny);
    ASSERT_EQ(cli("sweep " + tiny.string() + " --axis C --values 0.3 --out " + (dir / "s").string()), 0);
    ASSERT_EQ(cli("run " + tiny.string() + " --out " + (dir / "r").string()), 0);
    EXPECT_EQ(slurp(dir / "s" / "C=0.3" / "metrics.csv"), slurp(dir / "r" / "metrics.csv"));
    EXPECT_TRUE(fs::exists(dir / "s" / "sweep_summary.csv"));
}

TEST(Cli, SweepUsageErrors) {
    const auto dir = scratch("sweep_err");
    const auto tiny = write_file(dir / "tiny.json", kTiny);
    EXPECT_EQ(cli("sweep " + tiny.string() + " --axis beta --values '' --out " + (dir / "o").string()), 2);
    EXPECT_EQ(cli("sweep " + tiny.string() + " --axis warp --values 1 --out " + (dir / "o").string()), 2);
    EXPECT_EQ(cli("sweep " + tiny.string() + " --axis beta --values abc --out " + (dir / "o").string()), 2);
}
