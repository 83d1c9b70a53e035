#include <cstdlib>
#include <filesystem>
#include <string>

#include <gtest/gtest.h>
#include <sys/wait.h>

#include "salsa2d/serialize.hpp"

namespace fs = std::filesystem;
using namespace salsa2d;

namespace {

struct RunResult {
    int code = -1;
    std::string err;
};

/// Runs the CLI with the given arguments, capturing its exit code and stderr.
RunResult run_cli(const std::string& args, const fs::path& dir, int threads = 1) {
    const fs::path err = dir / "stderr.txt";
    const std::string cmd = std::string(SALSA2D_CLI_PATH) + " --threads " + std::to_string(threads) + " " + args + " > /dev/null 2> " + err.string();
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = fs::exists(err) ? io::read_file(err) : "";
    return r;
}

class Cli : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = new fs::path(fs::temp_directory_path() / "salsa2d_cli_test");
        fs::remove_all(*dir_);
        fs::create_directories(*dir_);
        ASSERT_EQ(run_cli("simulate --scenario two-bump --seed 2 --out-dir " + data().string(), *dir_).code, 0);
    }
    static void TearDownTestSuite() {
        fs::remove_all(*dir_);
        delete dir_;
    }
    static fs::path data() { return *dir_ / "data"; }
    static std::string data_args() {
        return "--region " + (data() / "region.geojson").string() + " --presences " + (data() / "presences.csv").string() +
               " --spacing 0.05";
    }
    static std::string small_fit() { return data_args() + " --start-knots 4 --max-knots 8 --r-count 4 --max-outer 3"; }
    static fs::path* dir_;
};
fs::path* Cli::dir_ = nullptr;

}  // namespace

TEST_F(Cli, SimulateWritesPointsAndRegion) {
    auto pts = io::read_points_csv(data() / "presences.csv");
    EXPECT_GT(pts.size(), 100u);
    EXPECT_TRUE(fs::exists(data() / "region.geojson"));
    EXPECT_TRUE(fs::exists(data() / "manifest.json"));
}

TEST_F(Cli, FitWritesModelTraceAndManifest) {
    const fs::path out = *dir_ / "fit1";
    ASSERT_EQ(run_cli("fit " + small_fit() + " --out-dir " + out.string(), *dir_).code, 0);
    FittedModel m = io::read_model(out / "model.json");
    EXPECT_GE(m.radial.size(), 2u);
    EXPECT_LE(m.radial.size(), 8u);
    EXPECT_FALSE(io::read_file(out / "trace.jsonl").empty());
    auto manifest = nlohmann::json::parse(io::read_file(out / "manifest.json"));
    EXPECT_EQ(manifest.at("status"), "ok");
}

TEST_F(Cli, RepeatedRunsGiveIdenticalOutputs) {
    const fs::path a = *dir_ / "rep_a", b = *dir_ / "rep_b";
    ASSERT_EQ(run_cli("fit " + small_fit() + " --out-dir " + a.string(), *dir_).code, 0);
    ASSERT_EQ(run_cli("fit " + small_fit() + " --out-dir " + b.string(), *dir_, 3).code, 0);
    EXPECT_EQ(io::read_file(a / "model.json"), io::read_file(b / "model.json"));
    EXPECT_EQ(io::read_file(a / "trace.jsonl"), io::read_file(b / "trace.jsonl"));
}

TEST_F(Cli, MissingInputExitsTwoNamingThePath) {
    const std::string missing = (*dir_ / "no_such_region.geojson").string();
    auto r = run_cli("fit --region " + missing + " --presences " + (data() / "presences.csv").string() +
                         " --spacing 0.1 --out-dir " + (*dir_ / "bad").string(),
                     *dir_);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find(missing), std::string::npos);
}

TEST_F(Cli, BadOptionValueExitsTwo) {
    auto r = run_cli("fit " + small_fit() + " --basis cubic --out-dir " + (*dir_ / "bad2").string(), *dir_);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("cubic"), std::string::npos);
}

TEST_F(Cli, PredictMarksTopPercent) {
    const fs::path fit = *dir_ / "fit_for_predict", out = *dir_ / "pred";
    ASSERT_EQ(run_cli("fit " + small_fit() + " --out-dir " + fit.string(), *dir_).code, 0);
    ASSERT_EQ(run_cli("grid --region " + (data() / "region.geojson").string() + " --spacing 0.1 --out-dir " + fit.string(),
                      *dir_)
                  .code,
              0);
    ASSERT_EQ(run_cli("predict --model " + (fit / "model.json").string() + " --grid " + (fit / "pseudo.csv").string() +
                          " --top-percent 10 --out-dir " + out.string(),
                      *dir_)
                  .code,
              0);
    auto t = io::read_csv(out / "intensity.csv");
    ASSERT_TRUE(t.has("top"));
    EXPECT_EQ(t.rows.size(), 121u);
    auto top = io::numeric_column(t, "top", "t");
    auto lambda = io::numeric_column(t, "intensity", "t");
    double marked = 0, lowest_marked = 1e300, highest_unmarked = 0;
    for (std::size_t i = 0; i < top.size(); ++i) {
        marked += top[i];
        if (top[i] == 1.0) lowest_marked = std::min(lowest_marked, lambda[i]);
        else highest_unmarked = std::max(highest_unmarked, lambda[i]);
    }
    EXPECT_GE(marked, 10);
    EXPECT_LE(marked, 13);
    EXPECT_GT(lowest_marked, highest_unmarked);
}

TEST_F(Cli, GridWithSpacingOnlyWritesLattice) {
    const fs::path out = *dir_ / "grid";
    ASSERT_EQ(run_cli("grid --region " + (data() / "region.geojson").string() + " --spacing 0.25 --out-dir " + out.string(),
                      *dir_)
                  .code,
              0);
    EXPECT_EQ(io::read_points_csv(out / "pseudo.csv").size(), 25u);
    EXPECT_FALSE(fs::exists(out / "convergence.csv"));
}

TEST_F(Cli, AverageWritesEnsembleTable) {
    const fs::path out = *dir_ / "avg";
    ASSERT_EQ(run_cli("fit " + data_args() + " --method average --k-list 4,8 --r-count 3 --out-dir " + out.string(), *dir_)
                  .code,
              0);
    auto t = io::read_csv(out / "ensemble.csv");
    EXPECT_EQ(t.rows.size(), 6u);
    auto w = io::numeric_column(t, "weight", "t");
    double s = 0;
    for (double v : w) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
    EXPECT_TRUE(fs::exists(out / "model.json"));
}

TEST_F(Cli, SweepWritesOneRowPerCombination) {
    const fs::path out = *dir_ / "sweep";
    ASSERT_EQ(run_cli("fit " + data_args() + " --sweep --sweep-starts 3 --max-knots 5 --r-count 3 --max-outer 2 --out-dir " +
                          out.string(),
                      *dir_)
                  .code,
              0);
    auto t = io::read_csv(out / "sweep.csv");
    EXPECT_EQ(t.rows.size(), 4u);
    EXPECT_TRUE(t.has("distance_type"));
}
