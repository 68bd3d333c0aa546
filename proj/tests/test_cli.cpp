#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "hisrd/bound_model.hpp"
#include "hisrd/estimator.hpp"
#include "hisrd/specfun.hpp"

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(HISRD_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("hisrd_cli_" + name);
    fs::remove_all(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::vector<std::vector<std::string>> rows;
    std::ifstream f(p);
    std::string line;
    while (std::getline(f, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

}  // namespace

TEST(Cli, ExitCodes) {
    EXPECT_EQ(run_cli("--help"), 0);
    EXPECT_EQ(run_cli(""), 2);
    EXPECT_EQ(run_cli("estimate --bogus"), 2);
    EXPECT_EQ(run_cli("estimate -o " + fresh_dir("bad").string() + " -s run.method=fast"), 2);
    EXPECT_EQ(run_cli("estimate -o " + fresh_dir("bad").string() + " -N 1"), 2);
    // the posterior mean lies below the bound, so the estimator refuses
    EXPECT_EQ(run_cli("gp-estimate -o " + fresh_dir("num").string() + " -s gp.n_grid=16 -s gp.lower_bound=5 -N 100"), 3);
}

TEST(Cli, OutputsAreByteDeterministic) {
    const fs::path a = fresh_dir("det_a"), b = fresh_dir("det_b"), c = fresh_dir("det_c");
    const std::string args = "estimate -N 5000 -K 2 --seed 9 -s run.keep_per_sample=true";
    ASSERT_EQ(run_cli(args + " -o " + a.string()), 0);
    ASSERT_EQ(run_cli(args + " -o " + b.string()), 0);
    ASSERT_EQ(run_cli(args + " -t 4 -o " + c.string()), 0);
    for (const char* f : {"estimate.csv", "per_sample.csv"}) {
        EXPECT_FALSE(slurp(a / f).empty());
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
        EXPECT_EQ(slurp(a / f), slurp(c / f)) << f;
    }
    const auto m = nlohmann::json::parse(slurp(a / "manifest.json"));
    EXPECT_EQ(m["experiment"], "estimate");
    EXPECT_EQ(m["seed"], 9);
    EXPECT_EQ(m["config"]["run"]["N"], "5000");
}

TEST(Cli, ConfigFileAndFlagsCompose) {
    const fs::path d = fresh_dir("cfg");
    fs::create_directories(d);
    {
        std::ofstream f(d / "x.ini");
        f << "[run]\nN = 300\nmethod = mc\n";
    }
    ASSERT_EQ(run_cli("estimate -c " + (d / "x.ini").string() + " -N 400 -o " + (d / "out").string()), 0);
    const auto rows = read_csv(d / "out" / "estimate.csv");
    ASSERT_EQ(rows.size(), 2U);
    EXPECT_EQ(rows[1][1], "mc");
    EXPECT_EQ(rows[1][4], "400");
}

TEST(Cli, RmseSweepOrdersMethods) {
    const fs::path d = fresh_dir("rmse");
    ASSERT_EQ(run_cli("rmse-sweep -N 500 -s run.repeats=100 -s run.K_grid=1,2,5 -o " + d.string()), 0);
    const auto rows = read_csv(d / "rmse_sweep.csv");
    ASSERT_EQ(rows.size(), 4U);
    EXPECT_EQ(rows[0], (std::vector<std::string>{"K", "RMSE_MC", "RMSE_SRD", "RMSE_hiSRD"}));
    for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_LT(std::stod(rows[i][3]), std::stod(rows[i][1])) << rows[i][0];
}

TEST(Cli, SingleRepeatRmseIsAbsoluteError) {
    const fs::path d = fresh_dir("rmse1");
    ASSERT_EQ(run_cli("rmse-sweep -N 800 --seed 4 -s run.repeats=1 -s run.K_grid=2 -o " + d.string()), 0);
    const auto rows = read_csv(d / "rmse_sweep.csv");
    ASSERT_EQ(rows.size(), 2U);
    const double exact = std::pow(2.0 * hisrd::specfun::normal_cdf(1.0) - 1.0, 2);
    const auto model = hisrd::make_box_model(hisrd::Vector::Ones(2), hisrd::Vector::Ones(2), 2);
    const double est =
        hisrd::estimate_hisrd(model, 800, {hisrd::SampleKind::mc, hisrd::derive_seed(4, 1000), 0}).value;
    EXPECT_NEAR(std::stod(rows[1][3]), std::abs(est - exact), 1e-12);
}
