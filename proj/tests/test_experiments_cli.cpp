#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "steinind/experiments.hpp"

using namespace steinind;
namespace ex = steinind::experiments;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("steinind_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run(const std::string& args, const fs::path& out) {
    const std::string cmd = std::string(STEIN_EXE) + " " + args + " --out " + out.string() + " > " +
                            (out / "stdout.txt").string() + " 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

ex::ExperimentReport small_report() {
    ex::ExperimentReport rep;
    rep.name = "toy";
    for (double n : {10.0, 40.0, 160.0}) {
        ex::Table::Row r;
        r.param("N", n).param("label", "a,\"b\"").exact("value", 2.0 / std::sqrt(n)).mc("noisy", 1.0 / n, 0.01, 100);
        rep.table.add(r);
    }
    ex::add_fit(rep, "value_vs_N", "N", "value");
    rep.check("slope is -1/2, roughly", std::abs(rep.fits[0].fit.slope + 0.5) < 1e-12, "");
    return rep;
}

}  // namespace

TEST(Table, CsvRoundTripWithQuoting) {
    const auto rep = small_report();
    const auto csv = rep.table.csv();
    EXPECT_NE(csv.find("\"a,\"\"b\"\"\""), std::string::npos);
    const auto back = ex::Table::parse_csv(csv);
    EXPECT_EQ(back.columns(), rep.table.columns());
    EXPECT_EQ(back.rows(), rep.table.rows());
    EXPECT_EQ(back.rows()[0][back.column("label")], "a,\"b\"");
    EXPECT_THROW(ex::Table::parse_csv("a,b\n\"1,2\n"), ConfigError);
    EXPECT_THROW(ex::Table::parse_csv("a,b\n1\n"), ConfigError);
    EXPECT_THROW(back.column("missing"), ConfigError);
}

TEST(Table, ExactAndMonteCarloCells) {
    const auto rep = small_report();
    const auto& t = rep.table;
    EXPECT_EQ(t.rows()[0][t.column("value_se")], "exact");
    EXPECT_EQ(t.rows()[0][t.column("value_n")], "exact");
    EXPECT_EQ(t.rows()[0][t.column("noisy_n")], "100");
    EXPECT_EQ(std::stod(t.rows()[0][t.column("noisy_se")]), 0.01);
    EstimatorResult exact;
    exact.estimate = 3.0;
    ex::Table::Row r;
    r.mc("x", exact);
    EXPECT_EQ(r.cells()[1].second, "exact");
}

TEST(Table, RowsMustShareColumns) {
    ex::Table t;
    ex::Table::Row a, b;
    a.param("x", 1.0);
    b.param("y", 1.0);
    t.add(a);
    EXPECT_THROW(t.add(b), InvariantError);
}

TEST(Fmt, ShortestRoundTrip) {
    for (double v : {0.1, 1.0 / 3.0, 1e-300, 12345.678, -2.5e10}) EXPECT_EQ(std::stod(ex::fmt(v)), v);
}

TEST(Report, FitsSurviveCsvAndTampering) {
    const auto rep = small_report();
    EXPECT_NO_THROW(ex::verify_fits_from_csv(rep, rep.table.csv()));
    auto csv = rep.table.csv();
    const auto pos = csv.rfind('\n', csv.size() - 2);
    csv.replace(pos + 1, 3, "999");  // change the last N
    EXPECT_THROW(ex::verify_fits_from_csv(rep, csv), InvariantError);
}

TEST(Report, JsonIsDeterministicAndComplete) {
    const auto rep = small_report();
    const auto a = ex::json_text(rep), b = ex::json_text(small_report());
    EXPECT_EQ(a, b);
    const auto j = ex::Json::parse(a);
    EXPECT_EQ(j["experiment"], "toy");
    EXPECT_EQ(j["provenance"]["version"], ex::kVersion);
    EXPECT_TRUE(j["passed"].get<bool>());
    EXPECT_NEAR(j["rate_fits"][0]["slope"].get<double>(), -0.5, 1e-12);
}

TEST(Report, WriteFiles) {
    const auto dir = scratch("write");
    const auto paths = ex::write_report(small_report(), dir.string(), true);
    ASSERT_EQ(paths.size(), 3u);
    EXPECT_TRUE(fs::exists(dir / "toy.csv"));
    EXPECT_NE(slurp(dir / "toy.svg").find("<svg"), std::string::npos);
}

TEST(Configs, UnknownKeysAndBadValues) {
    ex::RunOptions o;
    EXPECT_THROW(ex::GammaConfig::from(KeyValueFile::from_string("Nn = 10\n"), o), ConfigError);
    EXPECT_THROW(ex::GammaConfig::from(KeyValueFile::from_string("outside = maybe\n"), o), ConfigError);
    EXPECT_THROW(ex::GammaConfig::from(KeyValueFile::from_string("N = 10\nm = 20\n"), o), ConfigError);
    EXPECT_THROW(ex::UniformConfig::from(KeyValueFile::from_string("rho = 1.5\n"), o), ConfigError);
    EXPECT_THROW(ex::LognormalConfig::from(KeyValueFile::from_string("N = 100\nI = 200\n"), o), ConfigError);
    const auto g = ex::GammaConfig::from(KeyValueFile::from_string("N = 16, 64\nm_rule = sqrt\n"), o);
    ASSERT_EQ(g.m.size(), 2u);
    EXPECT_EQ(g.m[0], 4);
    EXPECT_EQ(g.m[1], 8);
}

TEST(Commands, MeasureUniform) {
    const auto rep = ex::cmd_measure("uniform01", {}, 201);
    EXPECT_TRUE(rep.passed());
    const auto& t = rep.table;
    EXPECT_EQ(t.rows().size(), 201u);
    const auto& mid = t.rows()[100];
    EXPECT_NEAR(std::stod(mid[t.column("x")]), 0.5, 1e-12);
    EXPECT_NEAR(std::stod(mid[t.column("a")]), 0.25, 1e-12);
    EXPECT_NEAR(rep.summary["median_constant"].get<double>(), 8.0, 1e-12);
}

TEST(Commands, SelftestQuickPassesAndFaultIsCaught) {
    ex::SelftestOptions o;
    o.quick = true;
    o.workers = 1;
    EXPECT_TRUE(ex::cmd_selftest(o).passed());
    o.contraction = ContractionMode::unsymmetrized;
    EXPECT_FALSE(ex::cmd_selftest(o).passed());
}

TEST(Cli, ExitCodes) {
    const auto dir = scratch("exit");
    EXPECT_EQ(run("selftest --quick", dir), 0);
    EXPECT_TRUE(fs::exists(dir / "selftest.csv"));
    EXPECT_EQ(run("selftest --quick --fault unsymmetrized-contraction", dir), 1);
    EXPECT_EQ(run("selftest --fault nonsense", dir), 2);
    EXPECT_EQ(run("nosuchcommand", dir), 2);
    EXPECT_EQ(run("measure cauchy", dir), 2);
    std::ofstream(dir / "bad.cfg") << "N = 10\nunknown.key = 3\n";
    EXPECT_EQ(run("gamma2d --config " + (dir / "bad.cfg").string(), dir), 2);
    EXPECT_EQ(run("gamma2d --config " + (dir / "missing.cfg").string(), dir), 2);
}

TEST(Cli, MeasureWritesCsvAndJson) {
    const auto dir = scratch("measure");
    ASSERT_EQ(run("measure centered_gamma --nodes 51", dir), 0);
    const auto t = ex::Table::parse_csv(slurp(dir / "measure_centered_gamma.csv"));
    EXPECT_EQ(t.rows().size(), 51u);
    const auto j = ex::Json::parse(slurp(dir / "measure_centered_gamma.json"));
    EXPECT_TRUE(j["passed"].get<bool>());
}

TEST(Cli, SameSeedSameBytes) {
    const auto a = scratch("seed_a"), b = scratch("seed_b");
    ASSERT_EQ(run("selftest --quick --seed 7", a), 0);
    ASSERT_EQ(run("selftest --quick --seed 7", b), 0);
    EXPECT_EQ(slurp(a / "selftest.csv"), slurp(b / "selftest.csv"));
    EXPECT_EQ(slurp(a / "selftest.json"), slurp(b / "selftest.json"));
}
