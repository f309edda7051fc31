#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

#include "bsvie/catalog.hpp"
#include "bsvie/convergence.hpp"
#include "bsvie/io.hpp"

using namespace bsvie;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("bsvie_io_test_" + std::to_string(::getpid())) / name;
    fs::create_directories(d);
    return d;
}

int cli(const std::string& args) {
    const std::string cmd = std::string(BSVIE_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int raw = std::system(cmd.c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

}  // namespace

TEST(Io, ShortestRoundTripFormatting) {
    EXPECT_EQ(io::fmt(0.1), "0.1");
    EXPECT_EQ(io::fmt(1e-20), "1e-20");
    EXPECT_EQ(io::fmt(3), "3");
    const double x = 0.1 + 0.2;
    EXPECT_EQ(std::stod(io::fmt(x)), x);
}

TEST(Io, FnvKnownVectors) {
    EXPECT_EQ(io::hex64(io::fnv1a("")), "cbf29ce484222325");
    EXPECT_EQ(io::hex64(io::fnv1a("a")), "af63dc4c8601ec8c");
}

TEST(Io, ManifestHashIgnoresInsertionOrder) {
    io::Manifest a, b;
    a.set("paths", 100);
    a.set("seed", 7);
    b.set("seed", 7);
    b.set("paths", 100);
    EXPECT_EQ(a.hash(), b.hash());
    b.set("seed", 8);
    EXPECT_NE(a.hash(), b.hash());
    EXPECT_EQ(a.canonical(), "paths=100\nseed=7\n");
}

TEST(Io, CsvWriterHeaderAndRows) {
    const fs::path f = scratch("csv") / "a.csv";
    {
        io::CsvWriter w(f.string(), "abc", {"x", "y", "z"});
        w.row(1, 0.5, std::string("t"));
        w.row(true, 2.0, "u");
    }
    EXPECT_EQ(slurp(f), "# manifest=abc\nx,y,z\n1,0.5,t\ntrue,2,u\n");
    EXPECT_THROW(io::CsvWriter("/nonexistent-dir/x.csv", "h", {"a"}), InvalidArgument);
}

TEST(Io, KeyValueParsing) {
    std::istringstream in("# comment\nkappa = 0.25\n\n  T=2 # trailing\nxi = tanh\n");
    const auto kv = io::KeyValueConfig::parse(in);
    EXPECT_DOUBLE_EQ(kv.number("kappa", 0.0), 0.25);
    EXPECT_DOUBLE_EQ(kv.number("T", 1.0), 2.0);
    EXPECT_DOUBLE_EQ(kv.number("missing", 3.0), 3.0);
    EXPECT_EQ(kv.get("xi", "sin"), "tanh");
    EXPECT_THROW(kv.number("xi", 0.0), InvalidArgument);

    std::istringstream bad("just words\n");
    EXPECT_THROW(io::KeyValueConfig::parse(bad), InvalidArgument);

    auto merged = io::KeyValueConfig::from_inline("kappa=0.5,x0=2");
    EXPECT_DOUBLE_EQ(merged.number("x0", 0.0), 2.0);
    auto base = kv;
    base.merge(merged);
    EXPECT_DOUBLE_EQ(base.number("kappa", 0.0), 0.5);
}

TEST(Catalog, FrozenIdsAndUnknownIdListsCatalog) {
    const auto ids = catalog_ids();
    ASSERT_EQ(ids.size(), 5u);
    for (const auto& id : ids) EXPECT_NO_THROW(make_scenario(id));
    try {
        make_scenario("nope");
        FAIL() << "expected InvalidArgument";
    } catch (const InvalidArgument& e) {
        for (const auto& id : ids) EXPECT_NE(std::string(e.what()).find(id), std::string::npos);
    }
    io::KeyValueConfig o;
    o.set("T", "3");
    EXPECT_THROW(make_scenario("example-4.2", o), InvalidArgument);
}

TEST(Catalog, LadderValidation) {
    EXPECT_THROW(validate_ladder({{10, 100, 3}, {20, 100, 3}}), InvalidArgument);
    EXPECT_THROW(validate_ladder({{10, 100, 3}, {20, 100, 3}, {20, 100, 3}}), InvalidArgument);
    EXPECT_THROW(validate_ladder({{10, 100, 3}, {20, 50, 3}, {40, 200, 3}}), InvalidArgument);
    EXPECT_NO_THROW(validate_ladder({{10, 100, 3}, {20, 100, 3}, {40, 100, 3}}));
}

TEST(Catalog, LogLogFitRecoversPowerLaw) {
    const auto f = fit_loglog({1, 2, 4, 8}, {3.0, 1.5, 0.75, 0.375});
    EXPECT_NEAR(f.slope, -1.0, 1e-12);
    EXPECT_NEAR(f.r_squared, 1.0, 1e-12);
    EXPECT_THROW(fit_loglog({1, 2}, {1, -1}), InvalidArgument);
}

TEST(Catalog, ReplicationsAverageInMeanSquare) {
    SolverConfig cfg;
    cfg.store_field = false;
    const std::vector<Rung> ladder{{4, 300, 3}, {8, 300, 3}, {16, 300, 3}};
    const auto one = convergence_study("example-1.1", ladder, 9, cfg);
    const auto two = convergence_study("example-1.1", ladder, 9, cfg, {}, 2);
    ASSERT_EQ(two.rows.size(), 3u);
    // The first replication reuses the seed, so the mean square contains the single run.
    for (std::size_t q = 0; q < 3; ++q) EXPECT_GE(2.0 * two.rows[q].error_Y * two.rows[q].error_Y,
                                                  one.rows[q].error_Y * one.rows[q].error_Y * (1 - 1e-12));
    EXPECT_THROW(convergence_study("example-1.1", ladder, 9, cfg, {}, 0), InvalidArgument);
}

TEST(Cli, ExitCodes) {
    const fs::path d = scratch("codes");
    const std::string out = " --out " + (d / "r.csv").string();
    EXPECT_EQ(cli("solve --generator zero --paths 200 --steps 4" + out), 0);
    EXPECT_EQ(cli("solve --generator no-such-id --paths 200 --steps 4" + out), 2);
    EXPECT_EQ(cli("solve --paths 200" + out), 2);
    EXPECT_EQ(cli("bogus-subcommand"), 2);
    EXPECT_EQ(cli("solve --generator zero --paths -3" + out), 2);
    EXPECT_EQ(cli("solve --generator example-1.1 --type stepping --paths 200 --steps 4" + out), 2);
    EXPECT_EQ(cli("certify --profile lz0=0 --out " + (d / "c.txt").string()), 0);
    EXPECT_EQ(cli("certify --profile lz0=10 --out " + (d / "c.txt").string()), 3);
    EXPECT_EQ(cli("certify --profile bogus=1 --out " + (d / "c.txt").string()), 2);
    EXPECT_EQ(cli("solve --generator fbsde-sin --set kappa=0.5 --paths 200 --steps 4" + out), 3);
    EXPECT_EQ(cli("solve --generator adapted-linear --max-picard 1 --paths 500 --steps 6" + out), 4);
}

TEST(Cli, SolveWritesCsvSidecarsAndManifest) {
    const fs::path d = scratch("solve");
    ASSERT_EQ(cli("solve --generator example-1.1 --paths 2000 --steps 8 --export-paths 3 --out " + (d / "ex.csv").string()),
              0);
    for (const char* f : {"ex.csv", "ex_residual.csv", "ex_picard.csv", "ex_report.txt", "ex.manifest"})
        EXPECT_TRUE(fs::exists(d / f)) << f;
    const std::string csv = slurp(d / "ex.csv");
    const std::string manifest = slurp(d / "ex.manifest");
    const std::string first = csv.substr(0, csv.find('\n'));
    EXPECT_EQ(first.rfind("# manifest=", 0), 0u);
    EXPECT_EQ(manifest.substr(0, manifest.find('\n')), first);
    EXPECT_NE(manifest.find("generator=example-1.1"), std::string::npos);
    EXPECT_NE(manifest.find("# run"), std::string::npos);
}

TEST(Cli, SimulateDemoAndConvergenceRun) {
    const fs::path d = scratch("misc");
    EXPECT_EQ(cli("simulate --paths 100 --steps 5 --T 2 --out " + (d / "w.csv").string()), 0);
    EXPECT_TRUE(fs::exists(d / "w.csv"));
    EXPECT_EQ(cli("demo counterexample --case 1.1 --paths 2000 --steps 8 --out " + (d / "demo.csv").string()), 0);
    EXPECT_TRUE(fs::exists(d / "demo_verdict.txt"));
    EXPECT_EQ(cli("demo counterexample --case 7 --out " + (d / "demo.csv").string()), 2);
    EXPECT_EQ(cli("convergence --generator zero --ladder 4x200,8x200,16x200 --out " + (d / "conv.csv").string()), 0);
    EXPECT_EQ(cli("convergence --generator zero --ladder 4x200,8x200 --out " + (d / "conv.csv").string()), 2);
    EXPECT_EQ(cli("convergence --generator zero --ladder 4x200,8x200,16x200 --replications 2 --out " +
                  (d / "conv2.csv").string()),
              0);
    EXPECT_EQ(cli("convergence --generator zero --ladder 4x200,8x200,16x200 --replications 0 --out " +
                  (d / "conv2.csv").string()),
              2);
}

TEST(Cli, ThreadCountLeavesCsvBytesUnchanged) {
    const fs::path d = scratch("det");
    const std::string base = "solve --generator linear-zhat --paths 1500 --steps 8 --seed 5 ";
    ASSERT_EQ(cli(base + "--threads 1 --out " + (d / "a.csv").string()), 0);
    ASSERT_EQ(cli(base + "--threads 3 --out " + (d / "b.csv").string()), 0);
    EXPECT_EQ(slurp(d / "a.csv"), slurp(d / "b.csv"));
    EXPECT_EQ(slurp(d / "a_residual.csv"), slurp(d / "b_residual.csv"));
    EXPECT_EQ(slurp(d / "a_picard.csv"), slurp(d / "b_picard.csv"));
}
