#include "twimpute/csv.hpp"

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using twimpute::Index;

namespace {

fs::path workdir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("twimpute_cli_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string at(const std::string& name) { return (workdir() / name).string(); }

int run(const std::string& args, const std::string& capture = "") {
  std::string cmd = std::string(TWIMPUTE_CLI) + " " + args;
  cmd += capture.empty() ? " > /dev/null 2>&1" : " > " + capture + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json read_json(const std::string& path) { return nlohmann::json::parse(slurp(path)); }

}  // namespace

TEST(CliSimulate, PatternOneHasThreeHundredMissing) {
  ASSERT_EQ(run("simulate --model ar --n 1000 --pattern 1 --seed 7 --out " + at("ar")), 0);
  const auto masked = twimpute::read_csv(at("ar.masked.csv"));
  EXPECT_EQ(masked.missing_count(), 300);
  const auto full = twimpute::read_csv(at("ar.full.csv"));
  EXPECT_FALSE(full.has_missing());
  EXPECT_EQ(full.n(), 1000);
}

TEST(CliSimulate, ByteIdenticalReruns) {
  ASSERT_EQ(run("simulate --model tar --n 300 --pattern 2 --seed 3 --out " + at("r1")), 0);
  ASSERT_EQ(run("simulate --model tar --n 300 --pattern 2 --seed 3 --out " + at("r2")), 0);
  EXPECT_EQ(slurp(at("r1.masked.csv")), slurp(at("r2.masked.csv")));
  EXPECT_EQ(slurp(at("r1.full.csv")), slurp(at("r2.full.csv")));
}

TEST(CliSimulate, CompositionalRowsSumToOne) {
  ASSERT_EQ(run("simulate --model al --n 200 --pattern none --seed 1 --out " + at("al")), 0);
  const auto p = twimpute::read_csv(at("al.full.csv"));
  ASSERT_EQ(p.d(), 3);
  for (Index t = 0; t < p.n(); ++t) EXPECT_NEAR(p.values().row(t).sum(), 1.0, 1e-12);
}

TEST(CliImpute, LinearMidpoint) {
  twimpute::write_text(at("mid.csv"), "1\n\n3\n");
  ASSERT_EQ(run("impute --in " + at("mid.csv") + " --method linear --out " + at("mid_out.csv")), 0);
  EXPECT_EQ(slurp(at("mid_out.csv")), "1\n2\n3\n");
}

TEST(CliImpute, FullyObservedTwiReturnsInput) {
  ASSERT_EQ(run("simulate --model ar --n 80 --pattern none --seed 2 --out " + at("fo")), 0);
  ASSERT_EQ(run("impute --in " + at("fo.full.csv") + " --method twi --out " + at("fo_out.csv")), 0);
  EXPECT_EQ(slurp(at("fo_out.csv")), slurp(at("fo.full.csv")));
  EXPECT_EQ(read_json(at("fo_out.csv.json"))["iterations"], 0);
}

TEST(CliImpute, KTwiReportsThreeSegments) {
  ASSERT_EQ(run("simulate --model ar --n 200 --pattern 1 --count 60 --seed 4 --out " + at("kt")), 0);
  ASSERT_EQ(run("impute --in " + at("kt.masked.csv") + " --method ktwi --cutoffs 0.25,0.5,0.75 --out " +
                at("kt_out.csv") + " --report " + at("kt_report.json")),
            0);
  const auto rep = read_json(at("kt_report.json"));
  ASSERT_EQ(rep["segments"].size(), 3u);
  for (const auto& seg : rep["segments"]) {
    const auto& tr = seg;
    for (std::size_t i = 1; i < tr.size(); ++i) EXPECT_LE(tr[i].get<double>(), tr[i - 1].get<double>() + 1e-10);
  }
  const auto out = twimpute::read_csv(at("kt_out.csv"));
  EXPECT_FALSE(out.has_missing());
}

TEST(CliImpute, InlineSimplexConstraints) {
  ASSERT_EQ(run("simulate --model al --n 120 --pattern 1 --count 30 --seed 5 --out " + at("alc")), 0);
  ASSERT_EQ(run("impute --in " + at("alc.masked.csv") + " --method twi --p 2 --max-iters 5 --constraints '{\"kind\":\"simplex\"}' --out " +
                at("alc_out.csv")),
            0);
  const auto out = twimpute::read_csv(at("alc_out.csv"));
  for (Index t = 0; t < out.n(); ++t) EXPECT_NEAR(out.values().row(t).sum(), 1.0, 1e-8);
}

TEST(CliImpute, ExitCodes) {
  twimpute::write_text(at("bad.csv"), "1,2\n3\n");
  EXPECT_EQ(run("impute --in " + at("bad.csv") + " --method linear --out " + at("bad_out.csv")), 2);
  EXPECT_EQ(run("impute --in " + at("mid.csv") + " --method nosuch --out " + at("x.csv")), 2);
  EXPECT_EQ(run("impute --method linear"), 2);
  EXPECT_EQ(run("impute --in " + at("kt.masked.csv") + " --method twi --constraints '{broken' --out " + at("x.csv")),
            2);
  EXPECT_EQ(run("impute --in " + at("kt.masked.csv") + " --method twi --constraints '{\"kind\":\"box\",\"lower\":5,\"upper\":6}' --out " +
                at("x.csv")),
            2);
}

TEST(CliBenchmark, SchemaAndDeterminism) {
  const std::string args = "benchmark --models ar --patterns 1 --methods linear --reps 10 --n 200 --count 60 --seed 9 --out ";
  ASSERT_EQ(run(args + at("b1")), 0);
  ASSERT_EQ(run(args + at("b2")), 0);
  const std::string csv = slurp(at("b1.csv"));
  EXPECT_NE(csv.find("ar,I,linear,wasserstein_loss,"), std::string::npos);
  EXPECT_EQ(csv, slurp(at("b2.csv")));
  const auto j = read_json(at("b1.json"));
  ASSERT_TRUE(j.is_array());
  EXPECT_EQ(j[0]["metric"], "wasserstein_loss");
}

TEST(CliEvaluate, IdenticalPanelsScoreZero) {
  ASSERT_EQ(run("simulate --model ar --n 300 --pattern none --seed 5 --out " + at("ev")), 0);
  ASSERT_EQ(run("evaluate --imputed " + at("ev.full.csv") + " --truth " + at("ev.full.csv") + " --model ar",
                at("eval.json")),
            0);
  const auto j = read_json(at("eval.json"));
  EXPECT_EQ(j["wasserstein_loss"].get<double>(), 0.0);
  EXPECT_TRUE(j.contains("parameters"));
}

TEST(CliTheory, MarkovIdentification) {
  ASSERT_EQ(run("theory markov --p 0.3 --q 0.2 --k1 3 --k2 5", at("th.json")), 0);
  const auto j = read_json(at("th.json"));
  EXPECT_EQ(j["status"], "unique");
  EXPECT_NEAR(j["a"].get<double>(), 0.8, 1e-12);
  EXPECT_NEAR(j["b"].get<double>(), 0.3, 1e-12);
  ASSERT_EQ(run("theory markov --k1 4 --k2 4", at("th2.json")), 0);
  EXPECT_EQ(read_json(at("th2.json"))["status"], "non-identified");
}
