// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <sstream>

#include <json.hpp>

#include "lorascope/cli.hpp"
#include "lorascope/container.hpp"
#include "lorascope/error.hpp"
#include "lorascope/synthgen.hpp"
#include "test_util.hpp"

namespace lorascope {
namespace {

using json = nlohmann::json;

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testing::TempDir("cli");
    PopulationSpec s = default_population_spec(5);
    s.dims = {32, 24, 8, 2};
    write_text_atomic(*dir_ / "spec.json", spec_to_json(s));
    const Result r = cli({"synth", "--spec", (*dir_ / "spec.json").string(), "--out", (*dir_ / "pop").string()});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static std::string path(const std::string& rel) { return (*dir_ / rel).string(); }
  static std::string manifest() { return path("pop/manifest.json"); }
  static testing::TempDir* dir_;
};

testing::TempDir* CliPipeline::dir_ = nullptr;

TEST(Cli, UsageErrorsExitWithTheUsageCode) {
  const int usage = exit_code(ErrorKind::usage);
  EXPECT_EQ(usage, 19);
  EXPECT_EQ(cli({"bogus"}).code, usage);
  EXPECT_EQ(cli({"evaluate", "--k", "abc"}).code, usage);
  EXPECT_EQ(cli({"synth", "--no-such-flag"}).code, usage);
  const Result r = cli({"evaluate", "--manifest", "m.json"});
  EXPECT_EQ(r.code, usage);  // --out missing
  EXPECT_NE(r.err.find("error[usage]"), std::string::npos);
}

TEST(Cli, HelpExitsCleanly) {
  const Result r = cli({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("evaluate"), std::string::npos);
}

TEST_F(CliPipeline, SynthWritesTheExpectedArtifacts) {
  for (const char* f : {"pop/manifest.json", "pop/population_spec.json", "pop/asr.csv", "pop/probes.json",
                        "pop/synth.config.json"})
    EXPECT_TRUE(std::filesystem::exists(path(f))) << f;
  EXPECT_EQ(load_manifest(manifest()).entries.size(), 34u);
}

TEST_F(CliPipeline, DirectionFeaturesNeedACentroid) {
  const Result e = cli({"extract", "--manifest", manifest(), "--out", path("x0"), "--feature-split", "direction"});
  EXPECT_EQ(e.code, exit_code(ErrorKind::dependency)) << e.err;
  EXPECT_EQ(e.code, 18);
  const Result v = cli({"evaluate", "--manifest", manifest(), "--out", path("x1"), "--bootstrap", "50"});
  EXPECT_EQ(v.code, 18) << v.err;
}

TEST_F(CliPipeline, EvaluateAndRerunFromSnapshot) {
  ASSERT_EQ(cli({"centroid", "--manifest", manifest(), "--out", path("c")}).code, 0);
  const std::string centroid = path("c/centroid.safetensors");
  const Result a = cli({"evaluate", "--manifest", manifest(), "--out", path("e1"), "--centroid", centroid,
                        "--bootstrap", "100", "--threads", "1"});
  ASSERT_EQ(a.code, 0) << a.err;
  const json report = json::parse(read_text_file(path("e1/report.json")));
  EXPECT_TRUE(report.contains("comparisons"));

  // Same run from the snapshot, with a different thread count.
  const Result b = cli({"evaluate", "--config", path("e1/evaluate.config.json"), "--out", path("e2"), "--threads", "3"});
  ASSERT_EQ(b.code, 0) << b.err;
  for (const char* f : {"report.json", "report.csv", "classifier.json"})
    EXPECT_EQ(read_text_file(path(std::string("e1/") + f)), read_text_file(path(std::string("e2/") + f))) << f;

  // A centroid built from a different split no longer matches.
  const Result c = cli({"evaluate", "--manifest", manifest(), "--out", path("e3"), "--centroid", centroid,
                        "--seed", "99", "--bootstrap", "50"});
  EXPECT_EQ(c.code, exit_code(ErrorKind::dependency)) << c.err;
}

TEST_F(CliPipeline, ConfigFilesAreChecked) {
  write_text_atomic(*dir_ / "bad_key.json",
                    R"({"format":"lorascope-run/1","command":"pca","params":{"no_such_key":1}})");
  EXPECT_EQ(cli({"pca", "--config", path("bad_key.json"), "--out", path("p0")}).code, 19);
  write_text_atomic(*dir_ / "wrong_cmd.json", R"({"format":"lorascope-run/1","command":"synth","params":{}})");
  EXPECT_EQ(cli({"pca", "--config", path("wrong_cmd.json"), "--out", path("p1")}).code, 19);
  write_text_atomic(*dir_ / "broken.json", "{");
  EXPECT_EQ(cli({"pca", "--config", path("broken.json"), "--out", path("p2")}).code, exit_code(ErrorKind::parse));
}

TEST_F(CliPipeline, PcaAlignLinkReport) {
  ASSERT_EQ(cli({"pca", "--manifest", manifest(), "--out", path("pca")}).code, 0);
  const json pca = json::parse(read_text_file(path("pca/pca.json")));
  EXPECT_FALSE(pca.empty());

  const Result al = cli({"align", "--manifest", manifest(), "--out", path("al"), "--adapter", "inverted_harmlessness-01",
                         "--probes", path("pop/probes.json"), "--draws", "200"});
  EXPECT_EQ(al.code, 0) << al.err;
  EXPECT_TRUE(std::filesystem::exists(path("al/alignment.json")));

  ASSERT_EQ(cli({"centroid", "--manifest", manifest(), "--out", path("lc")}).code, 0);
  ASSERT_EQ(cli({"evaluate", "--manifest", manifest(), "--out", path("le"), "--centroid",
                 path("lc/centroid.safetensors"), "--bootstrap", "50"})
                .code,
            0);
  const Result lk = cli({"link", "--manifest", manifest(), "--out", path("lk"), "--asr", path("pop/asr.csv"),
                         "--report", path("le/report.json")});
  ASSERT_EQ(lk.code, 0) << lk.err;
  const json link = json::parse(read_text_file(path("lk/link.json")));
  for (const char* k : {"elevation", "dose_response", "frobenius_vs_asr", "geometry_behavior"})
    EXPECT_TRUE(link.contains(k)) << k;

  const Result rp = cli({"report", "--report", path("le/report.json"), "--manifest", manifest(), "--link",
                         path("lk/link.json"), "--out", path("rp")});
  ASSERT_EQ(rp.code, 0) << rp.err;
  EXPECT_NE(read_text_file(path("rp/summary.txt")).find("Pairwise"), std::string::npos);
}

}  // namespace
}  // namespace lorascope
