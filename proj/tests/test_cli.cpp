// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "tdz/cli.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = tdz::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("tdz_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
    std::ofstream(path("shapes.json")) << R"({"tensors":[
      {"name":"enc.fc","role":"linear_weight","group":"encoder","shape":[48,64]},
      {"name":"enc.conv","role":"conv1d_kernel","group":"encoder","shape":[64,64,9]},
      {"name":"dec.fc","role":"linear_weight","group":"decoder","shape":[40,40]},
      {"name":"dec.conv","role":"conv1d_kernel","group":"decoder","shape":[24,32,3]},
      {"name":"dec.bias","role":"other","group":"decoder","shape":[24]}]})";
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, GenCompressVerifyPipeline) {
  ASSERT_EQ(run({"gen", "--shapes", path("shapes.json"), "--output", path("m.tdz"), "--seed", "4"}).code, 0);
  const auto c = run({"compress", "--input", path("m.tdz"), "--output", path("s.tdz"), "--encoder-ratio", "0.25",
                      "--decoder-ratio", "0.30", "--conv-method", "tucker", "--report", path("r.json")});
  ASSERT_EQ(c.code, 0) << c.err;
  const auto report = json::parse(slurp(path("r.json")));
  std::size_t before = 0, after = 0;
  for (const auto& t : report["tensors"]) {
    before += t["original_params"].get<std::size_t>();
    after += t["factored_params"].get<std::size_t>();
  }
  EXPECT_EQ(report["totals"]["params_before"], before);
  EXPECT_EQ(report["totals"]["params_after"], after);
  // enc.fc: R = floor(0.25*48*64/112) = 6; dec.fc: R = floor(0.3*1600/80) = 6.
  EXPECT_EQ(report["tensors"][0]["factored_params"], 6 * (48 + 64));
  EXPECT_EQ(report["tensors"][2]["factored_params"], 6 * (40 + 40));

  const auto v = run({"verify", "--original", path("m.tdz"), "--compressed", path("s.tdz"), "--tol", "0.5"});
  EXPECT_EQ(v.code, 0) << v.out << v.err;
  EXPECT_NE(v.out.find("PASS enc.conv"), std::string::npos);

  const auto strict = run({"verify", "--original", path("m.tdz"), "--compressed", path("s.tdz"), "--tol", "0"});
  EXPECT_EQ(strict.code, 1);
  EXPECT_NE(strict.out.find("FAIL"), std::string::npos);
  EXPECT_FALSE(strict.err.empty());

  fs::copy_file(path("m.tdz"), path("copy.tdz"));
  EXPECT_EQ(run({"verify", "--original", path("m.tdz"), "--compressed", path("copy.tdz"), "--tol", "1e-4"}).code, 0);

  const auto j = run({"verify", "--original", path("m.tdz"), "--compressed", path("s.tdz"), "--tol", "0.5", "--json"});
  EXPECT_TRUE(json::parse(j.out)["passed"].get<bool>());
}

TEST_F(CliTest, ReportIsStableAcrossRuns) {
  ASSERT_EQ(run({"gen", "--shapes", path("shapes.json"), "--output", path("m.tdz")}).code, 0);
  for (const char* name : {"a", "b"}) {
    ASSERT_EQ(run({"compress", "--input", path("m.tdz"), "--output", path(std::string(name) + ".tdz"), "--report",
                   path(std::string(name) + ".json"), "--conv-method", "cp"})
                  .code,
              0);
  }
  EXPECT_EQ(slurp(path("a.json")), slurp(path("b.json")));
  EXPECT_EQ(slurp(path("a.tdz")), slurp(path("b.tdz")));
}

TEST_F(CliTest, InfoIsReadOnlyAndReportsTruncation) {
  ASSERT_EQ(run({"gen", "--shapes", path("shapes.json"), "--output", path("m.tdz")}).code, 0);
  const auto bytes = slurp(path("m.tdz"));
  const auto info = run({"info", "--input", path("m.tdz"), "--json"});
  EXPECT_EQ(info.code, 0);
  EXPECT_EQ(json::parse(info.out)["tensors"].size(), 5u);
  EXPECT_EQ(slurp(path("m.tdz")), bytes);

  std::ofstream(path("cut.tdz"), std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  const auto cut = run({"info", "--input", path("cut.tdz")});
  EXPECT_EQ(cut.code, 3);
  EXPECT_NE(cut.err.find("truncated"), std::string::npos);
  EXPECT_TRUE(cut.out.empty());

  EXPECT_EQ(run({"info", "--input", path("missing.tdz")}).code, 3);
}

TEST_F(CliTest, BenchFlagsTensorTrain) {
  ASSERT_EQ(run({"gen", "--shapes", path("shapes.json"), "--output", path("m.tdz")}).code, 0);
  const auto b = run({"bench", "--input", path("m.tdz"), "--conv-method", "tt", "--json"});
  ASSERT_EQ(b.code, 0) << b.err;
  const auto j = json::parse(b.out);
  EXPECT_EQ(j["tensors"][1]["method"], "tt");
  EXPECT_TRUE(j["tensors"][1]["no_speedup"].get<bool>());
  EXPECT_FALSE(j["tensors"][0]["no_speedup"].get<bool>());

  ASSERT_EQ(run({"compress", "--input", path("m.tdz"), "--output", path("s.tdz")}).code, 0);
  const auto s = json::parse(run({"bench", "--input", path("s.tdz"), "--json"}).out);
  EXPECT_EQ(s["tensors"][0]["factored_macs"], 6 * (48 + 64));
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"compress", "--input", "x.tdz"}).code, 2);
  EXPECT_EQ(run({"compress", "--input", "x", "--output", "y", "--encoder-ratio", "0"}).code, 2);
  EXPECT_EQ(run({"compress", "--input", "x", "--output", "y", "--decoder-ratio", "1.5"}).code, 2);
  EXPECT_EQ(run({"compress", "--input", "x", "--output", "y", "--conv-method", "svd"}).code, 2);
  EXPECT_EQ(run({"verify", "--original", "a", "--compressed", "b", "--tol", "-1"}).code, 2);
  const auto help = run({"--help"});
  EXPECT_EQ(help.code, 0);
  EXPECT_NE(help.out.find("compress"), std::string::npos);
}

TEST_F(CliTest, IoAndFormatErrorsExitThree) {
  EXPECT_EQ(run({"compress", "--input", path("missing.tdz"), "--output", path("o.tdz")}).code, 3);
  std::ofstream(path("bad.json")) << "{not json";
  EXPECT_EQ(run({"gen", "--shapes", path("bad.json"), "--output", path("o.tdz")}).code, 3);
  std::ofstream(path("garbage.tdz")) << "hello world";
  const auto r = run({"verify", "--original", path("garbage.tdz"), "--compressed", path("garbage.tdz")});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("bad_magic"), std::string::npos);
  EXPECT_FALSE(fs::exists(path("o.tdz")));
}

TEST_F(CliTest, VerifyNameMismatchFails) {
  ASSERT_EQ(run({"gen", "--shapes", path("shapes.json"), "--output", path("m.tdz")}).code, 0);
  std::ofstream(path("one.json")) << R"({"tensors":[{"name":"x","role":"other","shape":[3]}]})";
  ASSERT_EQ(run({"gen", "--shapes", path("one.json"), "--output", path("one.tdz")}).code, 0);
  EXPECT_EQ(run({"verify", "--original", path("m.tdz"), "--compressed", path("one.tdz")}).code, 1);
}
