// Copyright 2026 The FedHet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "absl/strings/match.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_split.h"
#include "gtest/gtest.h"
#include "nlohmann/json.hpp"

namespace {

namespace fs = std::filesystem;

constexpr char kSmall[] =
    "mode = async\n"
    "data.dim = 8\n"
    "model.hidden = 8\n"
    "data.per_class = 60\n"
    "stop.at_target = false\n"
    "stop.max_virtual_time = 1500\n"
    "seeds = 1..2\n";

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           absl::StrCat("fedhet_cli_test_",
                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path Write(const std::string& name, const std::string& text) {
    const fs::path p = dir_ / name;
    std::ofstream(p, std::ios::binary) << text;
    return p;
  }

  Result Cli(const std::string& args) {
    const fs::path out = dir_ / "stdout.txt";
    const fs::path err = dir_ / "stderr.txt";
    const std::string cmd = absl::StrCat("'", FEDHET_CLI, "' ", args, " >'",
                                         out.string(), "' 2>'", err.string(), "'");
    const int raw = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.out = Slurp(out);
    r.err = Slurp(err);
    return r;
  }

  nlohmann::json FirstErrorLine(const Result& r) {
    std::vector<std::string> lines = absl::StrSplit(r.err, '\n', absl::SkipEmpty());
    for (const std::string& l : lines) {
      nlohmann::json j = nlohmann::json::parse(l, nullptr, false);
      if (!j.is_discarded() && j.contains("error")) return j["error"];
    }
    ADD_FAILURE() << "no error object in: " << r.err;
    return {};
  }

  fs::path dir_;
};

TEST_F(CliTest, RunWritesReportsAndSummary) {
  const fs::path conf = Write("small.conf", kSmall);
  Result r = Cli(absl::StrCat("run ", conf.string(), " --out ", (dir_ / "a").string()));
  ASSERT_EQ(r.code, 0) << r.err;
  nlohmann::json summary = nlohmann::json::parse(r.out);
  EXPECT_EQ(summary["cells"], 1);
  EXPECT_EQ(summary["failed_cells"], 0);
  for (const auto& f : summary["files"]) {
    EXPECT_TRUE(fs::exists(dir_ / "a" / f.get<std::string>())) << f;
  }
  const std::string runs = Slurp(dir_ / "a" / "runs.csv");
  EXPECT_EQ(std::count(runs.begin(), runs.end(), '\n'), 1 + 2 * 5);
}

TEST_F(CliTest, ReplayIsByteIdentical) {
  const fs::path conf =
      Write("small.conf", absl::StrCat(kSmall, "record_trace = true\n"));
  ASSERT_EQ(Cli(absl::StrCat("sweep ", conf.string(), " --axis sigma=0.5,1 --out ",
                             (dir_ / "a").string()))
                .code,
            0);
  Result r = Cli(absl::StrCat("replay ", (dir_ / "a" / "manifest.json").string(),
                              " --jobs 3 --out ", (dir_ / "b").string()));
  ASSERT_EQ(r.code, 0) << r.err;
  int compared = 0;
  for (const auto& entry : fs::directory_iterator(dir_ / "a")) {
    const fs::path other = dir_ / "b" / entry.path().filename();
    ASSERT_TRUE(fs::exists(other)) << other;
    EXPECT_EQ(Slurp(entry.path()), Slurp(other)) << entry.path().filename();
    ++compared;
  }
  EXPECT_EQ(compared, 9);
}

TEST_F(CliTest, SeedOverride) {
  const fs::path conf = Write("small.conf", kSmall);
  ASSERT_EQ(Cli(absl::StrCat("run ", conf.string(), " --seeds 7 --out ",
                             (dir_ / "a").string()))
                .code,
            0);
  nlohmann::json m = nlohmann::json::parse(Slurp(dir_ / "a" / "manifest.json"));
  EXPECT_EQ(m["seeds"], nlohmann::json::array({7}));
}

TEST_F(CliTest, ConfigErrorsAreJsonWithExitTwo) {
  const fs::path bad = Write("bad.conf", "mode = async\nalpha = 1.5\n");
  Result r = Cli(absl::StrCat("run ", bad.string(), " --out ", (dir_ / "a").string()));
  EXPECT_EQ(r.code, 2);
  nlohmann::json e = FirstErrorLine(r);
  EXPECT_EQ(e["code"], "INVALID_ARGUMENT");
  EXPECT_TRUE(absl::StrContains(e["message"].get<std::string>(),
                                "alpha must lie in (0,1]"));
  EXPECT_FALSE(fs::exists(dir_ / "a"));

  const fs::path unknown = Write("unknown.conf", "colour = blue\n");
  r = Cli(absl::StrCat("run ", unknown.string(), " --out ", (dir_ / "a").string()));
  EXPECT_EQ(r.code, 2);
  EXPECT_TRUE(absl::StrContains(FirstErrorLine(r)["message"].get<std::string>(),
                                "unknown key 'colour'"));
}

TEST_F(CliTest, UsageErrors) {
  const fs::path conf = Write("small.conf", kSmall);
  EXPECT_EQ(Cli(absl::StrCat("run ", conf.string())).code, 2);  // no --out
  EXPECT_EQ(Cli("frobnicate").code, 2);
  EXPECT_EQ(Cli(absl::StrCat("run ", (dir_ / "missing.conf").string(), " --out x")).code,
            2);
  EXPECT_EQ(Cli(absl::StrCat("sweep ", conf.string(), " --axis sigma --out ",
                             (dir_ / "a").string()))
                .code,
            2);
  EXPECT_EQ(Cli(absl::StrCat("sweep ", conf.string(),
                             " --axis sigma=1 --axis sigma=2 --out ",
                             (dir_ / "a").string()))
                .code,
            2);
  const fs::path axes = Write("axes.conf", absl::StrCat(kSmall, "sweep.sigma = 0,1\n"));
  EXPECT_EQ(Cli(absl::StrCat("run ", axes.string(), " --out ", (dir_ / "a").string()))
                .code,
            2);
  const fs::path notjson = Write("manifest.json", "{");
  EXPECT_EQ(Cli(absl::StrCat("replay ", notjson.string(), " --out ",
                             (dir_ / "a").string()))
                .code,
            2);
}

TEST_F(CliTest, ZeroSigmaWarns) {
  const fs::path conf = Write("open.conf", absl::StrCat(kSmall, "sigma = 0\n"));
  Result r = Cli(absl::StrCat("run ", conf.string(), " --out ", (dir_ / "a").string()));
  EXPECT_EQ(r.code, 0);
  EXPECT_TRUE(absl::StrContains(r.err, "{\"warning\":\"sigma = 0")) << r.err;
}

TEST_F(CliTest, FailedCellsKeepSweepGoingButFailARun) {
  const fs::path conf = Write("small.conf", kSmall);
  Result r = Cli(absl::StrCat("sweep ", conf.string(),
                              " --axis learning_rate=0.05,1e300 --out ",
                              (dir_ / "a").string()));
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.out)["failed_cells"], 1);
  EXPECT_TRUE(absl::StrContains(r.err, "cell 1 failed"));
  EXPECT_TRUE(absl::StrContains(Slurp(dir_ / "a" / "cells.csv"), "failed"));

  const fs::path diverge =
      Write("diverge.conf", absl::StrCat(kSmall, "learning_rate = 1e300\n"));
  r = Cli(absl::StrCat("run ", diverge.string(), " --out ", (dir_ / "b").string()));
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(FirstErrorLine(r)["code"], "UNAVAILABLE");
}

}  // namespace
