// Copyright 2026 The fsodbench Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Drives the fsodbench binary and checks exit codes and outputs.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <string>

#include "fixtures.hpp"
#include "fsod/dataset.hpp"
#include "fsod/split_file.hpp"

namespace fsod {
namespace {

using testing::TempDir;

int cli(const std::string& args) {
  const std::string cmd = std::string(FSOD_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string q(const std::string& s) { return "'" + s + "'"; }

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    SynthSpec spec;
    spec.source = "toy";
    spec.classes = {{"A", 40, 0}, {"B", 30, 0}};
    spec.num_images = 12;
    spec.seed = 8;
    spec.even_spread = true;
    disk_ = testing::write_corpus_with_split(dir_.str(), spec, {2, 4, 3, 7});
  }

  std::string write_config(const std::string& name, const nlohmann::json& extra) {
    nlohmann::json j{{"mode", "zero_shot_t"},
                     {"k", 0},
                     {"dataset", {{"index", disk_.index}}},
                     {"split", disk_.split},
                     {"prompt", "detect_text"},
                     {"prompt_dir", std::string(FSOD_SOURCE_DIR) + "/prompts"},
                     {"backends", {{"detector", {{"oracle", {{"sigma", 1}}}}}}}};
    if (extra.is_object()) j.merge_patch(extra);
    const std::string path = dir_.file(name);
    std::ofstream(path) << j.dump(2);
    return path;
  }

  TempDir dir_;
  testing::DiskCorpus disk_;
};

TEST_F(CliTest, SplitRunEvaluateReport) {
  const std::string split = dir_.file("s.jsonl");
  EXPECT_EQ(cli("split --index " + q(disk_.index) +
                " --trials 3 --m-exp 2 --m-test 4 --n-exp 3 --n-test 7 --out " + q(split)),
            0);
  EXPECT_EQ(SplitFile::load(split).images_in(Side::kTest).size(), 7u);
  EXPECT_EQ(cli("split --index " + q(disk_.index) + " --exact --m-exp 2 --m-test 4 "
                "--n-exp 3 --n-test 7 --out " + q(split)),
            0);

  const std::string cfg = write_config("c.json", {});
  const std::string run = dir_.file("runs/c.jsonl");
  EXPECT_EQ(cli("run --config " + q(cfg) + " --out " + q(run)), 0);
  EXPECT_EQ(cli("run --config " + q(cfg) + " --out " + q(run)), 0);  // resume, no-op
  EXPECT_EQ(cli("evaluate --run " + q(run) + " --out " + q(dir_.file("e.json"))), 0);
  const auto ev = nlohmann::json::parse(detail::read_text(dir_.file("e.json")));
  EXPECT_GT(ev.at("excluded").at("mf1").get<double>(), 0.5);
  EXPECT_EQ(cli("report --runs " + q(dir_.str() + "/runs/*.jsonl") + " --format csv --out " +
                q(dir_.file("t.csv"))),
            0);
  EXPECT_EQ(detail::read_text(dir_.file("t.csv")).rfind("sheet,method,k,mf1,mean_iou\n", 0), 0u);
}

TEST_F(CliTest, CropsWritesManifest) {
  EXPECT_EQ(cli("crops --index " + q(disk_.index) + " --split " + q(disk_.split) +
                " --k 3 --seed 1 --out-dir " + q(dir_.file("crops"))),
            0);
  const auto m = nlohmann::json::parse(detail::read_text(dir_.file("crops/manifest.json")));
  EXPECT_EQ(m.at("crops").size(), 6u);
  for (const auto& c : m["crops"]) {
    EXPECT_TRUE(std::filesystem::exists(dir_.file("crops/" + c.at("file").get<std::string>())));
  }
  EXPECT_EQ(cli("crops --index " + q(disk_.index) + " --split " + q(disk_.split) +
                " --k 2 --out-dir " + q(dir_.file("crops"))),
            1);
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(cli("run --config " + q(write_config("bad.json", {{"k", 3}}))), 1);
  EXPECT_EQ(cli("run --config " + q(dir_.file("missing.json"))), 3);
  EXPECT_EQ(cli("evaluate --run " + q(dir_.file("missing.jsonl"))), 3);
  EXPECT_EQ(cli("bogus"), 1);
  EXPECT_EQ(cli("split"), 1);
  EXPECT_EQ(cli("split --index " + q(disk_.index) + " --m-exp 100 --n-exp 3 --n-test 7"), 1);
  const std::string dead = write_config(
      "dead.json", {{"backends", {{"detector", {{"oracle", nullptr},
                                                {"http", {{"endpoint", "http://127.0.0.1:1"},
                                                          {"max_retries", 0},
                                                          {"timeout_s", 1}}}}}}}});
  EXPECT_EQ(cli("run --config " + q(dead) + " --out " + q(dir_.file("dead.jsonl"))), 2);
  EXPECT_EQ(cli("report --runs " + q(dir_.file("nothing*.jsonl"))), 3);
}

}  // namespace
}  // namespace fsod
