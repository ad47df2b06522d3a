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

// Shared fixtures: random split instances and synthetic corpora shaped like
// the four-source microscopy benchmark (63 images per source, 10 example +
// 53 test, per-class box totals of the published split).

#ifndef FSOD_TESTS_FIXTURES_HPP_
#define FSOD_TESTS_FIXTURES_HPP_

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "fsod/dataset.hpp"
#include "fsod/split_file.hpp"
#include "fsod/split_optimizer.hpp"

namespace fsod::testing {

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("fsod_test_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  std::string str() const { return path_.string(); }

 private:
  std::filesystem::path path_;
};

// A synthetic corpus written to disk with a split computed over it.
struct DiskCorpus {
  SynthCorpus corpus;
  std::string index;
  std::string split;
};

inline DiskCorpus write_corpus_with_split(const std::string& dir, const SynthSpec& spec,
                                          const SplitConstraints& cons, int trials = 5) {
  DiskCorpus out{synth_fixture(spec), dir + "/index.json", dir + "/split.jsonl"};
  write_corpus(out.corpus, dir);
  SplitFile f;
  const SeedSearchConfig search{trials, 0};
  for (const auto& src : out.corpus.index.sources()) {
    const auto inst = make_split_instance(out.corpus.index, src);
    f.add(inst, cons, search, solve(inst, cons, search));
  }
  f.save(out.split);
  return out;
}

// Random instance with `images` images and `classes` classes whose totals
// clear m_exp + m_test for every class. Feasibility still needs checking.
inline SplitInstance random_split_instance(std::mt19937_64& rng, int images,
                                           int classes,
                                           const SplitConstraints& cons) {
  SplitInstance inst;
  inst.source = "random";
  for (int c = 0; c < classes; ++c) inst.classes.push_back("class" + std::to_string(c));
  for (;;) {
    inst.images.clear();
    for (int i = 0; i < images; ++i) {
      SplitImage im{i + 1, std::vector<int>(classes, 0)};
      for (int c = 0; c < classes; ++c) {
        if (rng() % 4 != 0) im.counts[c] = static_cast<int>(rng() % 9);
      }
      inst.images.push_back(std::move(im));
    }
    bool ok = true;
    for (auto t : inst.class_totals()) ok = ok && t >= cons.m_exp + cons.m_test;
    if (ok) return inst;
  }
}

inline std::vector<std::vector<int>> count_rows(const SplitInstance& inst) {
  std::vector<std::vector<int>> rows;
  for (const auto& im : inst.images) rows.push_back(im.counts);
  return rows;
}

struct TableOneSource {
  std::string name;
  std::vector<SynthClass> classes;  // count = test + example boxes
};

// Class skeleton of the benchmark: per-class totals are reference + support
// counts. Rare classes are clustered on a few images.
inline std::vector<TableOneSource> table_one_sources() {
  return {
      {"bccd",
       {{"Platelets", 159 + 10, 30},
        {"Red Blood Cells", 737 + 58, 0},
        {"White Blood Cells", 56 + 10, 30}}},
      {"bbbc",
       {{"Gametocyte Cells", 24 + 6, 14},
        {"Red Blood Cells", 3690 + 684, 0},
        {"Ring Cells", 34 + 6, 14},
        {"Schizont Cells", 10 + 6, 12},
        {"Trophozoite Cells", 193 + 26, 30},
        {"White Blood Cells", 49 + 6, 20}}},
      {"nih3t3",
       {{"Polygonal Cells", 303 + 43, 0},
        {"Round Cells", 11 + 6, 10},
        {"Spindle Cells", 62 + 13, 30}}},
      {"livecell",
       {{"Polygonal Cells", 114 + 15, 0},
        {"Round Cells", 13 + 6, 10},
        {"Spindle Cells", 96 + 19, 30}}},
  };
}

inline SynthSpec table_one_spec(const TableOneSource& src, std::uint64_t seed,
                                ImageId first_id) {
  SynthSpec spec;
  spec.source = src.name;
  spec.classes = src.classes;
  spec.num_images = 63;
  spec.seed = seed;
  spec.first_image_id = first_id;
  return spec;
}

}  // namespace fsod::testing

#endif  // FSOD_TESTS_FIXTURES_HPP_
