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

#include "fsod/matching.hpp"

#include <gtest/gtest.h>

#include <random>
#include <set>

#include "oracles.hpp"

namespace fsod {
namespace {

std::vector<std::vector<double>> random_matrix(std::mt19937& rng,
                                               std::size_t rows,
                                               std::size_t cols) {
  std::uniform_int_distribution<int> v(0, 20);
  std::vector<std::vector<double>> m(rows, std::vector<double>(cols));
  for (auto& r : m) {
    for (auto& x : r) x = v(rng) / 4.0;
  }
  return m;
}

void expect_one_to_one(const Assignment& a, std::size_t rows,
                       std::size_t cols) {
  std::set<std::size_t> rs, cs;
  for (const auto& p : a) {
    EXPECT_LT(p.row, rows);
    EXPECT_LT(p.col, cols);
    EXPECT_TRUE(rs.insert(p.row).second);
    EXPECT_TRUE(cs.insert(p.col).second);
  }
  EXPECT_EQ(a.size(), std::min(rows, cols));
}

TEST(HungarianTest, Examples) {
  const auto c = CostMatrix::from_rows({{4, 1}, {2, 3}});
  const Assignment a = hungarian(c);
  EXPECT_EQ(a, (Assignment{{0, 1}, {1, 0}}));
  EXPECT_EQ(assignment_cost(c, a), 3.0);

  EXPECT_EQ(hungarian(CostMatrix::from_rows({{0, 9}, {9, 0}})),
            (Assignment{{0, 0}, {1, 1}}));
  EXPECT_EQ(hungarian(CostMatrix::from_rows({{5, 2, 7}})),
            (Assignment{{0, 1}}));
  EXPECT_EQ(hungarian(CostMatrix::from_rows({{5}, {2}, {7}})),
            (Assignment{{1, 0}}));
}

TEST(HungarianTest, EmptyMatrixGivesEmptyAssignment) {
  EXPECT_TRUE(hungarian(CostMatrix{}).empty());
  EXPECT_TRUE(hungarian(CostMatrix(0, 4)).empty());
  EXPECT_TRUE(hungarian(CostMatrix(3, 0)).empty());
}

TEST(HungarianTest, RejectsBadEntries) {
  EXPECT_THROW(CostMatrix::from_rows({{1, -1}}), ValidationError);
  EXPECT_THROW(CostMatrix::from_rows({{1, INFINITY}}), ValidationError);
  EXPECT_THROW(CostMatrix::from_rows({{1, 2}, {3}}), ValidationError);
}

TEST(HungarianTest, TiesResolveToLowestIndex) {
  const auto c = CostMatrix::from_rows({{1, 1, 1}, {1, 1, 1}});
  EXPECT_EQ(hungarian(c), (Assignment{{0, 0}, {1, 1}}));
  EXPECT_EQ(hungarian(c), hungarian(c));
}

TEST(HungarianTest, MatchesBruteForceUpTo7x7) {
  std::mt19937 rng(2024);
  for (int n = 0; n < 400; ++n) {
    const std::size_t rows = 1 + rng() % 7, cols = 1 + rng() % 7;
    const auto m = random_matrix(rng, rows, cols);
    const auto c = CostMatrix::from_rows(m);
    const Assignment a = hungarian(c);
    expect_one_to_one(a, rows, cols);
    EXPECT_DOUBLE_EQ(assignment_cost(c, a),
                     oracle::brute_force_assignment_cost(m))
        << rows << "x" << cols;
  }
}

TEST(HungarianTest, RowShiftKeepsPairing) {
  // Continuous entries make ties improbable; the shifted row keeps its match.
  std::mt19937 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int n = 0; n < 200; ++n) {
    const std::size_t rows = 1 + rng() % 6, cols = rows + rng() % 2;
    std::vector<std::vector<double>> m(rows, std::vector<double>(cols));
    for (auto& r : m) {
      for (auto& x : r) x = u(rng);
    }
    const Assignment base = hungarian(CostMatrix::from_rows(m));
    auto shifted = m;
    const std::size_t r = rng() % rows;
    for (auto& x : shifted[r]) x += 3.5;
    EXPECT_EQ(hungarian(CostMatrix::from_rows(shifted)), base);
  }
}

Annotation gt(double x0, double y0, double x1, double y1,
              const std::string& label) {
  return {1, {x0, y0, x1, y1}, label};
}

Detection det(double x0, double y0, double x1, double y1,
              const std::string& label) {
  return {{x0, y0, x1, y1}, label, std::nullopt, true};
}

TEST(MatchDetectionsTest, IdentityIsAllTruePositives) {
  const std::vector<Annotation> gts{gt(0, 0, 10, 10, "a"), gt(20, 20, 40, 35, "b"),
                                    gt(50, 0, 60, 8, "a")};
  std::vector<Detection> preds;
  for (const auto& g : gts) preds.push_back({g.bbox, g.class_label, 0.9, true});
  for (double tau : {0.05, 0.5, 1.0}) {
    const auto o = match_detections(preds, gts, tau);
    ASSERT_EQ(o.tp.size(), 3u);
    EXPECT_TRUE(o.fp.empty());
    EXPECT_TRUE(o.fn.empty());
    for (const auto& p : o.tp) {
      EXPECT_EQ(p.iou, 1.0);
      EXPECT_EQ(p.prediction, p.ground_truth);
    }
  }
}

TEST(MatchDetectionsTest, FlippedLabelsNeverMatch) {
  const std::vector<Annotation> gts{gt(0, 0, 10, 10, "a"), gt(20, 20, 40, 35, "b")};
  const std::vector<Detection> preds{det(0, 0, 10, 10, "b"),
                                     det(20, 20, 40, 35, "a")};
  for (double tau : {0.05, 0.5, 0.7}) {
    const auto o = match_detections(preds, gts, tau);
    EXPECT_TRUE(o.tp.empty());
    EXPECT_EQ(o.fp.size(), 2u);
    EXPECT_EQ(o.fn.size(), 2u);
  }
}

TEST(MatchDetectionsTest, OneToOne) {
  const std::vector<Annotation> gts{gt(0, 0, 10, 10, "a")};
  const std::vector<Detection> preds{det(0, 0, 10, 10, "a"), det(0, 0, 10, 10, "a")};
  const auto o = match_detections(preds, gts, 0.5);
  EXPECT_EQ(o.tp.size(), 1u);
  EXPECT_EQ(o.fp.size(), 1u);
  EXPECT_TRUE(o.fn.empty());
}

TEST(MatchDetectionsTest, OutOfVocabularyIsFalsePositive) {
  const std::vector<Annotation> gts{gt(0, 0, 10, 10, "rbc")};
  Detection d = det(0, 0, 10, 10, "rbc");
  d.in_vocab = false;
  const auto o = match_detections(std::vector<Detection>{d}, gts, 0.5);
  EXPECT_TRUE(o.tp.empty());
  EXPECT_EQ(o.fp.size(), 1u);
  EXPECT_EQ(o.fn.size(), 1u);
}

TEST(MatchDetectionsTest, OptimalRatherThanGreedy) {
  // Greedy by IoU pairs p0 with g0 (2/3) and leaves p1 unmatched. The
  // minimum 1 - IoU assignment is p0-g1 (0.25) plus p1-g0 (0.5).
  const std::vector<Annotation> gts{gt(0, 0, 10, 10, "a"), gt(8, 0, 18, 10, "a")};
  const std::vector<Detection> preds{det(2, 0, 12, 10, "a"), det(-2, 0, 6, 10, "a")};
  const auto o = match_detections(preds, gts, 0.2);
  ASSERT_EQ(o.tp.size(), 2u);
  EXPECT_DOUBLE_EQ(o.tp[0].iou, 0.25);
  EXPECT_DOUBLE_EQ(o.tp[1].iou, 0.5);
}

TEST(MatchDetectionsTest, EmptyInputs) {
  const std::vector<Detection> none;
  const std::vector<Annotation> no_gt;
  auto o = match_detections(none, no_gt, 0.5);
  EXPECT_TRUE(o.tp.empty() && o.fp.empty() && o.fn.empty());
  o = match_detections(none, std::vector<Annotation>{gt(0, 0, 1, 1, "a")}, 0.5);
  EXPECT_EQ(o.fn.size(), 1u);
  EXPECT_THROW(match_detections(none, no_gt, 0.0), ValidationError);
  EXPECT_THROW(match_detections(none, no_gt, 1.5), ValidationError);
}

TEST(MatchDetectionsTest, TruePositivesNestAcrossThresholds) {
  std::mt19937 rng(8);
  std::uniform_real_distribution<double> pos(0, 80), size(5, 20), jit(-6, 6);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Annotation> gts;
    std::vector<Detection> preds;
    for (int k = 0; k < 12; ++k) {
      const double x = pos(rng), y = pos(rng), w = size(rng), h = size(rng);
      const std::string label = k % 3 == 0 ? "a" : "b";
      gts.push_back(gt(x, y, x + w, y + h, label));
      if (rng() % 4 != 0) {
        const double dx = jit(rng), dy = jit(rng);
        preds.push_back(det(x + dx, y + dy, x + w + dx, y + h + dy, label));
      }
    }
    const ImageMatch m = match_image(preds, gts);
    std::set<std::pair<std::size_t, std::size_t>> prev;
    bool first = true;
    for (double tau = 0.05; tau <= 0.95; tau += 0.05) {
      const auto o = outcome_at(m, tau);
      EXPECT_EQ(o.tp.size() + o.fp.size(), preds.size());
      EXPECT_EQ(o.tp.size() + o.fn.size(), gts.size());
      std::set<std::pair<std::size_t, std::size_t>> cur;
      for (const auto& p : o.tp) {
        EXPECT_GE(p.iou, tau);
        EXPECT_EQ(preds[p.prediction].class_label, gts[p.ground_truth].class_label);
        cur.insert({p.prediction, p.ground_truth});
      }
      if (!first) {
        EXPECT_TRUE(std::includes(prev.begin(), prev.end(), cur.begin(), cur.end()));
      }
      prev = cur;
      first = false;
    }
  }
}

}  // namespace
}  // namespace fsod
