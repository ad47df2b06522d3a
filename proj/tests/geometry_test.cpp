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

#include "fsod/geometry.hpp"

#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"

namespace fsod {
namespace {

TEST(AreaTest, Examples) {
  EXPECT_EQ(area({0, 0, 10, 10}), 100.0);
  EXPECT_EQ(area({0, 0, 1, 1}), 1.0);
  EXPECT_EQ(area({2, 3, 7, 5}), 10.0);
}

TEST(IouTest, Examples) {
  EXPECT_EQ(iou({1, 2, 30, 40}, {1, 2, 30, 40}), 1.0);
  EXPECT_EQ(iou({0, 0, 10, 10}, {20, 20, 30, 30}), 0.0);
  // Touching edges share no area.
  EXPECT_EQ(iou({0, 0, 10, 10}, {10, 0, 20, 10}), 0.0);
  EXPECT_DOUBLE_EQ(iou({0, 0, 10, 10}, {5, 0, 15, 10}), 1.0 / 3.0);
}

TEST(IouTest, MatchesPixelCountingOnIntegerBoxes) {
  std::mt19937 rng(3);
  std::uniform_int_distribution<int> coord(0, 20);
  for (int n = 0; n < 300; ++n) {
    int a[4], b[4];
    for (int* box : {a, b}) {
      do {
        for (int k = 0; k < 4; ++k) box[k] = coord(rng);
      } while (box[0] >= box[2] || box[1] >= box[3]);
    }
    const double want =
        oracle::pixel_count_iou(a[0], a[1], a[2], a[3], b[0], b[1], b[2], b[3]);
    EXPECT_NEAR(iou({double(a[0]), double(a[1]), double(a[2]), double(a[3])},
                    {double(b[0]), double(b[1]), double(b[2]), double(b[3])}),
                want, 1e-12);
  }
}

BBox random_box(std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-50.0, 150.0);
  BBox b;
  do {
    b = {u(rng), u(rng), u(rng), u(rng)};
  } while (!is_valid(b));
  return b;
}

TEST(IouTest, Properties) {
  std::mt19937 rng(11);
  for (int n = 0; n < 2000; ++n) {
    const BBox a = random_box(rng);
    const BBox b = random_box(rng);
    const double ab = iou(a, b);
    EXPECT_EQ(ab, iou(b, a));
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
    EXPECT_EQ(iou(a, a), 1.0);
  }
}

TEST(IouTest, ContainmentMonotonicity) {
  // b inside b' inside a  =>  iou(a, b) <= iou(a, b').
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> frac(0.0, 0.45);
  for (int n = 0; n < 1000; ++n) {
    const BBox a = random_box(rng);
    auto shrink = [&](const BBox& o) {
      const double w = o.width(), h = o.height();
      return BBox{o.x_min + frac(rng) * w, o.y_min + frac(rng) * h,
                  o.x_max - frac(rng) * w, o.y_max - frac(rng) * h};
    };
    const BBox outer = shrink(a);
    const BBox inner = shrink(outer);
    EXPECT_LE(iou(a, inner), iou(a, outer) + 1e-15);
  }
}

TEST(ClipTest, Examples) {
  const ImageDims d{100, 100};
  EXPECT_EQ(clip({-5, -5, 5, 5}, d), (BBox{0, 0, 5, 5}));
  EXPECT_EQ(clip({10, 20, 30, 40}, d), (BBox{10, 20, 30, 40}));
  EXPECT_FALSE(clip({200, 200, 300, 300}, d).has_value());
  // Clipped to a zero-width sliver counts as empty.
  EXPECT_FALSE(clip({100, 10, 120, 20}, d).has_value());
}

TEST(ClipTest, Idempotent) {
  std::mt19937 rng(17);
  const ImageDims d{100, 80};
  for (int n = 0; n < 500; ++n) {
    const auto once = clip(random_box(rng), d);
    if (!once) continue;
    EXPECT_EQ(clip(*once, d), once);
  }
}

TEST(CropRegionTest, Examples) {
  const ImageDims d{100, 100};
  EXPECT_EQ(crop_region({10, 10, 20, 20}, d, 0.0), (BBox{10, 10, 20, 20}));
  EXPECT_EQ(crop_region({-3, 10, 20, 20}, d, 0.0), (BBox{0, 10, 20, 20}));
  EXPECT_EQ(crop_region({10, 10, 20, 20}, d, 0.1), (BBox{9, 9, 21, 21}));
  EXPECT_EQ(crop_region({0, 0, 10, 10}, d, 0.5), (BBox{0, 0, 15, 15}));
  // Padding uses the longer side on both axes.
  EXPECT_EQ(crop_region({10, 10, 30, 20}, d, 0.1), (BBox{8, 8, 32, 22}));
}

TEST(CropRegionTest, Errors) {
  EXPECT_THROW(crop_region({200, 200, 210, 210}, {100, 100}, 0.1),
               ValidationError);
  EXPECT_THROW(crop_region({0, 0, 10, 10}, {100, 100}, -0.1), ValidationError);
}

TEST(ValidationTest, RejectsDegenerateBoxes) {
  EXPECT_THROW(require_valid({0, 0, 0, 10}, "ann"), ValidationError);
  EXPECT_THROW(require_valid({5, 0, 1, 10}, "ann"), ValidationError);
  EXPECT_THROW(require_valid({0, 0, NAN, 10}, "ann"), ValidationError);
  EXPECT_NO_THROW(require_valid({0, 0, 0.5, 0.5}, "ann"));
  EXPECT_EQ(from_xywh(2, 3, 5, 2), (BBox{2, 3, 7, 5}));
}

}  // namespace
}  // namespace fsod
