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

// Axis-aligned box arithmetic in corner form (x_min, y_min, x_max, y_max).
// Coordinates are real-valued pixels with the origin at the top-left corner;
// there is no +1 pixel-grid convention.

#ifndef FSOD_GEOMETRY_HPP_
#define FSOD_GEOMETRY_HPP_

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <string>

#include "fsod/errors.hpp"

namespace fsod {

struct BBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }

  friend bool operator==(const BBox&, const BBox&) = default;
};

inline std::ostream& operator<<(std::ostream& os, const BBox& b) {
  return os << "(" << b.x_min << "," << b.y_min << "," << b.x_max << ","
            << b.y_max << ")";
}

struct ImageDims {
  int width = 0;
  int height = 0;

  friend bool operator==(const ImageDims&, const ImageDims&) = default;
};

inline bool is_finite(const BBox& b) {
  return std::isfinite(b.x_min) && std::isfinite(b.y_min) &&
         std::isfinite(b.x_max) && std::isfinite(b.y_max);
}

// Finite with strictly positive extent on both axes.
inline bool is_valid(const BBox& b) {
  return is_finite(b) && b.x_min < b.x_max && b.y_min < b.y_max;
}

inline bool is_valid(const ImageDims& d) { return d.width >= 1 && d.height >= 1; }

inline BBox from_xywh(double x, double y, double w, double h) {
  return BBox{x, y, x + w, y + h};
}

// Throws ValidationError with `context` prepended when the box is degenerate.
inline void require_valid(const BBox& b, const std::string& context) {
  if (!is_finite(b)) {
    throw ValidationError(context + ": non-finite box coordinate");
  }
  if (!(b.x_min < b.x_max && b.y_min < b.y_max)) {
    throw ValidationError(context + ": degenerate box (zero or negative area)");
  }
}

inline double area(const BBox& b) {
  return std::max(0.0, b.width()) * std::max(0.0, b.height());
}

inline double intersection_area(const BBox& a, const BBox& b) {
  const double w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

inline double iou(const BBox& a, const BBox& b) {
  if (a == b) return 1.0;
  const double inter = intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  const double uni = area(a) + area(b) - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

// Intersection with [0,width]x[0,height]; nullopt when nothing of positive
// area remains.
inline std::optional<BBox> clip(const BBox& b, const ImageDims& dims) {
  BBox out{std::clamp(b.x_min, 0.0, static_cast<double>(dims.width)),
           std::clamp(b.y_min, 0.0, static_cast<double>(dims.height)),
           std::clamp(b.x_max, 0.0, static_cast<double>(dims.width)),
           std::clamp(b.y_max, 0.0, static_cast<double>(dims.height))};
  if (!(out.x_min < out.x_max && out.y_min < out.y_max)) return std::nullopt;
  return out;
}

inline constexpr double kDefaultCropMargin = 0.1;

// Expands `b` by margin * max(width, height) on every edge, then clips.
inline BBox crop_region(const BBox& b, const ImageDims& dims,
                        double margin = kDefaultCropMargin) {
  if (!(margin >= 0.0) || !std::isfinite(margin)) {
    throw ValidationError("crop margin must be a finite value >= 0");
  }
  const double pad = margin * std::max(b.width(), b.height());
  const auto clipped =
      clip(BBox{b.x_min - pad, b.y_min - pad, b.x_max + pad, b.y_max + pad},
           dims);
  if (!clipped) {
    throw ValidationError("crop region is empty after clipping to the image");
  }
  return *clipped;
}

// Integer pixel window covering a real-valued box: floor of the min corner,
// ceil of the max corner, clamped to the image.
struct PixelRect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open [x0,x1) x [y0,y1)
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
};

inline PixelRect pixel_rect(const BBox& b, const ImageDims& dims) {
  PixelRect r;
  r.x0 = std::clamp(static_cast<int>(std::floor(b.x_min)), 0, dims.width);
  r.y0 = std::clamp(static_cast<int>(std::floor(b.y_min)), 0, dims.height);
  r.x1 = std::clamp(static_cast<int>(std::ceil(b.x_max)), 0, dims.width);
  r.y1 = std::clamp(static_cast<int>(std::ceil(b.y_max)), 0, dims.height);
  return r;
}

}  // namespace fsod

#endif  // FSOD_GEOMETRY_HPP_
