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

// Optimal one-to-one assignment (Hungarian / shortest augmenting path) and
// class-restricted prediction-to-ground-truth matching.

#ifndef FSOD_MATCHING_HPP_
#define FSOD_MATCHING_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fsod/errors.hpp"
#include "fsod/geometry.hpp"
#include "fsod/labeled_box.hpp"

namespace fsod {

// Dense row-major matrix of non-negative finite costs. Rows are predictions,
// columns are ground truths; any rectangular shape is allowed.
class CostMatrix {
 public:
  CostMatrix() = default;
  CostMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  CostMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ValidationError("cost matrix data size does not match its shape");
    }
    for (double v : data_) check_entry(v);
  }
  static CostMatrix from_rows(
      const std::vector<std::vector<double>>& rows) {
    const std::size_t n = rows.size();
    const std::size_t m = n == 0 ? 0 : rows.front().size();
    std::vector<double> data;
    data.reserve(n * m);
    for (const auto& r : rows) {
      if (r.size() != m) throw ValidationError("ragged cost matrix");
      data.insert(data.end(), r.begin(), r.end());
    }
    return CostMatrix(n, m, std::move(data));
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0 || cols_ == 0; }

  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }
  void set(std::size_t r, std::size_t c, double v) {
    check_entry(v);
    data_[r * cols_ + c] = v;
  }

 private:
  static void check_entry(double v) {
    if (!std::isfinite(v) || v < 0.0) {
      throw ValidationError("cost matrix entries must be finite and >= 0");
    }
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct AssignedPair {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const AssignedPair&, const AssignedPair&) = default;
};

// Sorted by row. Holds exactly min(rows, cols) pairs.
using Assignment = std::vector<AssignedPair>;

inline double assignment_cost(const CostMatrix& c, const Assignment& a) {
  double total = 0.0;
  for (const auto& p : a) total += c(p.row, p.col);
  return total;
}

namespace detail {

// Shortest augmenting path with dual potentials for n <= m. Solving the
// rectangular problem directly is equivalent to padding with dummy rows whose
// cost exceeds every real entry and then dropping the dummy pairs. Ties go to
// the lowest column index because candidates are scanned in index order and
// only strictly smaller reduced costs replace the incumbent.
template <typename CostFn>
std::vector<std::size_t> augmenting_path_assign(std::size_t n, std::size_t m,
                                                CostFn cost) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  // 1-based with slot 0 as the virtual source.
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> owner(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    owner[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = owner[j0];
      double delta = kInf;
      std::size_t j1 = kNone;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (owner[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      owner[j0] = owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> col_of_row(n, kNone);
  for (std::size_t j = 1; j <= m; ++j) {
    if (owner[j] != 0) col_of_row[owner[j] - 1] = j - 1;
  }
  return col_of_row;
}

}  // namespace detail

// Minimum-total-cost assignment. Empty matrices yield an empty assignment.
inline Assignment hungarian(const CostMatrix& c) {
  Assignment out;
  if (c.empty()) return out;
  if (c.rows() <= c.cols()) {
    const auto col_of_row = detail::augmenting_path_assign(
        c.rows(), c.cols(),
        [&c](std::size_t r, std::size_t k) { return c(r, k); });
    for (std::size_t r = 0; r < col_of_row.size(); ++r) {
      out.push_back({r, col_of_row[r]});
    }
  } else {
    const auto row_of_col = detail::augmenting_path_assign(
        c.cols(), c.rows(),
        [&c](std::size_t k, std::size_t r) { return c(r, k); });
    for (std::size_t k = 0; k < row_of_col.size(); ++k) {
      out.push_back({row_of_col[k], k});
    }
    std::sort(out.begin(), out.end(),
              [](const AssignedPair& a, const AssignedPair& b) {
                return a.row < b.row;
              });
  }
  return out;
}

struct MatchedPair {
  std::size_t prediction = 0;
  std::size_t ground_truth = 0;
  double iou = 0.0;
};

// Threshold-independent matching of one image. Each class is an independent
// assignment problem on cost 1 - IoU; the pairs are computed once and filtered
// by IoU for every threshold, so TP sets are nested across thresholds.
struct ImageMatch {
  std::vector<std::string> prediction_labels;
  std::vector<std::string> ground_truth_labels;
  std::vector<MatchedPair> pairs;  // only pairs with IoU > 0

  std::size_t num_predictions() const { return prediction_labels.size(); }
  std::size_t num_ground_truths() const { return ground_truth_labels.size(); }
};

struct MatchOutcome {
  double threshold = 0.0;
  std::vector<MatchedPair> tp;
  std::vector<std::size_t> fp;  // prediction indices
  std::vector<std::size_t> fn;  // ground-truth indices
};

inline ImageMatch match_image(std::span<const Detection> preds,
                              std::span<const Annotation> gts) {
  ImageMatch m;
  m.prediction_labels.reserve(preds.size());
  m.ground_truth_labels.reserve(gts.size());
  std::map<std::string, std::pair<std::vector<std::size_t>,
                                  std::vector<std::size_t>>>
      by_class;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    m.prediction_labels.push_back(preds[i].class_label);
    if (preds[i].in_vocab) by_class[preds[i].class_label].first.push_back(i);
  }
  for (std::size_t j = 0; j < gts.size(); ++j) {
    m.ground_truth_labels.push_back(gts[j].class_label);
    by_class[gts[j].class_label].second.push_back(j);
  }
  for (const auto& [label, idx] : by_class) {
    const auto& [pi, gi] = idx;
    if (pi.empty() || gi.empty()) continue;
    CostMatrix cost(pi.size(), gi.size());
    std::vector<double> ious(pi.size() * gi.size());
    for (std::size_t r = 0; r < pi.size(); ++r) {
      for (std::size_t c = 0; c < gi.size(); ++c) {
        const double v = iou(preds[pi[r]].bbox, gts[gi[c]].bbox);
        ious[r * gi.size() + c] = v;
        cost.set(r, c, 1.0 - v);
      }
    }
    for (const auto& p : hungarian(cost)) {
      const double v = ious[p.row * gi.size() + p.col];
      if (v > 0.0) m.pairs.push_back({pi[p.row], gi[p.col], v});
    }
  }
  std::sort(m.pairs.begin(), m.pairs.end(),
            [](const MatchedPair& a, const MatchedPair& b) {
              return a.prediction < b.prediction;
            });
  return m;
}

inline MatchOutcome outcome_at(const ImageMatch& m, double threshold) {
  MatchOutcome out;
  out.threshold = threshold;
  std::vector<char> pred_hit(m.num_predictions(), 0);
  std::vector<char> gt_hit(m.num_ground_truths(), 0);
  for (const auto& p : m.pairs) {
    if (p.iou >= threshold) {
      out.tp.push_back(p);
      pred_hit[p.prediction] = 1;
      gt_hit[p.ground_truth] = 1;
    }
  }
  for (std::size_t i = 0; i < pred_hit.size(); ++i) {
    if (!pred_hit[i]) out.fp.push_back(i);
  }
  for (std::size_t j = 0; j < gt_hit.size(); ++j) {
    if (!gt_hit[j]) out.fn.push_back(j);
  }
  return out;
}

// Convenience: match and threshold in one step.
inline MatchOutcome match_detections(std::span<const Detection> preds,
                                     std::span<const Annotation> gts,
                                     double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw ValidationError("IoU threshold must lie in (0, 1]");
  }
  return outcome_at(match_image(preds, gts), threshold);
}

}  // namespace fsod

#endif  // FSOD_MATCHING_HPP_
