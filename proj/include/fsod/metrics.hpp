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

// Precision / recall / F1 over an IoU threshold sweep, mF1, and the mean IoU
// of true positives at the 0.5 anchor. Counts are pooled (micro) within a
// group; groups are combined either by pooling or by unweighted macro mean.

#ifndef FSOD_METRICS_HPP_
#define FSOD_METRICS_HPP_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fsod/errors.hpp"
#include "fsod/labeled_box.hpp"
#include "fsod/matching.hpp"

namespace fsod {

// `count` values evenly spaced over [first, last], both endpoints exact.
inline std::vector<double> linspace_thresholds(std::size_t count, double first,
                                               double last) {
  if (count < 2) throw ValidationError("threshold sweep needs >= 2 values");
  std::vector<double> t(count);
  const double step = (last - first) / static_cast<double>(count - 1);
  for (std::size_t i = 0; i < count; ++i) {
    t[i] = first + step * static_cast<double>(i);
  }
  t.front() = first;
  t.back() = last;
  return t;
}

struct MetricConfig {
  std::vector<double> thresholds = linspace_thresholds(50, 0.05, 0.70);
  double tp_iou_anchor = 0.5;
  // Predictions whose label is outside the vocabulary count as false
  // positives by default; set to drop them before matching instead.
  bool drop_invalid_labels = false;
};

struct Counts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;

  Counts& operator+=(const Counts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  friend bool operator==(const Counts&, const Counts&) = default;
};

inline double precision(const Counts& c) {
  return c.tp + c.fp == 0 ? 0.0
                          : static_cast<double>(c.tp) /
                                static_cast<double>(c.tp + c.fp);
}

inline double recall(const Counts& c) {
  return c.tp + c.fn == 0 ? 0.0
                          : static_cast<double>(c.tp) /
                                static_cast<double>(c.tp + c.fn);
}

// Harmonic mean of precision and recall; 0 when tp == 0.
inline double f1(std::int64_t tp, std::int64_t fp, std::int64_t fn) {
  if (tp < 0 || fp < 0 || fn < 0) {
    throw ValidationError("detection counts must be non-negative");
  }
  if (tp == 0) return 0.0;
  const double p = static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double r = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return 2.0 * p * r / (p + r);
}

inline double f1(const Counts& c) { return f1(c.tp, c.fp, c.fn); }

// Additive tallies for one group. Merging is associative and commutative so
// images may be folded in any order or in parallel.
struct PooledCounts {
  std::vector<Counts> per_threshold;
  std::map<std::string, std::vector<Counts>> per_class;
  double anchor_iou_sum = 0.0;
  std::int64_t anchor_tp = 0;
  std::int64_t images = 0;

  explicit PooledCounts(std::size_t num_thresholds = 0)
      : per_threshold(num_thresholds) {}

  void merge(const PooledCounts& o) {
    if (per_threshold.size() != o.per_threshold.size()) {
      throw ValidationError("cannot merge counts over different sweeps");
    }
    for (std::size_t i = 0; i < per_threshold.size(); ++i) {
      per_threshold[i] += o.per_threshold[i];
    }
    for (const auto& [label, v] : o.per_class) {
      auto& mine = per_class[label];
      if (mine.empty()) mine.resize(v.size());
      for (std::size_t i = 0; i < v.size(); ++i) mine[i] += v[i];
    }
    anchor_iou_sum += o.anchor_iou_sum;
    anchor_tp += o.anchor_tp;
    images += o.images;
  }
};

// Matches one image and folds its outcome at every threshold into `acc`.
inline void accumulate_image(PooledCounts& acc, const MetricConfig& cfg,
                             std::span<const Detection> preds,
                             std::span<const Annotation> gts) {
  std::vector<Detection> kept;
  if (cfg.drop_invalid_labels) {
    for (const auto& d : preds) {
      if (d.in_vocab) kept.push_back(d);
    }
    preds = kept;
  }
  const ImageMatch m = match_image(preds, gts);
  const std::size_t nt = cfg.thresholds.size();
  auto class_row = [&](const std::string& label) -> std::vector<Counts>& {
    auto& row = acc.per_class[label];
    if (row.empty()) row.resize(nt);
    return row;
  };
  for (std::size_t t = 0; t < nt; ++t) {
    const MatchOutcome o = outcome_at(m, cfg.thresholds[t]);
    acc.per_threshold[t] += Counts{static_cast<std::int64_t>(o.tp.size()),
                                   static_cast<std::int64_t>(o.fp.size()),
                                   static_cast<std::int64_t>(o.fn.size())};
    for (const auto& p : o.tp) class_row(m.ground_truth_labels[p.ground_truth])[t].tp++;
    for (auto i : o.fp) class_row(m.prediction_labels[i])[t].fp++;
    for (auto j : o.fn) class_row(m.ground_truth_labels[j])[t].fn++;
  }
  for (const auto& p : m.pairs) {
    if (p.iou >= cfg.tp_iou_anchor) {
      acc.anchor_iou_sum += p.iou;
      acc.anchor_tp++;
    }
  }
  acc.images++;
}

struct ThresholdPoint {
  double threshold = 0.0;
  Counts counts;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct GroupKey {
  std::string dataset;
  std::string method;
  int k = 0;
  friend bool operator==(const GroupKey&, const GroupKey&) = default;
  friend auto operator<=>(const GroupKey&, const GroupKey&) = default;
};

enum class Pooling { kMicro, kMacro };

struct ClassBreakdown {
  std::string class_label;
  double mf1 = 0.0;
  Counts at_anchor;
};

struct MetricReport {
  GroupKey key;
  Pooling pooling = Pooling::kMicro;
  std::vector<ThresholdPoint> curve;
  double mf1 = 0.0;
  double mean_iou_tp = 0.0;
  // Zero ground-truth boxes and zero predictions: mF1 is undefined and
  // reported as 0.
  bool empty = false;
  std::int64_t images = 0;
  std::int64_t failed_images = 0;
  std::int64_t anchor_tp = 0;
  double anchor_iou_sum = 0.0;
  std::vector<ClassBreakdown> per_class;
  std::vector<std::string> members;  // datasets folded into a macro report
  PooledCounts pooled;
};

namespace detail {

inline double mean_f1(const std::vector<Counts>& row) {
  if (row.empty()) return 0.0;
  double s = 0.0;
  for (const auto& c : row) s += f1(c);
  return s / static_cast<double>(row.size());
}

inline std::size_t anchor_index(const MetricConfig& cfg) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < cfg.thresholds.size(); ++i) {
    if (std::abs(cfg.thresholds[i] - cfg.tp_iou_anchor) <
        std::abs(cfg.thresholds[best] - cfg.tp_iou_anchor)) {
      best = i;
    }
  }
  return best;
}

}  // namespace detail

// Turns pooled tallies into a report for one group.
inline MetricReport make_report(const GroupKey& key, const PooledCounts& pooled,
                                const MetricConfig& cfg) {
  MetricReport r;
  r.key = key;
  r.pooling = Pooling::kMicro;
  r.pooled = pooled;
  r.images = pooled.images;
  r.anchor_tp = pooled.anchor_tp;
  r.anchor_iou_sum = pooled.anchor_iou_sum;
  for (std::size_t t = 0; t < cfg.thresholds.size(); ++t) {
    const Counts& c = pooled.per_threshold[t];
    r.curve.push_back(
        {cfg.thresholds[t], c, precision(c), recall(c), f1(c)});
  }
  r.mf1 = detail::mean_f1(pooled.per_threshold);
  r.mean_iou_tp = pooled.anchor_tp == 0
                      ? 0.0
                      : pooled.anchor_iou_sum /
                            static_cast<double>(pooled.anchor_tp);
  if (!pooled.per_threshold.empty()) {
    const Counts& c0 = pooled.per_threshold.front();
    r.empty = c0.tp + c0.fp == 0 && c0.tp + c0.fn == 0;
  } else {
    r.empty = true;
  }
  // The anchor column reports counts at the sweep value closest to the
  // anchor; Mean IoU itself uses the exact anchor.
  const std::size_t ai = detail::anchor_index(cfg);
  for (const auto& [label, row] : pooled.per_class) {
    r.per_class.push_back({label, detail::mean_f1(row),
                           row.empty() ? Counts{} : row[ai]});
  }
  return r;
}

using DetectionsByImage = std::map<ImageId, std::vector<Detection>>;
using AnnotationsByImage = std::map<ImageId, std::vector<Annotation>>;

// Pools every image present in either map; a missing side is empty.
inline PooledCounts pool_images(const DetectionsByImage& preds,
                                const AnnotationsByImage& gts,
                                const MetricConfig& cfg) {
  PooledCounts acc(cfg.thresholds.size());
  const std::vector<Detection> no_preds;
  const std::vector<Annotation> no_gts;
  std::map<ImageId, char> ids;
  for (const auto& kv : preds) ids[kv.first] = 1;
  for (const auto& kv : gts) ids[kv.first] = 1;
  for (const auto& kv : ids) {
    const auto p = preds.find(kv.first);
    const auto g = gts.find(kv.first);
    accumulate_image(acc, cfg, p == preds.end() ? no_preds : p->second,
                     g == gts.end() ? no_gts : g->second);
  }
  return acc;
}

inline MetricReport evaluate_group(const GroupKey& key,
                                   const DetectionsByImage& preds,
                                   const AnnotationsByImage& gts,
                                   const MetricConfig& cfg = {}) {
  return make_report(key, pool_images(preds, gts, cfg), cfg);
}

inline double mf1(const DetectionsByImage& preds, const AnnotationsByImage& gts,
                  const MetricConfig& cfg = {}) {
  return evaluate_group({}, preds, gts, cfg).mf1;
}

inline double mean_iou_tp(const DetectionsByImage& preds,
                          const AnnotationsByImage& gts, double anchor = 0.5) {
  MetricConfig cfg;
  cfg.tp_iou_anchor = anchor;
  return evaluate_group({}, preds, gts, cfg).mean_iou_tp;
}

// Micro: pool counts of all reports (one dataset split into parts, or a
// benchmark-wide pooled number). Macro: unweighted mean of per-report values,
// used for the cross-dataset headline.
inline MetricReport aggregate(const std::vector<MetricReport>& reports,
                              Pooling scheme, const MetricConfig& cfg = {}) {
  if (reports.empty()) throw ValidationError("nothing to aggregate");
  const GroupKey& k0 = reports.front().key;
  for (const auto& r : reports) {
    if (r.key.method != k0.method || r.key.k != k0.k) {
      throw ValidationError("cannot aggregate reports of different method/K: " +
                            k0.method + "/K=" + std::to_string(k0.k) + " vs " +
                            r.key.method + "/K=" + std::to_string(r.key.k));
    }
    if (r.curve.size() != reports.front().curve.size()) {
      throw ValidationError("cannot aggregate reports of different sweeps");
    }
  }
  if (reports.size() == 1) return reports.front();

  GroupKey key = k0;
  bool same_dataset = true;
  for (const auto& r : reports) same_dataset &= r.key.dataset == k0.dataset;
  if (!same_dataset) key.dataset = "overall";

  if (scheme == Pooling::kMicro) {
    PooledCounts acc(cfg.thresholds.size());
    std::int64_t failed = 0;
    for (const auto& r : reports) {
      acc.merge(r.pooled);
      failed += r.failed_images;
    }
    MetricReport out = make_report(key, acc, cfg);
    out.failed_images = failed;
    for (const auto& r : reports) out.members.push_back(r.key.dataset);
    return out;
  }

  MetricReport out;
  out.key = key;
  out.pooling = Pooling::kMacro;
  out.pooled = PooledCounts(reports.front().curve.size());
  const double n = static_cast<double>(reports.size());
  out.curve = reports.front().curve;
  for (auto& p : out.curve) p = ThresholdPoint{p.threshold, {}, 0.0, 0.0, 0.0};
  out.empty = true;
  for (const auto& r : reports) {
    for (std::size_t t = 0; t < out.curve.size(); ++t) {
      out.curve[t].counts += r.curve[t].counts;
      out.curve[t].precision += r.curve[t].precision / n;
      out.curve[t].recall += r.curve[t].recall / n;
      out.curve[t].f1 += r.curve[t].f1 / n;
    }
    out.mf1 += r.mf1;
    out.mean_iou_tp += r.mean_iou_tp;
    out.images += r.images;
    out.failed_images += r.failed_images;
    out.anchor_tp += r.anchor_tp;
    out.anchor_iou_sum += r.anchor_iou_sum;
    out.empty = out.empty && r.empty;
    out.members.push_back(r.key.dataset);
    out.pooled.merge(r.pooled);
  }
  out.mf1 /= n;
  out.mean_iou_tp /= n;
  return out;
}

}  // namespace fsod

#endif  // FSOD_METRICS_HPP_
