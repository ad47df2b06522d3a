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

// Result tables: one sheet per dataset plus an overall sheet holding the
// unweighted mean over datasets. Rows are methods, columns K, and each cell
// holds {mF1, Mean IoU(TP@0.5)} rounded half-to-even to two decimals.

#ifndef FSOD_REPORT_HPP_
#define FSOD_REPORT_HPP_

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "fsod/errors.hpp"
#include "fsod/metrics.hpp"

namespace fsod {

inline constexpr const char* kMissingCell = "\u2014";

// Rounds the exact binary value of v half-to-even at `digits` decimals.
inline std::string round_half_even(double v, int digits = 2) {
  if (!std::isfinite(v)) throw ValidationError("cannot round a non-finite value");
  const bool neg = std::signbit(v);
  char buf[512];
  // 60 extra digits: deep enough that a tail of "5" followed by zeros is an
  // exact tie for any value in the table's range.
  std::snprintf(buf, sizeof(buf), "%.*f", digits + 60, std::fabs(v));
  std::string s(buf);
  const auto dot = s.find('.');
  std::string keep = s.substr(0, dot) + s.substr(dot + 1, static_cast<std::size_t>(digits));
  const std::string tail = s.substr(dot + 1 + static_cast<std::size_t>(digits));
  bool round_up = false;
  if (tail[0] > '5') {
    round_up = true;
  } else if (tail[0] == '5') {
    const bool beyond = tail.find_first_not_of('0', 1) != std::string::npos;
    round_up = beyond || ((keep.back() - '0') % 2 == 1);
  }
  if (round_up) {
    int i = static_cast<int>(keep.size()) - 1;
    while (i >= 0 && keep[static_cast<std::size_t>(i)] == '9') keep[static_cast<std::size_t>(i--)] = '0';
    if (i < 0) {
      keep.insert(keep.begin(), '1');
    } else {
      keep[static_cast<std::size_t>(i)]++;
    }
  }
  std::string out = keep.substr(0, keep.size() - static_cast<std::size_t>(digits));
  if (digits > 0) out += "." + keep.substr(keep.size() - static_cast<std::size_t>(digits));
  const bool zero = out.find_first_not_of("0.") == std::string::npos;
  return (neg && !zero ? "-" : "") + out;
}

struct ReportCell {
  double mf1 = 0.0;
  double mean_iou = 0.0;
};

struct ReportSheet {
  std::string title;  // dataset name or "overall"
  std::vector<std::string> methods;
  std::vector<int> ks;
  std::map<std::pair<std::string, int>, ReportCell> cells;
};

inline constexpr const char* kOverallSheet = "overall";

// The K columns always include 1, 3 and 6; K=0 appears when some report has
// it. An overall cell is filled only when every dataset has that cell.
inline std::vector<ReportSheet> build_report(const std::vector<MetricReport>& reports) {
  std::set<std::string> datasets, methods;
  std::set<int> ks{1, 3, 6};
  std::map<GroupKey, const MetricReport*> by_key;
  for (const auto& r : reports) {
    if (!by_key.emplace(r.key, &r).second) {
      throw ValidationError("two reports for dataset '" + r.key.dataset + "', method '" +
                            r.key.method + "', K=" + std::to_string(r.key.k));
    }
    datasets.insert(r.key.dataset);
    methods.insert(r.key.method);
    ks.insert(r.key.k);
  }
  std::vector<ReportSheet> sheets;
  for (const auto& d : datasets) {
    ReportSheet s{d, {methods.begin(), methods.end()}, {ks.begin(), ks.end()}, {}};
    for (const auto& [key, r] : by_key) {
      if (key.dataset == d) s.cells[{key.method, key.k}] = {r->mf1, r->mean_iou_tp};
    }
    sheets.push_back(std::move(s));
  }
  ReportSheet overall{kOverallSheet, {methods.begin(), methods.end()}, {ks.begin(), ks.end()}, {}};
  for (const auto& m : methods) {
    for (int k : ks) {
      std::vector<MetricReport> group;
      for (const auto& d : datasets) {
        const auto it = by_key.find({d, m, k});
        if (it != by_key.end()) group.push_back(*it->second);
      }
      if (group.empty() || group.size() != datasets.size()) continue;
      MetricConfig cfg;
      cfg.thresholds.clear();
      for (const auto& p : group.front().curve) cfg.thresholds.push_back(p.threshold);
      const MetricReport agg = aggregate(group, Pooling::kMacro, cfg);
      overall.cells[{m, k}] = {agg.mf1, agg.mean_iou_tp};
    }
  }
  sheets.push_back(std::move(overall));
  return sheets;
}

namespace detail {

inline std::size_t display_width(const std::string& s) {
  std::size_t n = 0;
  for (unsigned char c : s) n += (c & 0xC0) != 0x80;
  return n;
}

inline std::vector<std::vector<std::string>> sheet_rows(const ReportSheet& s) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> head{"method"};
  for (int k : s.ks) {
    head.push_back("K=" + std::to_string(k) + " mF1");
    head.push_back("K=" + std::to_string(k) + " mIoU");
  }
  rows.push_back(head);
  for (const auto& m : s.methods) {
    std::vector<std::string> row{m};
    for (int k : s.ks) {
      const auto it = s.cells.find({m, k});
      if (it == s.cells.end()) {
        row.push_back(kMissingCell);
        row.push_back(kMissingCell);
      } else {
        row.push_back(round_half_even(it->second.mf1));
        row.push_back(round_half_even(it->second.mean_iou));
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace detail

inline std::string render_text(const std::vector<ReportSheet>& sheets) {
  std::string out;
  for (const auto& s : sheets) {
    const auto rows = detail::sheet_rows(s);
    std::vector<std::size_t> width(rows[0].size(), 0);
    for (const auto& r : rows) {
      for (std::size_t c = 0; c < r.size(); ++c) {
        width[c] = std::max(width[c], detail::display_width(r[c]));
      }
    }
    if (!out.empty()) out += "\n";
    out += "[" + s.title + "]\n";
    for (const auto& r : rows) {
      std::string line;
      for (std::size_t c = 0; c < r.size(); ++c) {
        const std::string pad(width[c] - detail::display_width(r[c]), ' ');
        if (c > 0) line += "  ";
        line += c == 0 ? r[c] + pad : pad + r[c];  // numbers right-aligned
      }
      while (!line.empty() && line.back() == ' ') line.pop_back();
      out += line + "\n";
    }
  }
  return out;
}

// Long format: sheet,method,k,mf1,mean_iou; missing cells are left out.
inline std::string render_csv(const std::vector<ReportSheet>& sheets) {
  std::string out = "sheet,method,k,mf1,mean_iou\n";
  auto field = [](const std::string& v) {
    if (v.find_first_of(",\"\n") == std::string::npos) return v;
    std::string q = "\"";
    for (char c : v) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  };
  for (const auto& s : sheets) {
    for (const auto& m : s.methods) {
      for (int k : s.ks) {
        const auto it = s.cells.find({m, k});
        if (it == s.cells.end()) continue;
        out += field(s.title) + "," + field(m) + "," + std::to_string(k) + "," +
               round_half_even(it->second.mf1) + "," +
               round_half_even(it->second.mean_iou) + "\n";
      }
    }
  }
  return out;
}

}  // namespace fsod

#endif  // FSOD_REPORT_HPP_
