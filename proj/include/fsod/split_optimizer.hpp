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

// Disjoint example/test split construction under per-class box minimums.
//
// Each trial runs two lexicographic phases over binary image selections:
//   1. maximise class-image coverage of the example split, i.e. the number
//      of distinct (class, example image) incidence pairs;
//   2. keeping coverage at least at the phase-1 value, minimise the
//      frequency-weighted surplus of example boxes above the minimum, then
//      maximise the inverse-frequency-weighted number of test boxes.
// Phases are solved by randomized greedy construction followed by 1-swap and
// 2-swap local search. Trials differ only by seed; the split with the highest
// Support-Spread Score (CPC x CBE) wins, ties going to the earliest trial.

#ifndef FSOD_SPLIT_OPTIMIZER_HPP_
#define FSOD_SPLIT_OPTIMIZER_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fsod/errors.hpp"
#include "fsod/labeled_box.hpp"

namespace fsod {

struct SplitImage {
  ImageId image_id = 0;
  std::vector<int> counts;  // boxes per class, indexed like SplitInstance::classes
};

struct SplitInstance {
  std::string source;
  std::vector<std::string> classes;
  std::vector<SplitImage> images;

  std::size_t num_classes() const { return classes.size(); }
  std::size_t num_images() const { return images.size(); }

  std::vector<std::int64_t> class_totals() const {
    std::vector<std::int64_t> t(classes.size(), 0);
    for (const auto& im : images) {
      for (std::size_t c = 0; c < classes.size(); ++c) t[c] += im.counts[c];
    }
    return t;
  }

  void validate() const {
    if (classes.empty()) throw ValidationError("split instance has no classes");
    for (const auto& im : images) {
      if (im.counts.size() != classes.size()) {
        throw ValidationError("image " + std::to_string(im.image_id) +
                              ": class count vector has wrong length");
      }
      for (int v : im.counts) {
        if (v < 0) {
          throw ValidationError("image " + std::to_string(im.image_id) +
                                ": negative box count");
        }
      }
    }
    const auto totals = class_totals();
    for (std::size_t c = 0; c < classes.size(); ++c) {
      if (totals[c] == 0) {
        throw ValidationError("class '" + classes[c] +
                              "' does not appear in any image");
      }
    }
  }
};

struct SplitConstraints {
  int m_exp = 6;
  int m_test = 10;
  int n_exp = 10;
  int n_test = 53;

  void validate() const {
    if (m_exp <= 0 || m_test <= 0 || n_exp <= 0 || n_test <= 0) {
      throw ValidationError("split constraints must all be positive");
    }
  }
};

enum class Side : std::uint8_t { kUnused = 0, kExample = 1, kTest = 2 };

inline const char* to_string(Side s) {
  switch (s) {
    case Side::kExample: return "example";
    case Side::kTest: return "test";
    default: return "unused";
  }
}

// x_i^exp / x_i^test in one vector; the disjointness constraint
// x_i^exp + x_i^test <= 1 holds by construction.
struct DecisionVector {
  std::vector<Side> side;

  bool example(std::size_t i) const { return side[i] == Side::kExample; }
  bool test(std::size_t i) const { return side[i] == Side::kTest; }
  std::size_t count(Side s) const {
    return static_cast<std::size_t>(std::count(side.begin(), side.end(), s));
  }
  friend bool operator==(const DecisionVector&, const DecisionVector&) = default;
};

struct SplitScore {
  double cpc = 0.0;
  double cbe = 0.0;
  double sss = 0.0;
};

struct SeedSearchConfig {
  int trials = 1000;
  std::uint64_t base_seed = 0;
};

// Per-class box tallies of one decision vector.
struct SplitTallies {
  std::vector<std::int64_t> example_boxes;
  std::vector<std::int64_t> test_boxes;
  std::vector<std::int64_t> example_images_with_class;
};

inline SplitTallies tally(const SplitInstance& inst, const DecisionVector& x) {
  const std::size_t nc = inst.num_classes();
  SplitTallies t{std::vector<std::int64_t>(nc, 0),
                 std::vector<std::int64_t>(nc, 0),
                 std::vector<std::int64_t>(nc, 0)};
  for (std::size_t i = 0; i < inst.num_images(); ++i) {
    const auto& counts = inst.images[i].counts;
    for (std::size_t c = 0; c < nc; ++c) {
      if (x.example(i)) {
        t.example_boxes[c] += counts[c];
        if (counts[c] > 0) t.example_images_with_class[c]++;
      } else if (x.test(i)) {
        t.test_boxes[c] += counts[c];
      }
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Objectives and scores.

// Number of distinct (class, example image) incidence pairs.
inline std::int64_t coverage(const SplitInstance& inst, const DecisionVector& x) {
  std::int64_t total = 0;
  for (std::size_t i = 0; i < inst.num_images(); ++i) {
    if (!x.example(i)) continue;
    for (int v : inst.images[i].counts) total += v > 0 ? 1 : 0;
  }
  return total;
}

// f_c: class c's share of all boxes in the instance.
inline std::vector<double> class_shares(const SplitInstance& inst) {
  const auto totals = inst.class_totals();
  const double all = static_cast<double>(
      std::accumulate(totals.begin(), totals.end(), std::int64_t{0}));
  std::vector<double> f(totals.size());
  for (std::size_t c = 0; c < totals.size(); ++c) {
    f[c] = static_cast<double>(totals[c]) / all;
  }
  return f;
}

// sum_c f_c * max(0, exampleBoxes_c - m_exp)
inline double surplus(const SplitInstance& inst, const SplitConstraints& cons,
                      const DecisionVector& x) {
  const auto f = class_shares(inst);
  const auto t = tally(inst, x);
  double s = 0.0;
  for (std::size_t c = 0; c < f.size(); ++c) {
    s += f[c] * static_cast<double>(std::max<std::int64_t>(
                    0, t.example_boxes[c] - cons.m_exp));
  }
  return s;
}

// sum_c (1 / f_c) * testBoxes_c
inline double test_reward(const SplitInstance& inst, const DecisionVector& x) {
  const auto f = class_shares(inst);
  const auto t = tally(inst, x);
  double s = 0.0;
  for (std::size_t c = 0; c < f.size(); ++c) {
    s += static_cast<double>(t.test_boxes[c]) / f[c];
  }
  return s;
}

// Empty when x satisfies sizes and per-class minimums; otherwise one message
// per violation.
inline std::vector<std::string> violations(const SplitInstance& inst,
                                           const SplitConstraints& cons,
                                           const DecisionVector& x) {
  std::vector<std::string> out;
  if (x.side.size() != inst.num_images()) {
    out.push_back("decision vector length differs from image count");
    return out;
  }
  if (x.count(Side::kExample) != static_cast<std::size_t>(cons.n_exp)) {
    out.push_back("example split has " +
                  std::to_string(x.count(Side::kExample)) + " images, need " +
                  std::to_string(cons.n_exp));
  }
  if (x.count(Side::kTest) != static_cast<std::size_t>(cons.n_test)) {
    out.push_back("test split has " + std::to_string(x.count(Side::kTest)) +
                  " images, need " + std::to_string(cons.n_test));
  }
  const auto t = tally(inst, x);
  for (std::size_t c = 0; c < inst.num_classes(); ++c) {
    if (t.example_boxes[c] < cons.m_exp) {
      out.push_back("class '" + inst.classes[c] + "' has " +
                    std::to_string(t.example_boxes[c]) +
                    " example boxes, need " + std::to_string(cons.m_exp));
    }
    if (t.test_boxes[c] < cons.m_test) {
      out.push_back("class '" + inst.classes[c] + "' has " +
                    std::to_string(t.test_boxes[c]) + " test boxes, need " +
                    std::to_string(cons.m_test));
    }
  }
  return out;
}

inline bool is_feasible(const SplitInstance& inst, const SplitConstraints& cons,
                        const DecisionVector& x) {
  return violations(inst, cons, x).empty();
}

// Class-Presence Coverage: mean over classes of the fraction of example
// images that contain the class.
inline double cpc(const SplitInstance& inst, const DecisionVector& x) {
  const std::size_t n_exp = x.count(Side::kExample);
  if (n_exp == 0) throw ValidationError("CPC needs a non-empty example split");
  const auto t = tally(inst, x);
  double s = 0.0;
  for (auto v : t.example_images_with_class) {
    s += static_cast<double>(v) / static_cast<double>(n_exp);
  }
  return s / static_cast<double>(inst.num_classes());
}

// Class-Balance Entropy from per-class box counts: Shannon entropy divided by
// log |C|. A single class is balanced by definition.
inline double cbe_from_counts(const std::vector<std::int64_t>& counts) {
  const double total = static_cast<double>(
      std::accumulate(counts.begin(), counts.end(), std::int64_t{0}));
  if (total <= 0.0) {
    throw ValidationError("CBE needs at least one example box");
  }
  if (counts.size() == 1) return 1.0;
  double h = 0.0;
  for (auto v : counts) {
    if (v <= 0) continue;
    const double p = static_cast<double>(v) / total;
    h -= p * std::log(p);
  }
  return std::clamp(h / std::log(static_cast<double>(counts.size())), 0.0, 1.0);
}

inline double cbe(const SplitInstance& inst, const DecisionVector& x) {
  return cbe_from_counts(tally(inst, x).example_boxes);
}

inline double sss(double cpc_value, double cbe_value) {
  return cpc_value * cbe_value;
}

inline SplitScore score_split(const SplitInstance& inst,
                              const DecisionVector& x) {
  SplitScore s;
  s.cpc = cpc(inst, x);
  s.cbe = cbe(inst, x);
  s.sss = sss(s.cpc, s.cbe);
  return s;
}

// Phase objectives of one split, bundled for reporting and comparison.
struct SplitObjectives {
  std::int64_t coverage = 0;
  double surplus = 0.0;
  double test_reward = 0.0;
};

inline SplitObjectives objectives(const SplitInstance& inst,
                                  const SplitConstraints& cons,
                                  const DecisionVector& x) {
  return {coverage(inst, x), surplus(inst, cons, x), test_reward(inst, x)};
}

// Relative tolerance for comparing real-valued phase-2 objectives.
inline constexpr double kObjectiveTolerance = 1e-9;

inline bool objective_less(double a, double b) {
  return a < b - kObjectiveTolerance * (1.0 + std::max(std::abs(a), std::abs(b)));
}

inline bool objective_equal(double a, double b) {
  return !objective_less(a, b) && !objective_less(b, a);
}

struct SplitAssignment {
  std::string source;
  DecisionVector decision;
  SplitTallies tallies;
  SplitObjectives objectives;
  SplitScore score;
  std::uint64_t seed = 0;  // seed of the winning trial
  int trial = 0;
};

// ---------------------------------------------------------------------------
// Local search machinery.

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Uniform integer in [0, n) with rejection; stable across standard libraries.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit =
      std::numeric_limits<std::uint64_t>::max() -
      std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % n;
}

template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[uniform_below(rng, i)]);
  }
}

enum class Phase { kCoverage, kBalance };

// Lexicographic local search over side vectors. The state keeps per-class
// example/test tallies; candidate moves are scored from precomputed deltas
// and compared slot by slot (deficit, coverage, surplus, test reward) so most
// candidates are rejected after the first cheap comparison.
class SplitSearch {
 public:
  SplitSearch(const SplitInstance& inst, const SplitConstraints& cons)
      : inst_(inst),
        cons_(cons),
        nc_(inst.num_classes()),
        n_(inst.num_images()),
        shares_(class_shares(inst)) {
    present_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      int p = 0;
      for (int v : inst.images[i].counts) p += v > 0 ? 1 : 0;
      present_[i] = p;
    }
    inv_shares_.resize(nc_);
    for (std::size_t c = 0; c < nc_; ++c) inv_shares_[c] = 1.0 / shares_[c];
    same_profile_.assign(n_ * n_, 0);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j < n_; ++j) {
        same_profile_[i * n_ + j] =
            inst.images[i].counts == inst.images[j].counts ? 1 : 0;
      }
    }
  }

  // Greedy, feasibility-first: satisfy example minimums with the images that
  // remove the most deficit, then test minimums, then fill both splits.
  DecisionVector construct(std::mt19937_64& rng) const {
    std::vector<std::size_t> order(n_);
    std::iota(order.begin(), order.end(), 0);
    shuffle(order, rng);
    DecisionVector x{std::vector<Side>(n_, Side::kUnused)};
    auto fill_minimums = [&](Side s, int need_boxes, int cap) {
      std::vector<std::int64_t> deficit(nc_, need_boxes);
      int taken = 0;
      while (taken < cap) {
        std::int64_t best_gain = 0;
        std::size_t best = n_;
        for (std::size_t i : order) {
          if (x.side[i] != Side::kUnused) continue;
          std::int64_t gain = 0;
          for (std::size_t c = 0; c < nc_; ++c) {
            gain += std::min<std::int64_t>(inst_.images[i].counts[c],
                                           deficit[c]);
          }
          if (gain > best_gain) {
            best_gain = gain;
            best = i;
          }
        }
        if (best == n_) break;
        x.side[best] = s;
        ++taken;
        for (std::size_t c = 0; c < nc_; ++c) {
          deficit[c] = std::max<std::int64_t>(
              0, deficit[c] - inst_.images[best].counts[c]);
        }
      }
      return taken;
    };
    int n_exp = fill_minimums(Side::kExample, cons_.m_exp, cons_.n_exp);
    int n_test = fill_minimums(Side::kTest, cons_.m_test, cons_.n_test);
    // Fill the example split by coverage gain, the test split in seed order.
    while (n_exp < cons_.n_exp) {
      std::size_t best = n_;
      for (std::size_t i : order) {
        if (x.side[i] != Side::kUnused) continue;
        if (best == n_ || present_[i] > present_[best]) best = i;
      }
      if (best == n_) break;
      x.side[best] = Side::kExample;
      ++n_exp;
    }
    for (std::size_t i : order) {
      if (n_test >= cons_.n_test) break;
      if (x.side[i] == Side::kUnused) {
        x.side[i] = Side::kTest;
        ++n_test;
      }
    }
    return x;
  }

  // First-improvement descent: 1-swaps, then 2-swaps when no 1-swap
  // improves, until neither does. Then `kicks` rounds of random perturbation
  // followed by descent, keeping the best vector seen.
  void descend(DecisionVector& x, Phase phase, std::int64_t coverage_target,
               std::mt19937_64& rng, int kicks = 0) const {
    phase_ = phase;
    target_ = coverage_target;
    State st = make_state(x);
    local_search(st, rng);
    State best = st;
    for (int k = 0; k < kicks; ++k) {
      State trial = best;
      kick(trial, rng);
      local_search(trial, rng);
      if (less(trial, best)) best = std::move(trial);
    }
    x = best.x;
  }

 private:
  struct State {
    DecisionVector x;
    std::vector<std::int64_t> example_boxes;
    std::vector<std::int64_t> test_boxes;
    std::int64_t coverage = 0;
  };

  // Side change of image sets, stored flat: example deltas then test deltas.
  struct Deltas {
    std::size_t nc = 0;
    std::vector<std::int64_t> boxes;  // 2 * nc per entry
    std::vector<std::int64_t> coverage;
    std::vector<std::array<std::size_t, 2>> images;

    void clear() {
      boxes.clear();
      coverage.clear();
      images.clear();
    }
    std::size_t size() const { return coverage.size(); }
    const std::int64_t* example(std::size_t k) const { return &boxes[2 * nc * k]; }
    const std::int64_t* test(std::size_t k) const {
      return &boxes[2 * nc * k + nc];
    }
  };

  State make_state(const DecisionVector& x) const {
    State st{x, std::vector<std::int64_t>(nc_, 0),
             std::vector<std::int64_t>(nc_, 0), 0};
    for (std::size_t i = 0; i < n_; ++i) {
      apply_move(st, i, Side::kUnused, x.side[i]);
    }
    return st;
  }

  void apply_move(State& st, std::size_t i, Side from, Side to) const {
    const auto& counts = inst_.images[i].counts;
    for (std::size_t c = 0; c < nc_; ++c) {
      if (from == Side::kExample) st.example_boxes[c] -= counts[c];
      if (from == Side::kTest) st.test_boxes[c] -= counts[c];
      if (to == Side::kExample) st.example_boxes[c] += counts[c];
      if (to == Side::kTest) st.test_boxes[c] += counts[c];
    }
    if (from == Side::kExample) st.coverage -= present_[i];
    if (to == Side::kExample) st.coverage += present_[i];
    st.x.side[i] = to;
  }

  void exchange(State& st, std::size_t i, std::size_t j) const {
    const Side si = st.x.side[i], sj = st.x.side[j];
    apply_move(st, i, si, sj);
    apply_move(st, j, sj, si);
  }

  void add_move(std::int64_t* e, std::int64_t* t, std::int64_t& cov,
                std::size_t i, Side from, Side to) const {
    const auto& counts = inst_.images[i].counts;
    for (std::size_t c = 0; c < nc_; ++c) {
      if (from == Side::kExample) e[c] -= counts[c];
      if (from == Side::kTest) t[c] -= counts[c];
      if (to == Side::kExample) e[c] += counts[c];
      if (to == Side::kTest) t[c] += counts[c];
    }
    if (from == Side::kExample) cov -= present_[i];
    if (to == Side::kExample) cov += present_[i];
  }

  std::int64_t deficit_of(const std::int64_t* e, const std::int64_t* t) const {
    std::int64_t d = 0;
    for (std::size_t c = 0; c < nc_; ++c) {
      d += std::max<std::int64_t>(0, cons_.m_exp - e[c]);
      d += std::max<std::int64_t>(0, cons_.m_test - t[c]);
    }
    return d;
  }

  double surplus_of(const std::int64_t* e) const {
    double s = 0.0;
    for (std::size_t c = 0; c < nc_; ++c) {
      s += shares_[c] *
           static_cast<double>(std::max<std::int64_t>(0, e[c] - cons_.m_exp));
    }
    return s;
  }

  double reward_of(const std::int64_t* t) const {
    double s = 0.0;
    for (std::size_t c = 0; c < nc_; ++c) {
      s += inv_shares_[c] * static_cast<double>(t[c]);
    }
    return s;
  }

  // Key components of the incumbent, computed once per scan.
  struct Incumbent {
    std::int64_t deficit = 0;
    std::int64_t coverage = 0;
    double surplus = 0.0;
    double reward = 0.0;
  };

  Incumbent incumbent(const State& st) const {
    return {deficit_of(st.example_boxes.data(), st.test_boxes.data()),
            st.coverage, surplus_of(st.example_boxes.data()),
            reward_of(st.test_boxes.data())};
  }

  // Is (e, t, cov) strictly better than the incumbent under the phase key?
  bool better(const std::int64_t* e, const std::int64_t* t, std::int64_t cov,
              const Incumbent& cur) const {
    const std::int64_t d_new = deficit_of(e, t);
    if (d_new != cur.deficit) return d_new < cur.deficit;
    if (phase_ == Phase::kCoverage) return cov > cur.coverage;
    const std::int64_t s_new = std::max<std::int64_t>(0, target_ - cov);
    const std::int64_t s_cur = std::max<std::int64_t>(0, target_ - cur.coverage);
    if (s_new != s_cur) return s_new < s_cur;
    const double sur_new = surplus_of(e);
    if (objective_less(sur_new, cur.surplus)) return true;
    if (objective_less(cur.surplus, sur_new)) return false;
    return objective_less(cur.reward, reward_of(t));
  }

  // better() specialised to a feasible incumbent and a two-delta move:
  // one pass, rejecting on the first class that falls below a minimum.
  bool feasible_better(const State& st, const std::int64_t* ea,
                       const std::int64_t* ta, const std::int64_t* eb,
                       const std::int64_t* tb, std::int64_t cov,
                       const Incumbent& cur) const {
    if (phase_ == Phase::kCoverage && cov <= cur.coverage) return false;
    if (phase_ == Phase::kBalance && cov < target_) return false;
    double sur = 0.0, rew = 0.0;
    for (std::size_t c = 0; c < nc_; ++c) {
      const std::int64_t e = st.example_boxes[c] + ea[c] + eb[c];
      const std::int64_t t = st.test_boxes[c] + ta[c] + tb[c];
      if (e < cons_.m_exp || t < cons_.m_test) return false;
      sur += shares_[c] * static_cast<double>(e - cons_.m_exp);
      rew += inv_shares_[c] * static_cast<double>(t);
    }
    if (phase_ == Phase::kCoverage) return true;
    if (objective_less(sur, cur.surplus)) return true;
    if (objective_less(cur.surplus, sur)) return false;
    return objective_less(cur.reward, rew);
  }

  bool less(const State& a, const State& b) const {
    return better(a.example_boxes.data(), a.test_boxes.data(), a.coverage,
                  incumbent(b));
  }

  // Moves whose coverage change cannot help are skipped without scoring.
  bool coverage_prunes(std::int64_t cov_delta, const Incumbent& cur) const {
    if (cur.deficit != 0) return false;
    if (phase_ == Phase::kCoverage) return cov_delta <= 0;
    return cur.coverage + cov_delta < target_;
  }

  void build_exchanges(const State& st, std::mt19937_64& rng) const {
    order_.resize(n_);
    std::iota(order_.begin(), order_.end(), 0);
    shuffle(order_, rng);
    ex_.nc = nc_;
    ex_.clear();
    for (std::size_t a = 0; a < n_; ++a) {
      for (std::size_t b = a + 1; b < n_; ++b) {
        const std::size_t i = order_[a], j = order_[b];
        const Side si = st.x.side[i], sj = st.x.side[j];
        if (si == sj || same_profile_[i * n_ + j]) continue;
        const std::size_t off = ex_.boxes.size();
        ex_.boxes.resize(off + 2 * nc_, 0);
        std::int64_t cov = 0;
        add_move(&ex_.boxes[off], &ex_.boxes[off + nc_], cov, i, si, sj);
        add_move(&ex_.boxes[off], &ex_.boxes[off + nc_], cov, j, sj, si);
        ex_.coverage.push_back(cov);
        ex_.images.push_back({i, j});
      }
    }
  }

  void local_search(State& st, std::mt19937_64& rng) const {
    for (;;) {
      if (improve_one(st, rng)) continue;
      if (improve_two(st, rng)) continue;
      break;
    }
  }

  bool improve_one(State& st, std::mt19937_64& rng) const {
    build_exchanges(st, rng);
    const Incumbent cur = incumbent(st);
    e_.resize(nc_);
    t_.resize(nc_);
    for (std::size_t k = 0; k < ex_.size(); ++k) {
      if (coverage_prunes(ex_.coverage[k], cur)) continue;
      const std::int64_t* de = ex_.example(k);
      const std::int64_t* dt = ex_.test(k);
      for (std::size_t c = 0; c < nc_; ++c) {
        e_[c] = st.example_boxes[c] + de[c];
        t_[c] = st.test_boxes[c] + dt[c];
      }
      if (better(e_.data(), t_.data(), st.coverage + ex_.coverage[k], cur)) {
        exchange(st, ex_.images[k][0], ex_.images[k][1]);
        return true;
      }
    }
    return false;
  }

  // Two simultaneous exchanges on four distinct images, or a 3-cycle that
  // rotates three images across all three sides.
  bool improve_two(State& st, std::mt19937_64& rng) const {
    build_exchanges(st, rng);
    const Incumbent cur = incumbent(st);
    e_.resize(nc_);
    t_.resize(nc_);
    // Exchanges in descending coverage change, so once a partner's coverage
    // change is too small every later partner is too.
    by_coverage_.resize(ex_.size());
    std::iota(by_coverage_.begin(), by_coverage_.end(), 0);
    std::stable_sort(by_coverage_.begin(), by_coverage_.end(),
                     [this](std::size_t x, std::size_t y) {
                       return ex_.coverage[x] > ex_.coverage[y];
                     });
    for (std::size_t pa = 0; pa < by_coverage_.size(); ++pa) {
      const std::size_t a = by_coverage_[pa];
      const auto& ia = ex_.images[a];
      const std::int64_t* ea = ex_.example(a);
      const std::int64_t* ta = ex_.test(a);
      for (std::size_t pb = pa + 1; pb < by_coverage_.size(); ++pb) {
        const std::size_t b = by_coverage_[pb];
        if (coverage_prunes(ex_.coverage[a] + ex_.coverage[b], cur)) break;
        const auto& ib = ex_.images[b];
        if (ia[0] == ib[0] || ia[0] == ib[1] || ia[1] == ib[0] ||
            ia[1] == ib[1]) {
          continue;
        }
        const std::int64_t* eb = ex_.example(b);
        const std::int64_t* tb = ex_.test(b);
        const std::int64_t cov =
            st.coverage + ex_.coverage[a] + ex_.coverage[b];
        bool improves;
        if (cur.deficit == 0 && cur.coverage >= target_) {
          improves = feasible_better(st, ea, ta, eb, tb, cov, cur);
        } else {
          for (std::size_t c = 0; c < nc_; ++c) {
            e_[c] = st.example_boxes[c] + ea[c] + eb[c];
            t_[c] = st.test_boxes[c] + ta[c] + tb[c];
          }
          improves = better(e_.data(), t_.data(), cov, cur);
        }
        if (improves) {
          exchange(st, ia[0], ia[1]);
          exchange(st, ib[0], ib[1]);
          return true;
        }
      }
    }
    std::array<std::vector<std::size_t>, 3> by_side;
    for (std::size_t i = 0; i < n_; ++i) {
      by_side[static_cast<int>(st.x.side[i])].push_back(i);
    }
    for (auto& v : by_side) shuffle(v, rng);
    const std::array<std::array<Side, 3>, 2> rotations{{
        {Side::kUnused, Side::kExample, Side::kTest},
        {Side::kUnused, Side::kTest, Side::kExample},
    }};
    for (const auto& rot : rotations) {
      // The image on rot[k] moves to rot[(k + 1) % 3].
      for (std::size_t p : by_side[static_cast<int>(rot[0])]) {
        for (std::size_t q : by_side[static_cast<int>(rot[1])]) {
          for (std::size_t r : by_side[static_cast<int>(rot[2])]) {
            std::copy(st.example_boxes.begin(), st.example_boxes.end(),
                      e_.begin());
            std::copy(st.test_boxes.begin(), st.test_boxes.end(), t_.begin());
            std::int64_t cov = st.coverage;
            add_move(e_.data(), t_.data(), cov, p, rot[0], rot[1]);
            add_move(e_.data(), t_.data(), cov, q, rot[1], rot[2]);
            add_move(e_.data(), t_.data(), cov, r, rot[2], rot[0]);
            if (coverage_prunes(cov - st.coverage, cur)) continue;
            if (better(e_.data(), t_.data(), cov, cur)) {
              apply_move(st, p, rot[0], rot[1]);
              apply_move(st, q, rot[1], rot[2]);
              apply_move(st, r, rot[2], rot[0]);
              return true;
            }
          }
        }
      }
    }
    return false;
  }

  // Two random exchanges between images on different sides.
  void kick(State& st, std::mt19937_64& rng) const {
    for (int m = 0; m < 2; ++m) {
      for (int attempt = 0; attempt < 32; ++attempt) {
        const std::size_t i = uniform_below(rng, n_);
        const std::size_t j = uniform_below(rng, n_);
        if (st.x.side[i] != st.x.side[j]) {
          exchange(st, i, j);
          break;
        }
      }
    }
  }

  const SplitInstance& inst_;
  SplitConstraints cons_;
  std::size_t nc_;
  std::size_t n_;
  std::vector<double> shares_;
  std::vector<double> inv_shares_;
  std::vector<int> present_;
  std::vector<char> same_profile_;
  // Search scratch; a SplitSearch is used by one thread at a time.
  mutable Phase phase_ = Phase::kCoverage;
  mutable std::int64_t target_ = 0;
  mutable Deltas ex_;
  mutable std::vector<std::size_t> order_;
  mutable std::vector<std::size_t> by_coverage_;
  mutable std::vector<std::int64_t> e_;
  mutable std::vector<std::int64_t> t_;
};

inline std::uint64_t trial_seed(std::uint64_t base_seed, int trial) {
  return splitmix64(base_seed ^ splitmix64(static_cast<std::uint64_t>(trial)));
}

}  // namespace detail

// Structural checks that do not need search: split sizes fit the pool and
// every class has enough boxes overall. Throws InfeasibleError.
inline void check_feasible(const SplitInstance& inst,
                           const SplitConstraints& cons) {
  inst.validate();
  cons.validate();
  if (static_cast<std::size_t>(cons.n_exp + cons.n_test) > inst.num_images()) {
    throw InfeasibleError(
        "split sizes " + std::to_string(cons.n_exp) + " + " +
        std::to_string(cons.n_test) + " exceed the " +
        std::to_string(inst.num_images()) + " available images");
  }
  const auto totals = inst.class_totals();
  for (std::size_t c = 0; c < totals.size(); ++c) {
    if (totals[c] < cons.m_exp + cons.m_test) {
      throw InfeasibleError("class '" + inst.classes[c] + "' has " +
                                std::to_string(totals[c]) +
                                " boxes in total but needs at least " +
                                std::to_string(cons.m_exp) + " example + " +
                                std::to_string(cons.m_test) + " test",
                            inst.classes[c]);
    }
  }
}

namespace detail {

[[noreturn]] inline void throw_unsatisfied(const SplitInstance& inst,
                                           const SplitConstraints& cons,
                                           const DecisionVector& x) {
  const auto v = violations(inst, cons, x);
  std::string label;
  const auto t = tally(inst, x);
  for (std::size_t c = 0; c < inst.num_classes(); ++c) {
    if (t.example_boxes[c] < cons.m_exp || t.test_boxes[c] < cons.m_test) {
      label = inst.classes[c];
      break;
    }
  }
  std::string msg = "no feasible split found";
  if (!v.empty()) msg += ": " + v.front();
  throw InfeasibleError(msg, label);
}

}  // namespace detail

// Perturb-and-descend rounds run after the first local optimum of each phase.
// Small pools get more rounds; their descents cost microseconds.
inline int search_kicks(std::size_t num_images) {
  return num_images <= 16 ? 32 : 4;
}

// Phase 1 for one seed: a feasible vector with maximal coverage found by the
// local search. Throws InfeasibleError when no feasible vector is reached.
inline DecisionVector phase1_coverage(const SplitInstance& inst,
                                      const SplitConstraints& cons,
                                      std::uint64_t seed) {
  check_feasible(inst, cons);
  std::mt19937_64 rng(seed);
  detail::SplitSearch search(inst, cons);
  DecisionVector x = search.construct(rng);
  search.descend(x, detail::Phase::kCoverage, 0, rng,
                 search_kicks(inst.num_images()));
  if (!is_feasible(inst, cons, x)) detail::throw_unsatisfied(inst, cons, x);
  return x;
}

// Phase 2 starting from `start`: minimize surplus then maximize test reward
// while keeping coverage >= phase1_value.
inline DecisionVector phase2_balance(const SplitInstance& inst,
                                     const SplitConstraints& cons,
                                     std::int64_t phase1_value,
                                     std::uint64_t seed,
                                     const DecisionVector& start) {
  check_feasible(inst, cons);
  std::mt19937_64 rng(detail::splitmix64(seed ^ 0x5bd1e995ULL));
  detail::SplitSearch search(inst, cons);
  DecisionVector x = start;
  search.descend(x, detail::Phase::kBalance, phase1_value, rng,
                 search_kicks(inst.num_images()));
  if (!is_feasible(inst, cons, x) || coverage(inst, x) < phase1_value) {
    detail::throw_unsatisfied(inst, cons, x);
  }
  return x;
}

// Phase 2 from a fresh seeded construction.
inline DecisionVector phase2_balance(const SplitInstance& inst,
                                     const SplitConstraints& cons,
                                     std::int64_t phase1_value,
                                     std::uint64_t seed) {
  check_feasible(inst, cons);
  std::mt19937_64 rng(seed);
  detail::SplitSearch search(inst, cons);
  DecisionVector x = search.construct(rng);
  return phase2_balance(inst, cons, phase1_value, seed, x);
}

inline SplitAssignment make_assignment(const SplitInstance& inst,
                                       const SplitConstraints& cons,
                                       DecisionVector x, std::uint64_t seed,
                                       int trial) {
  SplitAssignment a;
  a.source = inst.source;
  a.tallies = tally(inst, x);
  a.objectives = objectives(inst, cons, x);
  a.score = score_split(inst, x);
  a.decision = std::move(x);
  a.seed = seed;
  a.trial = trial;
  return a;
}

// One seeded trial of both phases.
inline SplitAssignment run_trial(const SplitInstance& inst,
                                 const SplitConstraints& cons,
                                 std::uint64_t seed, int trial = 0) {
  DecisionVector x1 = phase1_coverage(inst, cons, seed);
  const std::int64_t value = coverage(inst, x1);
  DecisionVector x2 = phase2_balance(inst, cons, value, seed, x1);
  return make_assignment(inst, cons, std::move(x2), seed, trial);
}

// Seed search: T independent trials, argmax SSS, earliest trial wins ties.
// Trials whose search ends infeasible are skipped; if all do, the last
// failure is rethrown.
inline SplitAssignment solve(const SplitInstance& inst,
                             const SplitConstraints& cons,
                             const SeedSearchConfig& search = {}) {
  if (search.trials < 1) throw ValidationError("seed search needs >= 1 trial");
  check_feasible(inst, cons);
  std::optional<SplitAssignment> best;
  std::optional<InfeasibleError> last_error;
  for (int t = 0; t < search.trials; ++t) {
    const std::uint64_t seed = detail::trial_seed(search.base_seed, t);
    try {
      SplitAssignment a = run_trial(inst, cons, seed, t);
      if (!best || a.score.sss > best->score.sss) best = std::move(a);
    } catch (const InfeasibleError& e) {
      last_error = e;
    }
  }
  if (!best) throw *last_error;
  return *best;
}

// Exhaustive lexicographic optimum over all 3^N side vectors; intended for
// instances of roughly a dozen images. Among exact ties of both phases the
// highest SSS is returned.
inline SplitAssignment solve_exact(const SplitInstance& inst,
                                   const SplitConstraints& cons) {
  check_feasible(inst, cons);
  const std::size_t n = inst.num_images();
  if (n > 16) throw ValidationError("exhaustive split search limited to 16 images");
  DecisionVector x{std::vector<Side>(n, Side::kUnused)};
  std::optional<DecisionVector> best;
  SplitObjectives best_obj;
  double best_sss = -1.0;
  std::vector<int> digit(n, 0);
  for (;;) {
    for (std::size_t i = 0; i < n; ++i) x.side[i] = static_cast<Side>(digit[i]);
    if (is_feasible(inst, cons, x)) {
      const SplitObjectives o = objectives(inst, cons, x);
      bool better = false;
      if (!best || o.coverage > best_obj.coverage) {
        better = true;
      } else if (o.coverage == best_obj.coverage) {
        if (objective_less(o.surplus, best_obj.surplus)) {
          better = true;
        } else if (objective_equal(o.surplus, best_obj.surplus)) {
          if (objective_less(best_obj.test_reward, o.test_reward)) {
            better = true;
          } else if (objective_equal(o.test_reward, best_obj.test_reward)) {
            better = score_split(inst, x).sss > best_sss;
          }
        }
      }
      if (better) {
        best = x;
        best_obj = o;
        best_sss = score_split(inst, x).sss;
      }
    }
    std::size_t k = 0;
    while (k < n && digit[k] == 2) digit[k++] = 0;
    if (k == n) break;
    ++digit[k];
  }
  if (!best) {
    throw InfeasibleError("no feasible split exists for source '" +
                          inst.source + "'");
  }
  return make_assignment(inst, cons, *best, 0, 0);
}

}  // namespace fsod

#endif  // FSOD_SPLIT_OPTIMIZER_HPP_
