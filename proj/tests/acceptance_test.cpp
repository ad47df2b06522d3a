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

// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failing criteria (0 when all pass).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fake_server.hpp"
#include "fixtures.hpp"
#include "fsod/backends.hpp"
#include "fsod/dataset.hpp"
#include "fsod/matching.hpp"
#include "fsod/metrics.hpp"
#include "fsod/report.hpp"
#include "fsod/runner.hpp"
#include "fsod/split_optimizer.hpp"
#include "oracles.hpp"

namespace {

using namespace fsod;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

const std::string kSource = FSOD_SOURCE_DIR;

// Ground truth of every image in an index, keyed by id.
AnnotationsByImage truth(const DatasetIndex& idx) {
  AnnotationsByImage t;
  for (const auto& r : idx.images()) t[r.image_id] = idx.annotations_of(r.image_id);
  return t;
}

// --- 1 ----------------------------------------------------------------------

Outcome assignment_oracle() {
  std::mt19937_64 rng(20261019);
  const auto t0 = Clock::now();
  int exact = 0;
  const int total = 1000;
  for (int n = 0; n < total; ++n) {
    const int rows = 1 + static_cast<int>(rng() % 7);
    const int cols = 1 + static_cast<int>(rng() % 7);
    std::vector<std::vector<double>> m(rows, std::vector<double>(cols));
    // Dyadic costs keep every partial sum exact, so equality is meaningful.
    for (auto& row : m) {
      for (auto& v : row) v = static_cast<double>(rng() % 4096) / 256.0;
    }
    const Assignment a = hungarian(CostMatrix::from_rows(m));
    const double cost = assignment_cost(CostMatrix::from_rows(m), a);
    exact += cost == oracle::brute_force_assignment_cost(m) &&
             a.size() == static_cast<std::size_t>(std::min(rows, cols));
  }
  const double secs = seconds_since(t0);
  return {exact == total && secs < 5.0,
          std::to_string(exact) + "/" + std::to_string(total) + " exact, " +
              fmt("%.2f s", secs)};
}

// --- 2 ----------------------------------------------------------------------

Outcome metric_identity() {
  const DatasetIndex idx = load_index(kSource + "/data/synthetic/index.json");
  const AnnotationsByImage gts = truth(idx);
  DetectionsByImage copy, empty;
  for (const auto& [id, anns] : gts) {
    for (const auto& a : anns) copy[id].push_back({a.bbox, a.class_label, std::nullopt, true});
    empty[id];
  }
  const auto perfect = evaluate_group({}, copy, gts);
  const auto none = evaluate_group({}, empty, gts);
  const std::size_t boxes = idx.annotations().size();
  const bool ok = boxes >= 200 && perfect.mf1 == 1.0 && perfect.mean_iou_tp == 1.0 &&
                  none.mf1 == 0.0 && none.mean_iou_tp == 0.0;
  return {ok, std::to_string(boxes) + " boxes; copy mF1 " + fmt("%.17g", perfect.mf1) +
                  ", mIoU " + fmt("%.17g", perfect.mean_iou_tp) + "; empty mF1 " +
                  fmt("%.17g", none.mf1) + ", mIoU " + fmt("%.17g", none.mean_iou_tp)};
}

// --- 3 ----------------------------------------------------------------------

Outcome threshold_sweep() {
  const MetricConfig cfg;
  const auto& t = cfg.thresholds;
  const double step = (0.70 - 0.05) / 49.0;
  double worst = 0.0;
  for (std::size_t i = 1; i < t.size(); ++i) worst = std::max(worst, std::abs(t[i] - t[i - 1] - step));
  const auto independent = oracle::threshold_list_from_integers();
  double list_gap = 0.0;
  for (std::size_t i = 0; i < t.size() && i < independent.size(); ++i) {
    list_gap = std::max(list_gap, std::abs(t[i] - independent[i]));
  }
  // Prediction covering 40% of the ground truth box: IoU 0.40.
  const std::vector<Annotation> gts{{1, {0, 0, 10, 10}, "cell"}};
  const std::vector<Detection> preds{{{0, 0, 4, 10}, "cell", std::nullopt, true}};
  const double v = iou(preds[0].bbox, gts[0].bbox);
  int below = 0;
  for (double x : independent) below += x <= 0.40;
  const double got = evaluate_group({}, {{1, preds}}, {{1, gts}}, cfg).mf1;
  const double want = below / 50.0;
  const bool ok = t.size() == 50 && t.front() == 0.05 && t.back() == 0.70 && worst <= 1e-12 &&
                  list_gap <= 1e-12 && v == 0.4 && got == want;
  return {ok, "len " + std::to_string(t.size()) + ", spacing dev " + fmt("%.1e", worst) +
                  ", vs independent list " + fmt("%.1e", list_gap) + "; IoU 0.40 pair: mF1 " +
                  fmt("%.4f", got) + " = " + std::to_string(below) + "/50"};
}

// --- 4 ----------------------------------------------------------------------

Outcome degradation_law() {
  SynthSpec spec;
  spec.classes = {{"A", 50, 0}, {"B", 50, 0}};
  spec.num_images = 10;
  spec.seed = 4;
  spec.even_spread = true;
  spec.cell = 64;
  const SynthCorpus c = synth_fixture(spec);
  const AnnotationsByImage gts = truth(c.index);
  const std::vector<std::string> vocab = c.index.vocabulary();
  auto predict = [&](const OracleConfig& oc) {
    OracleDetector det(gts, oc);
    DetectionsByImage out;
    for (const auto& r : c.index.images()) {
      const ImageSource img(r.image_id, r.dims, nullptr);
      out[r.image_id] = det.detect(img, vocab, std::nullopt, nullptr);
    }
    return evaluate_group({}, out, gts);
  };
  bool ok = c.index.annotations().size() == 100;
  std::string detail;
  for (double p : {0.1, 0.3, 0.5}) {
    const auto rep = predict({0.0, p, 0.0, 0.0, 99});
    const auto kept = 100 - std::llround(p * 100);
    bool exact = true;
    for (const auto& pt : rep.curve) {
      exact = exact && pt.counts.tp == kept && pt.counts.tp + pt.counts.fn == 100 &&
              pt.recall == static_cast<double>(kept) / 100.0;
    }
    ok = ok && exact;
    detail += "p=" + fmt("%.1f", p) + " recall " + fmt("%.2f", rep.curve[0].recall) +
              (exact ? " exact; " : " NOT exact; ");
  }
  double prev = 2.0;
  for (double sigma : {0.0, 2.0, 8.0}) {
    const double m = predict({sigma, 0.0, 0.0, 0.0, 99}).mean_iou_tp;
    ok = ok && m <= prev;
    prev = m;
    detail += "s=" + fmt("%.0f", sigma) + " mIoU " + fmt("%.4f", m) + " ";
  }
  return {ok, detail};
}

// --- 5 ----------------------------------------------------------------------

Outcome sss_anchor() {
  const double v = sss(0.83, 0.89);
  const bool ok = std::abs(v - 0.7387) <= 1e-12 && round_half_even(v) == "0.74";
  return {ok, "0.83 x 0.89 = " + fmt("%.15g", v) + " -> " + round_half_even(v)};
}

// --- 6 ----------------------------------------------------------------------

Outcome split_optimality() {
  std::mt19937_64 rng(6);
  const SeedSearchConfig search;
  int checked = 0, equal = 0, valid = 0, attempts = 0;
  const auto t0 = Clock::now();
  while (checked < 50 && attempts < 5000) {
    ++attempts;
    const int n = 8 + static_cast<int>(rng() % 5);
    const int classes = 2 + static_cast<int>(rng() % 3);
    const int n_exp = 2 + static_cast<int>(rng() % 2);
    const int n_test = 3 + static_cast<int>(rng() % static_cast<std::uint64_t>(n - n_exp - 2));
    const SplitConstraints cons{6, 10, n_exp, n_test};
    const SplitInstance inst = testing::random_split_instance(rng, n, classes, cons);
    const auto best = oracle::enumerate_split_optimum(testing::count_rows(inst), cons.m_exp,
                                                      cons.m_test, cons.n_exp, cons.n_test);
    if (!best.feasible) continue;
    ++checked;
    const SplitAssignment a = solve(inst, cons, search);
    equal += a.objectives.coverage == best.coverage &&
             std::abs(a.objectives.surplus - best.surplus) <= 1e-9 &&
             std::abs(a.objectives.test_reward - best.reward) <= 1e-9 * (1.0 + best.reward);
    valid += violations(inst, cons, a.decision).empty();
  }
  const bool ok = checked == 50 && equal == 50 && valid == 50;
  return {ok, std::to_string(equal) + "/" + std::to_string(checked) +
                  " instances at the enumerated optimum, " + std::to_string(valid) +
                  " satisfy all constraints (T=" + std::to_string(search.trials) + ", " +
                  fmt("%.1f s", seconds_since(t0)) + ")"};
}

// --- 7 ----------------------------------------------------------------------

Outcome table_one_feasibility() {
  bool ok = true;
  std::string detail;
  ImageId next = 1;
  for (const auto& src : testing::table_one_sources()) {
    const SynthCorpus c = synth_fixture(testing::table_one_spec(src, 2026, next));
    next += 1000;
    const SplitInstance inst = make_split_instance(c.index, src.name);
    const SplitConstraints cons;
    const auto t0 = Clock::now();
    const SplitAssignment a = solve(inst, cons, {1000, 0});
    const double secs = seconds_since(t0);
    const bool feasible = violations(inst, cons, a.decision).empty();
    ok = ok && feasible && secs < 10.0;
    detail += src.name + " " + fmt("%.1f s", secs) + (feasible ? "" : " INFEASIBLE");
    for (std::size_t k = 0; k < inst.classes.size(); ++k) {
      if (inst.classes[k] != "Schizont Cells") continue;
      const auto e = a.tallies.example_boxes[k];
      const auto t = a.tallies.test_boxes[k];
      ok = ok && e == 6 && t == 10;
      detail += " (Schizont example " + std::to_string(e) + ", test " + std::to_string(t) + ")";
    }
    detail += "; ";
  }
  return {ok, detail};
}

// --- 8 ----------------------------------------------------------------------

nlohmann::json oracle_binding(double q, std::uint64_t seed) {
  return {{"oracle", {{"q", q}, {"seed", seed}}}};
}

Outcome cascade_identity() {
  testing::TempDir dir;
  // Identity on the shipped corpus.
  nlohmann::json j{{"mode", "few_shot_mmc"},
                   {"k", 3},
                   {"seed", 1},
                   {"dataset", {{"index", kSource + "/data/synthetic/index.json"}}},
                   {"split", kSource + "/data/synthetic/split.jsonl"},
                   {"backends", {{"segmenter", oracle_binding(0, 1)},
                                 {"classifier", oracle_binding(0, 1)}}}};
  RunOptions o;
  o.output = dir.file("identity.jsonl");
  const auto ident = evaluate_run(run_experiment(parse_experiment_config(j), o).record);

  // Two classes, 20 boxes per image, 25 test images: 500 test boxes.
  SynthSpec spec;
  spec.source = "flip";
  spec.classes = {{"A", 300, 0}, {"B", 300, 0}};
  spec.num_images = 30;
  spec.seed = 8;
  spec.even_spread = true;
  const auto disk = testing::write_corpus_with_split(dir.str(), spec, {6, 10, 5, 25});
  j["dataset"]["index"] = disk.index;
  j["split"] = disk.split;
  j["backends"]["classifier"] = oracle_binding(0.5, 8);
  o.output = dir.file("flip.jsonl");
  const auto flip = evaluate_run(run_experiment(parse_experiment_config(j), o).record);
  const auto& at = flip.excluded.curve[0].counts;
  const double boxes = static_cast<double>(at.tp + at.fn);
  const double frac = at.tp / boxes;
  const bool ok = ident.excluded.mf1 == 1.0 && boxes == 500 && std::abs(frac - 0.5) <= 0.05;
  return {ok, "q=0 mF1 " + fmt("%.17g", ident.excluded.mf1) + "; q=0.5 TP " +
                  std::to_string(at.tp) + "/" + fmt("%.0f", boxes) + " = " +
                  fmt("%.3f", frac)};
}

// --- 9 ----------------------------------------------------------------------

Outcome golden_run() {
  testing::TempDir dir;
  const ExperimentConfig cfg = load_experiment_config(kSource + "/configs/golden.json");
  const std::string golden = detail::read_text(kSource + "/tests/golden/golden_report.json");
  RunOptions o;
  o.output = dir.file("straight.jsonl");
  const RunResult straight = run_experiment(cfg, o);
  const std::string a = evaluation_text(evaluate_run(straight.record));

  o.output = dir.file("killed.jsonl");
  o.stop_after = 20;
  run_experiment(cfg, o);
  {
    std::ofstream torn(o.output, std::ios::app);
    torn << R"({"type":"image","image_id":9,"status":"o)";
  }
  o.stop_after = static_cast<std::size_t>(-1);
  const RunResult resumed = run_experiment(cfg, o);
  const std::string b = evaluation_text(evaluate_run(resumed.record));
  const bool same_record = canonical_jsonl(straight.record) == canonical_jsonl(resumed.record);
  const bool ok = a == golden && b == golden && same_record && resumed.resumed == 20;
  return {ok, std::string("straight run ") + (a == golden ? "matches" : "DIFFERS from") +
                  " golden; kill after 20 + torn line + resume " +
                  (b == golden ? "matches" : "DIFFERS") +
                  (same_record ? ", records identical" : ", records DIFFER")};
}

// --- 10 ---------------------------------------------------------------------

Outcome wire_conformance() {
  using testing::FakeServer;
  bool ok = true;
  std::string detail;

  // Schema round trip.
  {
    FakeServer server;
    server.on("/detect", [](const FakeServer::Request&) {
      return FakeServer::Reply{
          200, R"({"detections": [{"bbox": [1.5, 2, 30, 40.25], "label": "A", "score": 0.75}]})"};
    });
    HttpDetector det({server.url(), "", 5, 0, 0.001, 1, 1}, nullptr);
    const ImageSource img(1, Image(64, 48, {1, 2, 3}));
    const SupportPayload support{{"B", encode_png(Image(4, 4, {9, 9, 9}))}};
    const auto out = det.detect(img, {"A", "B"}, std::string("find"), &support);
    const auto body = server.requests().at(0).json();
    const bool schema =
        body.size() == 4 && body.at("vocab") == nlohmann::json({"A", "B"}) &&
        body.at("prompt") == "find" && body.at("support").size() == 1 &&
        body["support"][0].size() == 2 && body["support"][0].at("label") == "B" &&
        decode_png(base64_decode(body["support"][0].at("image"))).dims() == ImageDims{4, 4} &&
        decode_png(base64_decode(body.at("image"))).data() == img.pixels().data() &&
        out.size() == 1 && out[0].bbox == BBox{1.5, 2, 30, 40.25} && out[0].class_label == "A" &&
        out[0].score == 0.75;
    ok = ok && schema;
    detail += schema ? "schema ok; " : "schema MISMATCH; ";
  }
  // 429 handling: persistent 429 makes 1 + max_retries attempts; two
  // failures then success logs exactly two retries.
  {
    FakeServer server;
    server.on("/segment", [](const FakeServer::Request&) {
      return FakeServer::Reply{429, "{}"};
    });
    RunLog log;
    HttpSegmenter seg({server.url(), "", 5, 3, 0.001, 1, 1}, &log);
    const ImageSource img(1, Image(8, 8));
    bool threw = false;
    try {
      seg.segment(img);
    } catch (const BackendError&) {
      threw = true;
    }
    const auto attempts = server.requests().size();
    const bool exhausted = threw && attempts == 4 && log.count("retry") == 3;

    FakeServer flaky;
    flaky.script("/segment", {{429, "{}"}, {429, "{}"}, {200, R"({"boxes": [[0,0,4,4]]})"}});
    RunLog log2;
    HttpSegmenter seg2({flaky.url(), "", 5, 3, 0.001, 1, 1}, &log2);
    const bool recovered = seg2.segment(img).size() == 1 && log2.count("retry") == 2;
    ok = ok && exhausted && recovered;
    detail += "max_retries=3 -> " + std::to_string(log.count("retry")) + " retries, " +
              std::to_string(attempts) + " requests; fail-twice -> " +
              std::to_string(log2.count("retry")) + " retries; ";
  }
  // zero_shot_t through the runner sends no support.
  {
    testing::TempDir dir;
    SynthSpec spec;
    spec.source = "wire";
    spec.classes = {{"A", 40, 0}, {"B", 40, 0}};
    spec.num_images = 12;
    spec.even_spread = true;
    const auto disk = testing::write_corpus_with_split(dir.str(), spec, {2, 4, 3, 7});
    FakeServer server;
    server.on("/detect", [](const FakeServer::Request&) {
      return FakeServer::Reply{200, R"({"detections": []})"};
    });
    nlohmann::json j{{"mode", "zero_shot_t"},
                     {"k", 0},
                     {"dataset", {{"index", disk.index}}},
                     {"split", disk.split},
                     {"prompt", "detect_text"},
                     {"prompt_dir", kSource + "/prompts"},
                     {"backends", {{"detector", {{"http", {{"endpoint", server.url()}}}}}}}};
    RunOptions o;
    o.output = dir.file("z.jsonl");
    run_experiment(parse_experiment_config(j), o);
    int with_support = 0;
    const auto reqs = server.requests();
    for (const auto& r : reqs) with_support += r.json().contains("support");
    ok = ok && reqs.size() == 7 && with_support == 0;
    detail += "zero_shot_t: " + std::to_string(with_support) + "/" +
              std::to_string(reqs.size()) + " requests carry support";
  }
  return {ok, detail};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> check;
  };
  const std::vector<Criterion> criteria{
      {1, "Assignment oracle", assignment_oracle},
      {2, "Metric identity", metric_identity},
      {3, "Threshold sweep", threshold_sweep},
      {4, "Degradation law", degradation_law},
      {5, "SSS arithmetic anchor", sss_anchor},
      {6, "Split optimality at desk scale", split_optimality},
      {7, "Table-I-shaped feasibility", table_one_feasibility},
      {8, "End-to-end cascade identity", cascade_identity},
      {9, "Golden run", golden_run},
      {10, "Wire conformance", wire_conformance},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s  %2d  %-32s %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed;
}
