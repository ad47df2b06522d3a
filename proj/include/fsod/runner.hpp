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

// Run records and the experiment runner.
//
// A run file is append-only JSONL. Line 1 is the header:
//   {"type": "run_header", "config_hash", "config", "config_dir",
//    "dataset", "method", "k", "mode", "started_at"}
// and each later line one image result:
//   {"type": "image", "image_id", "status": "ok"|"failed"|"skipped",
//    "predictions": [{"bbox": [x_min,y_min,x_max,y_max], "label",
//                     "score"?, "in_vocab"}],
//    "latency_ms", "error"?, "finished_at"}
// An image may appear several times across resumes; the last line wins.

#ifndef FSOD_RUNNER_HPP_
#define FSOD_RUNNER_HPP_

#include <algorithm>
#include <atomic>
#include <chrono>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "fsod/backends.hpp"
#include "fsod/dataset.hpp"
#include "fsod/errors.hpp"
#include "fsod/experiment_config.hpp"
#include "fsod/image.hpp"
#include "fsod/metrics.hpp"
#include "fsod/split_file.hpp"
#include "fsod/support.hpp"

namespace fsod {

enum class ImageStatus { kOk, kFailed, kSkipped };

inline const char* to_string(ImageStatus s) {
  switch (s) {
    case ImageStatus::kOk: return "ok";
    case ImageStatus::kFailed: return "failed";
    case ImageStatus::kSkipped: return "skipped";
  }
  return "?";
}

inline ImageStatus parse_status(const std::string& s) {
  if (s == "ok") return ImageStatus::kOk;
  if (s == "failed") return ImageStatus::kFailed;
  if (s == "skipped") return ImageStatus::kSkipped;
  throw ValidationError("unknown image status '" + s + "'");
}

struct RunEntry {
  ImageId image_id = 0;
  ImageStatus status = ImageStatus::kOk;
  std::vector<Detection> predictions;
  double latency_ms = 0.0;
  std::string error;
  std::string finished_at;
};

struct RunHeader {
  std::string config_hash;
  nlohmann::json config;  // normalized ExperimentConfig
  std::string config_dir;
  GroupKey key;
  std::string started_at;
};

struct RunRecord {
  RunHeader header;
  std::vector<RunEntry> entries;  // one per image, sorted by image_id

  const RunEntry* find(ImageId id) const {
    const auto it = std::lower_bound(
        entries.begin(), entries.end(), id,
        [](const RunEntry& e, ImageId v) { return e.image_id < v; });
    return it != entries.end() && it->image_id == id ? &*it : nullptr;
  }
  std::size_t count(ImageStatus s) const {
    return static_cast<std::size_t>(std::count_if(
        entries.begin(), entries.end(), [&](const RunEntry& e) { return e.status == s; }));
  }
};

namespace detail {

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%S", &tm);
  char out[40];
  std::snprintf(out, sizeof(out), "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

inline nlohmann::json detection_json(const Detection& d) {
  nlohmann::json j{{"bbox", {d.bbox.x_min, d.bbox.y_min, d.bbox.x_max, d.bbox.y_max}},
                   {"label", d.class_label}};
  if (d.score) j["score"] = *d.score;
  j["in_vocab"] = d.in_vocab;
  return j;
}

inline Detection detection_from_json(const nlohmann::json& j) {
  const auto& b = j.at("bbox");
  if (!b.is_array() || b.size() != 4) throw ValidationError("prediction bbox must have 4 numbers");
  Detection d;
  d.bbox = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
  require_valid(d.bbox, "prediction");
  d.class_label = j.at("label").get<std::string>();
  if (j.contains("score") && !j["score"].is_null()) d.score = j["score"].get<double>();
  d.in_vocab = j.value("in_vocab", true);
  return d;
}

}  // namespace detail

inline nlohmann::json header_json(const RunHeader& h) {
  return {{"type", "run_header"},   {"config_hash", h.config_hash},
          {"config", h.config},     {"config_dir", h.config_dir},
          {"dataset", h.key.dataset}, {"method", h.key.method},
          {"k", h.key.k},           {"started_at", h.started_at}};
}

inline nlohmann::json entry_json(const RunEntry& e, bool with_timing = true) {
  nlohmann::json preds = nlohmann::json::array();
  for (const auto& d : e.predictions) preds.push_back(detail::detection_json(d));
  nlohmann::json j{{"type", "image"}, {"image_id", e.image_id},
                   {"status", to_string(e.status)}, {"predictions", preds}};
  if (!e.error.empty()) j["error"] = e.error;
  if (with_timing) {
    j["latency_ms"] = e.latency_ms;
    j["finished_at"] = e.finished_at;
  }
  return j;
}

// Result of reading a run file. `valid_bytes` is the length of the prefix
// made of complete, parseable lines; a torn final line is left out.
struct LoadedRun {
  RunRecord record;
  std::uintmax_t valid_bytes = 0;
  bool torn_tail = false;
};

inline LoadedRun parse_run(const std::string& text, const std::string& name = "run") {
  LoadedRun out;
  std::map<ImageId, RunEntry> latest;
  bool have_header = false;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const bool complete = nl != std::string::npos;
    const std::string line = text.substr(pos, complete ? nl - pos : std::string::npos);
    ++line_no;
    const bool last = !complete || nl + 1 == text.size();
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      if (last && have_header) {
        out.torn_tail = true;
        break;
      }
      throw ValidationError(name + " line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!complete) {  // parseable but unterminated: still a torn write
      out.torn_tail = true;
      break;
    }
    try {
      const std::string type = j.at("type").get<std::string>();
      if (type == "run_header") {
        if (have_header) throw ValidationError("second run header");
        RunHeader& h = out.record.header;
        h.config_hash = j.at("config_hash").get<std::string>();
        h.config = j.at("config");
        h.config_dir = j.value("config_dir", std::string{});
        h.key = {j.at("dataset").get<std::string>(), j.at("method").get<std::string>(),
                 j.at("k").get<int>()};
        h.started_at = j.value("started_at", std::string{});
        have_header = true;
      } else if (type == "image") {
        if (!have_header) throw ValidationError("image line before the run header");
        RunEntry e;
        e.image_id = j.at("image_id").get<ImageId>();
        e.status = parse_status(j.at("status").get<std::string>());
        for (const auto& d : j.at("predictions")) {
          e.predictions.push_back(detail::detection_from_json(d));
        }
        e.latency_ms = j.value("latency_ms", 0.0);
        e.error = j.value("error", std::string{});
        e.finished_at = j.value("finished_at", std::string{});
        latest[e.image_id] = std::move(e);
      } else {
        throw ValidationError("unknown line type '" + type + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(name + " line " + std::to_string(line_no) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(name + " line " + std::to_string(line_no) + ": " + e.what());
    }
    pos = nl + 1;
    out.valid_bytes = pos;
  }
  if (!have_header) throw ValidationError(name + ": missing run header");
  for (auto& kv : latest) out.record.entries.push_back(std::move(kv.second));
  return out;
}

inline RunRecord load_run(const std::string& path) {
  return parse_run(detail::read_text(path), "'" + path + "'").record;
}

// Byte-stable form for comparisons: header without its timestamp, entries
// sorted by image id without latency or timestamps.
inline std::string canonical_jsonl(const RunRecord& r) {
  nlohmann::json h = header_json(r.header);
  h.erase("started_at");
  std::string out = h.dump() + "\n";
  for (const auto& e : r.entries) out += entry_json(e, false).dump() + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Inputs resolved from a config.

struct RunInputs {
  DatasetIndex index;  // restricted to the configured source
  SplitFile split;
  std::vector<std::string> vocab;
  std::string image_root;
  std::string dataset;
};

inline RunInputs resolve_inputs(const ExperimentConfig& cfg) {
  RunInputs in;
  DatasetIndex full = load_index(cfg.resolve(cfg.index_path), cfg.index_format);
  const auto sources = full.sources();
  if (!cfg.source.empty()) {
    if (std::find(sources.begin(), sources.end(), cfg.source) == sources.end()) {
      throw ValidationError("dataset.source '" + cfg.source + "' not found in the index");
    }
    in.index = full.subset(cfg.source);
    in.dataset = cfg.source;
  } else if (sources.size() == 1) {
    in.index = std::move(full);
    in.dataset = sources[0].empty() ? "dataset" : sources[0];
  } else {
    throw ValidationError("index has several sources; set dataset.source");
  }
  in.split = SplitFile::load(cfg.resolve(cfg.split_path));
  in.vocab = in.index.vocabulary();
  if (in.vocab.empty()) throw ValidationError("dataset has no annotated classes");
  const std::string root = cfg.image_root.empty()
                               ? std::filesystem::path(cfg.resolve(cfg.index_path))
                                     .parent_path()
                                     .string()
                               : cfg.resolve(cfg.image_root);
  in.image_root = root;
  return in;
}

// Test-split images of the configured dataset, ascending. Every listed test
// image must exist in the index.
inline std::vector<ImageId> test_images(const RunInputs& in) {
  std::vector<ImageId> out;
  for (const auto& sec : in.split.sections()) {
    for (std::size_t i = 0; i < sec.images.size(); ++i) {
      if (sec.sides[i] != Side::kTest) continue;
      const ImageId id = sec.images[i].image_id;
      if (in.index.contains(id)) {
        out.push_back(id);
      } else if (sec.source == in.dataset) {
        throw ValidationError("split lists test image " + std::to_string(id) +
                              " that is not in the index");
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Execution.

struct RunOptions {
  std::string output;  // run file path
  bool resume = true;
  // Stop after this many new image lines, as if the process were killed.
  std::size_t stop_after = static_cast<std::size_t>(-1);
  RunLog* log = nullptr;
};

struct RunResult {
  RunRecord record;
  std::size_t processed = 0;  // image lines written by this call
  std::size_t resumed = 0;    // ok images carried over from the file
  bool complete = false;      // every test image has an ok entry
};

namespace detail {

struct Backends {
  std::unique_ptr<Detector> detector;
  std::unique_ptr<Segmenter> segmenter;
  std::unique_ptr<Classifier> classifier;

  bool needs_pixels() const {
    return (detector && detector->needs_pixels()) ||
           (segmenter && segmenter->needs_pixels()) ||
           (classifier && classifier->needs_pixels());
  }
  int max_parallel() const {
    int n = 1;
    if (detector) n = std::max(n, detector->max_parallel());
    if (segmenter) n = std::max(n, segmenter->max_parallel());
    if (classifier) n = std::max(n, classifier->max_parallel());
    return n;
  }
};

inline Backends make_backends(const ExperimentConfig& cfg, const DatasetIndex& index,
                              RunLog* log) {
  const AnnotationsByImage truth(index.by_image().begin(), index.by_image().end());
  Backends b;
  using Kind = BackendBinding::Kind;
  if (cfg.detector) {
    if (cfg.detector->kind == Kind::kOracle) {
      b.detector = std::make_unique<OracleDetector>(truth, cfg.detector->oracle);
    } else {
      b.detector = std::make_unique<HttpDetector>(cfg.detector->http, log);
    }
  }
  if (cfg.segmenter) {
    if (cfg.segmenter->kind == Kind::kOracle) {
      b.segmenter = std::make_unique<OracleSegmenter>(truth, cfg.segmenter->oracle);
    } else {
      b.segmenter = std::make_unique<HttpSegmenter>(cfg.segmenter->http, log);
    }
  }
  if (cfg.classifier) {
    if (cfg.classifier->kind == Kind::kOracle) {
      b.classifier = std::make_unique<OracleClassifier>(truth, cfg.classifier->oracle);
    } else {
      b.classifier = std::make_unique<HttpClassifier>(cfg.classifier->http, log);
    }
  }
  return b;
}

// Serialized appends; each line is flushed before the call returns.
class LineWriter {
 public:
  explicit LineWriter(const std::string& path) : out_(path, std::ios::app | std::ios::binary) {
    if (!out_) throw IoError("cannot open run file '" + path + "' for writing");
  }
  void append(const nlohmann::json& j) {
    const std::string line = j.dump() + "\n";
    std::lock_guard<std::mutex> lock(mu_);
    out_ << line;
    out_.flush();
    if (!out_) throw IoError("write to run file failed");
  }

 private:
  std::mutex mu_;
  std::ofstream out_;
};

inline std::vector<Detection> run_pipeline(const ExperimentConfig& cfg,
                                           const RunInputs& in, Backends& be,
                                           const ImageSource& img,
                                           const std::optional<std::string>& prompt,
                                           const SupportPayload* support,
                                           RunLog* log) {
  switch (cfg.mode) {
    case Mode::kZeroShotT:
      return be.detector->detect(img, in.vocab, prompt, nullptr);
    case Mode::kFewShotV:
      return be.detector->detect(img, in.vocab, std::nullopt, support);
    case Mode::kFewShotMmd:
      return be.detector->detect(img, in.vocab, prompt, support);
    case Mode::kFewShotMmc: {
      std::vector<Detection> out;
      for (const BBox& box : be.segmenter->segment(img)) {
        BBox region;
        try {
          region = crop_region(box, img.dims(), cfg.crop_margin);
        } catch (const ValidationError& e) {
          log_event(log, {{"event", "warning"}, {"image_id", img.image_id()},
                          {"message", std::string("proposal dropped: ") + e.what()}});
          continue;
        }
        const CropInput crop{&img, box, region};
        const Classification c = be.classifier->classify(crop, in.vocab, support);
        out.push_back({box, c.label, c.score, c.valid});
      }
      return out;
    }
  }
  return {};
}

}  // namespace detail

inline SupportPayload make_support_payload(const SupportSet& s, const RunInputs& in,
                                           bool with_pixels) {
  SupportPayload out;
  std::map<ImageId, Image> cache;
  for (const auto& [label, crops] : s.per_class) {
    for (const auto& c : crops) {
      SupportExample ex{label, {}};
      if (with_pixels) {
        auto it = cache.find(c.image_id);
        if (it == cache.end()) {
          const auto& rec = in.index.record(c.image_id);
          Image img = read_png(resolve_image_path(rec, in.image_root));
          if (img.dims() != rec.dims) {
            throw IoError("image " + std::to_string(rec.image_id) +
                          " does not match the dims in the index");
          }
          it = cache.emplace(c.image_id, std::move(img)).first;
        }
        ex.png = extract_crop(it->second, c.box, s.margin);
      }
      out.push_back(std::move(ex));
    }
  }
  return out;
}

// Runs (or resumes) one experiment, appending to options.output. Images with
// an ok line in an existing run file of the same config hash are not redone.
inline RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opt) {
  cfg.validate();
  if (opt.output.empty()) throw ValidationError("run output path is required");
  const RunInputs in = resolve_inputs(cfg);
  const std::vector<ImageId> tests = test_images(in);
  const std::string hash = config_hash(cfg);

  std::optional<SupportSet> support_set;
  if (uses_support(cfg.mode)) {
    support_set = build_support(in.index, in.split, cfg.k, cfg.seed, cfg.crop_margin);
    assert_no_test_leak(*support_set, in.split);
    for (const auto& [label, crops] : support_set->per_class) {
      for (const auto& c : crops) {
        if (std::binary_search(tests.begin(), tests.end(), c.image_id)) {
          throw ValidationError("support crop for '" + label + "' comes from test image " +
                                std::to_string(c.image_id));
        }
      }
    }
  }
  std::optional<std::string> prompt;
  if (uses_prompt(cfg.mode)) {
    prompt = render_prompt(load_prompt_template(cfg), in.vocab, cfg.k);
  }

  RunResult result;
  std::map<ImageId, RunEntry> done;
  namespace fs = std::filesystem;
  const bool exists = fs::exists(opt.output) && fs::file_size(opt.output) > 0;
  RunHeader header;
  if (exists && opt.resume) {
    LoadedRun prev = parse_run(detail::read_text(opt.output), "'" + opt.output + "'");
    if (prev.record.header.config_hash != hash) {
      throw ValidationError("config hash mismatch: '" + opt.output + "' was written by config " +
                            prev.record.header.config_hash + ", this config is " + hash);
    }
    if (prev.torn_tail) {
      fs::resize_file(opt.output, prev.valid_bytes);
      log_event(opt.log, {{"event", "torn_line_dropped"}, {"file", opt.output}});
    }
    header = prev.record.header;
    for (auto& e : prev.record.entries) {
      if (e.status == ImageStatus::kOk) done[e.image_id] = e;
    }
    result.resumed = done.size();
  } else {
    if (exists) fs::remove(opt.output);
    if (fs::path(opt.output).has_parent_path()) {
      fs::create_directories(fs::path(opt.output).parent_path());
    }
    header.config_hash = hash;
    header.config = to_json(cfg);
    header.config_dir = cfg.base_dir;
    header.key = {in.dataset, cfg.method, cfg.k};
    header.started_at = detail::utc_now();
    detail::LineWriter(opt.output).append(header_json(header));
  }

  std::vector<ImageId> pending;
  for (ImageId id : tests) {
    if (!done.count(id)) pending.push_back(id);
  }
  std::vector<ImageId> skipped;
  if (cfg.limit >= 0 && pending.size() > static_cast<std::size_t>(cfg.limit)) {
    skipped.assign(pending.begin() + cfg.limit, pending.end());
    pending.resize(static_cast<std::size_t>(cfg.limit));
  }

  detail::Backends be = detail::make_backends(cfg, in.index, opt.log);
  const bool pixels = be.needs_pixels();
  SupportPayload payload;
  if (support_set) payload = make_support_payload(*support_set, in, pixels);
  const SupportPayload* support_ptr = support_set ? &payload : nullptr;

  detail::LineWriter writer(opt.output);
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> claimed{0};
  std::atomic<std::size_t> appended{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  std::atomic<bool> stop{false};

  auto work = [&] {
    for (;;) {
      if (stop.load()) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= pending.size()) return;
      if (claimed.fetch_add(1) >= opt.stop_after) {
        stop.store(true);
        return;
      }
      const ImageId id = pending[i];
      const ImageRecord& rec = in.index.record(id);
      const std::string path = resolve_image_path(rec, in.image_root);
      ImageSource img(id, rec.dims, [path] { return read_png(path); });
      RunEntry e;
      e.image_id = id;
      const auto t0 = std::chrono::steady_clock::now();
      try {
        e.predictions = detail::run_pipeline(cfg, in, be, img, prompt, support_ptr, opt.log);
        e.status = ImageStatus::kOk;
      } catch (const BackendError& ex) {
        e.status = ImageStatus::kFailed;
        e.error = ex.what();
        log_event(opt.log, {{"event", "backend_error"}, {"image_id", id},
                            {"message", ex.what()}, {"raw_response", ex.raw_response()}});
      } catch (const IoError& ex) {
        e.status = ImageStatus::kFailed;
        e.error = ex.what();
        log_event(opt.log, {{"event", "io_error"}, {"image_id", id}, {"message", ex.what()}});
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
        stop.store(true);
        return;
      }
      e.latency_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - t0).count();
      e.finished_at = detail::utc_now();
      writer.append(entry_json(e));
      appended.fetch_add(1);
    }
  };

  const int nworkers = std::max(
      1, std::min<int>(cfg.workers > 0 ? cfg.workers : be.max_parallel(),
                       static_cast<int>(std::max<std::size_t>(pending.size(), 1))));
  {
    std::vector<std::jthread> pool;
    for (int w = 1; w < nworkers; ++w) pool.emplace_back(work);
    work();
  }
  if (first_error) std::rethrow_exception(first_error);
  if (!stop.load()) {
    for (ImageId id : skipped) {
      RunEntry e;
      e.image_id = id;
      e.status = ImageStatus::kSkipped;
      e.error = "beyond limit";
      e.finished_at = detail::utc_now();
      writer.append(entry_json(e));
    }
  }

  result.processed = appended.load();
  result.record = load_run(opt.output);
  result.complete = true;
  for (ImageId id : tests) {
    const RunEntry* e = result.record.find(id);
    result.complete = result.complete && e != nullptr && e->status == ImageStatus::kOk;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation.

// Two accountings of images without usable predictions (failed, skipped or
// absent from the record): left out entirely, or scored as if the backend
// had returned nothing.
struct Evaluation {
  MetricReport excluded;
  MetricReport counted_as_empty;
  std::vector<ImageId> unscored;  // failed, skipped or missing, ascending
};

inline Evaluation evaluate(const RunRecord& record, const DatasetIndex& index,
                           const SplitFile& split, const MetricConfig& cfg = {}) {
  std::vector<ImageId> tests;
  for (ImageId id : split.images_in(Side::kTest)) {
    if (index.contains(id)) tests.push_back(id);
  }
  for (const auto& e : record.entries) {
    if (!index.contains(e.image_id)) {
      throw ValidationError("record image " + std::to_string(e.image_id) +
                            " is not in the index");
    }
    if (split.side_of(e.image_id) != Side::kTest) {
      throw ValidationError("record image " + std::to_string(e.image_id) +
                            " is not in the test split");
    }
  }
  DetectionsByImage preds;
  AnnotationsByImage gts_ok, gts_all;
  Evaluation out;
  for (ImageId id : tests) {
    const auto& anns = index.annotations_of(id);
    gts_all[id] = anns;
    const RunEntry* e = record.find(id);
    if (e != nullptr && e->status == ImageStatus::kOk) {
      gts_ok[id] = anns;
      preds[id] = e->predictions;
    } else {
      out.unscored.push_back(id);
    }
  }
  const GroupKey& key = record.header.key;
  PooledCounts ok = pool_images(preds, gts_ok, cfg);
  out.excluded = make_report(key, ok, cfg);
  PooledCounts all = ok;
  for (ImageId id : out.unscored) {
    accumulate_image(all, cfg, {}, gts_all[id]);
  }
  out.counted_as_empty = make_report(key, all, cfg);
  out.excluded.failed_images = static_cast<std::int64_t>(out.unscored.size());
  out.counted_as_empty.failed_images = out.excluded.failed_images;
  return out;
}

// Evaluates a run file against the index and split named in its header.
inline Evaluation evaluate_run(const RunRecord& record, const MetricConfig& cfg = {}) {
  ExperimentConfig ec = parse_experiment_config(record.header.config, record.header.config_dir);
  const RunInputs in = resolve_inputs(ec);
  return evaluate(record, in.index, in.split, cfg);
}

// ---------------------------------------------------------------------------
// Serialization of metric reports.

inline nlohmann::json counts_json(const Counts& c) {
  return {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}};
}

inline nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& p : r.curve) {
    curve.push_back({{"threshold", p.threshold}, {"tp", p.counts.tp}, {"fp", p.counts.fp},
                     {"fn", p.counts.fn}, {"precision", p.precision},
                     {"recall", p.recall}, {"f1", p.f1}});
  }
  nlohmann::json per_class = nlohmann::json::array();
  for (const auto& c : r.per_class) {
    per_class.push_back({{"class", c.class_label}, {"mf1", c.mf1},
                         {"at_anchor", counts_json(c.at_anchor)}});
  }
  nlohmann::json j{{"dataset", r.key.dataset},
                   {"method", r.key.method},
                   {"k", r.key.k},
                   {"pooling", r.pooling == Pooling::kMicro ? "micro" : "macro"},
                   {"mf1", r.mf1},
                   {"mean_iou_tp", r.mean_iou_tp},
                   {"empty", r.empty},
                   {"images", r.images},
                   {"failed_images", r.failed_images},
                   {"anchor_tp", r.anchor_tp},
                   {"anchor_iou_sum", r.anchor_iou_sum},
                   {"curve", curve},
                   {"per_class", per_class}};
  if (!r.members.empty()) j["members"] = r.members;
  return j;
}

inline nlohmann::json to_json(const Evaluation& e) {
  return {{"excluded", to_json(e.excluded)},
          {"counted_as_empty", to_json(e.counted_as_empty)},
          {"unscored_image_ids", e.unscored}};
}

// Stable text form used for golden files.
inline std::string evaluation_text(const Evaluation& e) { return to_json(e).dump(2) + "\n"; }

}  // namespace fsod

#endif  // FSOD_RUNNER_HPP_
