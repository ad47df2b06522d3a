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

// Detector, classifier and segmenter backends. Remote backends speak a small
// JSON-over-HTTP protocol; oracle backends derive their answers from ground
// truth with seeded noise so the whole harness can run offline.
//
// Wire protocol (all POST, Content-Type: application/json):
//   <endpoint>/detect    {image, vocab, prompt?, support?: [{image, label}]}
//                        -> {detections: [{bbox: [x_min,y_min,x_max,y_max],
//                                          label, score?}]}
//   <endpoint>/classify  {image, vocab, support?: [{image, label}]}
//                        -> {label, score?}
//   <endpoint>/segment   {image} -> {boxes: [[x_min,y_min,x_max,y_max], ...]}
// `image` fields hold base64 PNG. Keys that do not apply are omitted, never
// sent empty.

#ifndef FSOD_BACKENDS_HPP_
#define FSOD_BACKENDS_HPP_

#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <semaphore>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fsod/dataset.hpp"
#include "fsod/errors.hpp"
#include "fsod/geometry.hpp"
#include "fsod/image.hpp"
#include "fsod/labeled_box.hpp"
#include "fsod/metrics.hpp"
#include "fsod/split_optimizer.hpp"

namespace fsod {

// ---------------------------------------------------------------------------
// Base64 (RFC 4648, padded).

inline std::string base64_encode(const Bytes& in) {
  static constexpr char kAlphabet[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((in.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < in.size(); i += 3) {
    const std::uint32_t v = (in[i] << 16) | (in[i + 1] << 8) | in[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  if (i < in.size()) {
    std::uint32_t v = in[i] << 16;
    if (i + 1 < in.size()) v |= in[i + 1] << 8;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += i + 1 < in.size() ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

inline Bytes base64_decode(const std::string& in) {
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (in.size() % 4 != 0) throw ValidationError("base64 length not a multiple of 4");
  Bytes out;
  out.reserve(in.size() / 4 * 3);
  for (std::size_t i = 0; i < in.size(); i += 4) {
    int v[4];
    int pad = 0;
    for (int j = 0; j < 4; ++j) {
      const char c = in[i + j];
      if (c == '=' && i + 4 == in.size() && j >= 2) {
        v[j] = 0;
        ++pad;
        continue;
      }
      if (pad > 0 || (v[j] = value(c)) < 0) throw ValidationError("invalid base64");
    }
    const std::uint32_t w = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
    out.push_back(static_cast<std::uint8_t>(w >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>((w >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(w & 0xff));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Run log: the one shared sink. Each event is a JSON line; appends from
// concurrent workers are serialized.

class RunLog {
 public:
  RunLog() = default;  // in-memory only
  explicit RunLog(const std::string& path) {
    out_.open(path, std::ios::app);
    if (!out_) throw IoError("cannot open run log '" + path + "'");
  }

  void write(nlohmann::json event) {
    const std::string line = event.dump();
    std::lock_guard<std::mutex> lock(mu_);
    events_.push_back(std::move(event));
    if (out_.is_open()) {
      out_ << line << '\n';
      out_.flush();
    }
  }

  std::vector<nlohmann::json> events() const {
    std::lock_guard<std::mutex> lock(mu_);
    return events_;
  }

  std::size_t count(const std::string& kind) const {
    std::lock_guard<std::mutex> lock(mu_);
    return static_cast<std::size_t>(
        std::count_if(events_.begin(), events_.end(), [&](const auto& e) {
          return e.value("event", std::string{}) == kind;
        }));
  }

 private:
  mutable std::mutex mu_;
  std::vector<nlohmann::json> events_;
  std::ofstream out_;
};

inline void log_event(RunLog* log, nlohmann::json event) {
  if (log != nullptr) log->write(std::move(event));
}

// ---------------------------------------------------------------------------
// Backend inputs.

// A test image whose pixels are read on first use. Oracle backends only need
// the id and dims, so offline runs never touch the disk.
class ImageSource {
 public:
  ImageSource(ImageId id, ImageDims dims, std::function<Image()> loader)
      : id_(id), dims_(dims), state_(std::make_shared<State>()) {
    state_->loader = std::move(loader);
  }

  ImageSource(ImageId id, Image img)
      : id_(id), dims_(img.dims()), state_(std::make_shared<State>()) {
    state_->image = std::move(img);
    state_->loaded = true;
  }

  ImageId image_id() const { return id_; }
  ImageDims dims() const { return dims_; }

  // Copies share one lazily loaded raster.
  const Image& pixels() const {
    std::lock_guard<std::mutex> lock(state_->mu);
    if (!state_->loaded) {
      if (!state_->loader) throw IoError("no pixels for image " + std::to_string(id_));
      Image img = state_->loader();
      if (img.dims() != dims_) {
        throw IoError("image " + std::to_string(id_) + " is " +
                      std::to_string(img.width()) + "x" +
                      std::to_string(img.height()) + ", index says " +
                      std::to_string(dims_.width) + "x" +
                      std::to_string(dims_.height));
      }
      state_->image = std::move(img);
      state_->loaded = true;
    }
    return state_->image;
  }

  Bytes png() const { return encode_png(pixels()); }

 private:
  struct State {
    std::mutex mu;
    std::function<Image()> loader;
    Image image;
    bool loaded = false;
  };
  ImageId id_;
  ImageDims dims_;
  std::shared_ptr<State> state_;
};

// A proposal crop handed to a classifier: the proposal box on its source
// image plus the padded region actually cut out.
struct CropInput {
  const ImageSource* source = nullptr;
  BBox box;
  BBox region;

  Bytes png() const {
    const PixelRect r = pixel_rect(region, source->dims());
    return encode_png(source->pixels().crop(r));
  }
};

struct SupportExample {
  std::string label;
  Bytes png;  // empty when only oracle backends are bound
};
using SupportPayload = std::vector<SupportExample>;

struct Classification {
  std::string label;
  std::optional<double> score;
  bool valid = true;  // false when the label is not in the vocabulary
};

class Detector {
 public:
  virtual ~Detector() = default;
  virtual std::vector<Detection> detect(const ImageSource& image,
                                        const std::vector<std::string>& vocab,
                                        const std::optional<std::string>& prompt,
                                        const SupportPayload* support) = 0;
  virtual bool needs_pixels() const = 0;
  virtual int max_parallel() const { return 1; }
};

class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual Classification classify(const CropInput& crop,
                                  const std::vector<std::string>& vocab,
                                  const SupportPayload* support) = 0;
  virtual bool needs_pixels() const = 0;
  virtual int max_parallel() const { return 1; }
};

class Segmenter {
 public:
  virtual ~Segmenter() = default;
  virtual std::vector<BBox> segment(const ImageSource& image) = 0;
  virtual bool needs_pixels() const = 0;
  virtual int max_parallel() const { return 1; }
};

// ---------------------------------------------------------------------------
// Post-processing shared by every backend.

inline constexpr double kProposalDedupIou = 0.95;

// Greedy in input order: a box survives unless it overlaps an earlier
// survivor at IoU > 0.95.
inline std::vector<BBox> dedup_proposals(const std::vector<BBox>& boxes,
                                         double threshold = kProposalDedupIou) {
  std::vector<BBox> kept;
  for (const auto& b : boxes) {
    const bool dup = std::any_of(kept.begin(), kept.end(), [&](const BBox& k) {
      return iou(k, b) > threshold;
    });
    if (!dup) kept.push_back(b);
  }
  return kept;
}

inline bool in_vocab(const std::string& label, const std::vector<std::string>& vocab) {
  return std::find(vocab.begin(), vocab.end(), label) != vocab.end();
}

// Exact match first, then a unique match after trimming blanks and folding
// ASCII case. Anything else is invalid.
inline Classification normalize_label(const std::string& raw,
                                      const std::vector<std::string>& vocab,
                                      std::optional<double> score = std::nullopt) {
  if (in_vocab(raw, vocab)) return {raw, score, true};
  auto fold = [](const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return std::string{};
    const auto e = s.find_last_not_of(" \t\r\n");
    std::string out = s.substr(b, e - b + 1);
    for (auto& ch : out) {
      if (ch >= 'A' && ch <= 'Z') ch = static_cast<char>(ch - 'A' + 'a');
    }
    return out;
  };
  const std::string key = fold(raw);
  const std::string* hit = nullptr;
  for (const auto& v : vocab) {
    if (fold(v) == key) {
      if (hit != nullptr) return {raw, score, false};
      hit = &v;
    }
  }
  if (hit != nullptr) return {*hit, score, true};
  return {raw, score, false};
}

// Clips to the image; boxes with nothing left are dropped. Both cases are
// logged as warnings.
inline std::optional<BBox> admit_box(const BBox& b, const ImageDims& dims,
                                     ImageId image_id, const char* backend,
                                     RunLog* log) {
  const auto c = clip(b, dims);
  if (!c) {
    log_event(log, {{"event", "warning"}, {"backend", backend},
                    {"image_id", image_id}, {"message", "box outside image dropped"},
                    {"bbox", {b.x_min, b.y_min, b.x_max, b.y_max}}});
    return std::nullopt;
  }
  if (!(*c == b)) {
    log_event(log, {{"event", "warning"}, {"backend", backend},
                    {"image_id", image_id}, {"message", "box clipped to image"},
                    {"bbox", {b.x_min, b.y_min, b.x_max, b.y_max}}});
  }
  return c;
}

// ---------------------------------------------------------------------------
// Oracle backends.

struct OracleConfig {
  double sigma = 0.0;  // uniform jitter half-width per coordinate, pixels
  double p = 0.0;      // drop fraction
  double q = 0.0;      // label flip probability
  double r = 0.0;      // expected spurious boxes per image
  std::uint64_t seed = 0;

  void validate() const {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
      throw ValidationError("oracle sigma must be >= 0");
    }
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("oracle p must be in [0,1]");
    if (!(q >= 0.0 && q <= 1.0)) throw ValidationError("oracle q must be in [0,1]");
    if (!(r >= 0.0) || !std::isfinite(r)) throw ValidationError("oracle r must be >= 0");
  }
};

namespace detail {

inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline bool bernoulli(std::mt19937_64& rng, double p) {
  if (p <= 0.0) return false;
  if (p >= 1.0) return true;
  return uniform01(rng) < p;
}

enum class OracleStream : std::uint64_t {
  kDetect = 0x64657465ULL,
  kSegment = 0x7365676dULL,
  kClassify = 0x636c6173ULL,
};

inline std::mt19937_64 oracle_rng(std::uint64_t seed, OracleStream stream,
                                  std::uint64_t key) {
  return std::mt19937_64(
      splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(stream) ^
                                   splitmix64(key))));
}

inline std::uint64_t box_key(ImageId id, const BBox& b) {
  std::uint64_t h = splitmix64(static_cast<std::uint64_t>(id));
  for (double v : {b.x_min, b.y_min, b.x_max, b.y_max}) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    h = splitmix64(h ^ bits);
  }
  return h;
}

// Drop, jitter and spurious-box generation shared by the oracle detector and
// segmenter. Exactly round(p * n) boxes are dropped per image.
inline std::vector<Annotation> perturb_truth(const std::vector<Annotation>& gts,
                                             const ImageDims& dims,
                                             const OracleConfig& cfg,
                                             const std::vector<std::string>& vocab,
                                             std::mt19937_64& rng) {
  const std::size_t n = gts.size();
  const auto drop = static_cast<std::size_t>(std::llround(cfg.p * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  shuffle(order, rng);
  std::vector<char> keep(n, 1);
  for (std::size_t i = 0; i < std::min(drop, n); ++i) keep[order[i]] = 0;

  std::vector<Annotation> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (!keep[i]) continue;
    BBox b = gts[i].bbox;
    if (cfg.sigma > 0.0) {
      BBox j = b;
      for (double* v : {&j.x_min, &j.y_min, &j.x_max, &j.y_max}) {
        *v += (2.0 * uniform01(rng) - 1.0) * cfg.sigma;
      }
      if (j.x_min > j.x_max) std::swap(j.x_min, j.x_max);
      if (j.y_min > j.y_max) std::swap(j.y_min, j.y_max);
      if (j.x_max > j.x_min && j.y_max > j.y_min) b = j;
    }
    if (auto c = clip(b, dims)) out.push_back({gts[i].image_id, *c, gts[i].class_label});
  }
  if (cfg.r > 0.0 && !vocab.empty()) {
    const double whole = std::floor(cfg.r);
    const int extra = static_cast<int>(whole) + (bernoulli(rng, cfg.r - whole) ? 1 : 0);
    const double side_max = std::max(2.0, std::min(dims.width, dims.height) / 3.0);
    for (int s = 0; s < extra; ++s) {
      const double w = 1.0 + uniform01(rng) * (side_max - 1.0);
      const double h = 1.0 + uniform01(rng) * (side_max - 1.0);
      const double x = uniform01(rng) * std::max(0.0, dims.width - w);
      const double y = uniform01(rng) * std::max(0.0, dims.height - h);
      const std::string& label = vocab[uniform_below(rng, vocab.size())];
      const BBox sb{x, y, std::min<double>(x + w, dims.width),
                    std::min<double>(y + h, dims.height)};
      if (is_valid(sb)) out.push_back({gts.empty() ? 0 : gts[0].image_id, sb, label});
    }
  }
  return out;
}

inline std::string flip_label(const std::string& label,
                              const std::vector<std::string>& vocab,
                              std::mt19937_64& rng) {
  std::vector<const std::string*> others;
  for (const auto& v : vocab) {
    if (v != label) others.push_back(&v);
  }
  if (others.empty()) return label;
  return *others[uniform_below(rng, others.size())];
}

}  // namespace detail

class OracleDetector final : public Detector {
 public:
  OracleDetector(AnnotationsByImage truth, OracleConfig cfg)
      : truth_(std::move(truth)), cfg_(cfg) {
    cfg_.validate();
  }

  std::vector<Detection> detect(const ImageSource& image,
                                const std::vector<std::string>& vocab,
                                const std::optional<std::string>&,
                                const SupportPayload*) override {
    const auto it = truth_.find(image.image_id());
    static const std::vector<Annotation> kNone;
    const auto& gts = it == truth_.end() ? kNone : it->second;
    auto rng = detail::oracle_rng(cfg_.seed, detail::OracleStream::kDetect,
                                  static_cast<std::uint64_t>(image.image_id()));
    std::vector<Detection> out;
    for (auto& a : detail::perturb_truth(gts, image.dims(), cfg_, vocab, rng)) {
      std::string label = a.class_label;
      if (detail::bernoulli(rng, cfg_.q)) label = detail::flip_label(label, vocab, rng);
      const bool ok = in_vocab(label, vocab);
      out.push_back({a.bbox, std::move(label), std::nullopt, ok});
    }
    return out;
  }
  bool needs_pixels() const override { return false; }

 private:
  AnnotationsByImage truth_;
  OracleConfig cfg_;
};

class OracleSegmenter final : public Segmenter {
 public:
  OracleSegmenter(AnnotationsByImage truth, OracleConfig cfg)
      : truth_(std::move(truth)), cfg_(cfg) {
    cfg_.validate();
  }

  std::vector<BBox> segment(const ImageSource& image) override {
    const auto it = truth_.find(image.image_id());
    if (it == truth_.end()) return {};
    auto rng = detail::oracle_rng(cfg_.seed, detail::OracleStream::kSegment,
                                  static_cast<std::uint64_t>(image.image_id()));
    static const std::vector<std::string> kAgnostic{"object"};
    std::vector<BBox> boxes;
    for (const auto& a :
         detail::perturb_truth(it->second, image.dims(), cfg_, kAgnostic, rng)) {
      boxes.push_back(a.bbox);
    }
    return dedup_proposals(boxes);
  }
  bool needs_pixels() const override { return false; }

 private:
  AnnotationsByImage truth_;
  OracleConfig cfg_;
};

// Labels a crop with the class of the ground-truth box that best overlaps the
// proposal, then flips it with probability q. A crop touching no ground truth
// gets a random vocabulary label.
class OracleClassifier final : public Classifier {
 public:
  OracleClassifier(AnnotationsByImage truth, OracleConfig cfg)
      : truth_(std::move(truth)), cfg_(cfg) {
    cfg_.validate();
  }

  Classification classify(const CropInput& crop,
                          const std::vector<std::string>& vocab,
                          const SupportPayload*) override {
    if (vocab.empty()) throw ValidationError("classify needs a non-empty vocabulary");
    const ImageId id = crop.source->image_id();
    auto rng = detail::oracle_rng(cfg_.seed, detail::OracleStream::kClassify,
                                  detail::box_key(id, crop.box));
    std::string label;
    double best = 0.0;
    if (const auto it = truth_.find(id); it != truth_.end()) {
      for (const auto& a : it->second) {
        const double v = iou(a.bbox, crop.box);
        if (v > best) {
          best = v;
          label = a.class_label;
        }
      }
    }
    if (label.empty()) label = vocab[detail::uniform_below(rng, vocab.size())];
    if (detail::bernoulli(rng, cfg_.q)) label = detail::flip_label(label, vocab, rng);
    return {label, std::nullopt, in_vocab(label, vocab)};
  }
  bool needs_pixels() const override { return false; }

 private:
  AnnotationsByImage truth_;
  OracleConfig cfg_;
};

// ---------------------------------------------------------------------------
// Remote backends.

struct BackendConfig {
  std::string endpoint;   // http://host[:port][/base]
  std::string token_env;  // name of the env var holding a bearer token
  double timeout_s = 60.0;
  int max_retries = 3;        // retries after the first attempt
  double backoff_base_s = 0.5;
  double backoff_cap_s = 30.0;
  int max_parallel = 4;

  void validate() const {
    if (endpoint.rfind("http://", 0) != 0 && endpoint.rfind("https://", 0) != 0) {
      throw ValidationError("backend endpoint must start with http:// or https://");
    }
    if (!(timeout_s > 0.0)) throw ValidationError("backend timeout must be > 0");
    if (max_retries < 0) throw ValidationError("backend max_retries must be >= 0");
    if (!(backoff_base_s >= 0.0)) throw ValidationError("backend backoff must be >= 0");
    if (max_parallel < 1) throw ValidationError("backend max_parallel must be >= 1");
  }
};

namespace detail {

struct Endpoint {
  std::string scheme_host_port;
  std::string base_path;
};

inline Endpoint split_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  const auto path_start = url.find('/', scheme_end + 3);
  Endpoint e;
  e.scheme_host_port = url.substr(0, path_start);
  if (path_start != std::string::npos) e.base_path = url.substr(path_start);
  while (!e.base_path.empty() && e.base_path.back() == '/') e.base_path.pop_back();
  return e;
}

inline std::vector<BBox> parse_box_list(const nlohmann::json& arr) {
  std::vector<BBox> out;
  if (!arr.is_array()) throw std::invalid_argument("expected an array of boxes");
  for (const auto& b : arr) {
    if (!b.is_array() || b.size() != 4) {
      throw std::invalid_argument("bbox must be [x_min, y_min, x_max, y_max]");
    }
    BBox box{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
             b[3].get<double>()};
    if (!is_finite(box)) throw std::invalid_argument("bbox has non-finite values");
    out.push_back(box);
  }
  return out;
}

}  // namespace detail

// Thread-safe client for one remote service. Each call is one logical request
// retried on transport errors, 429 and 5xx.
class HttpClient {
 public:
  HttpClient(BackendConfig cfg, std::string name, RunLog* log)
      : cfg_(std::move(cfg)), name_(std::move(name)), log_(log),
        slots_(cfg_.max_parallel) {
    cfg_.validate();
    endpoint_ = detail::split_endpoint(cfg_.endpoint);
    if (!cfg_.token_env.empty()) {
      const char* tok = std::getenv(cfg_.token_env.c_str());
      if (tok == nullptr || *tok == '\0') {
        throw ValidationError("environment variable " + cfg_.token_env +
                              " (auth token for " + name_ + ") is not set");
      }
      token_ = tok;
    }
  }

  const BackendConfig& config() const { return cfg_; }

  // Returns the parsed response body. Throws BackendError once retries are
  // exhausted, on a non-retryable status, or on a body that is not JSON.
  nlohmann::json post(const std::string& route, const nlohmann::json& body,
                      ImageId image_id) {
    const std::string payload = body.dump();
    const std::string path = endpoint_.base_path + route;
    std::string last_error;
    for (int attempt = 0;; ++attempt) {
      int status = 0;
      std::string response;
      {
        slots_.acquire();
        struct Release {
          std::counting_semaphore<>* s;
          ~Release() { s->release(); }
        } release{&slots_};
        httplib::Client cli(endpoint_.scheme_host_port);
        const auto t = std::chrono::duration<double>(cfg_.timeout_s);
        cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(t));
        cli.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(t));
        cli.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(t));
        httplib::Headers headers;
        if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
        auto res = cli.Post(path, headers, payload, "application/json");
        if (res) {
          status = res->status;
          response = res->body;
        } else {
          last_error = "transport error: " + httplib::to_string(res.error());
        }
      }
      if (status >= 200 && status < 300) {
        try {
          return nlohmann::json::parse(response);
        } catch (const nlohmann::json::parse_error&) {
          throw BackendError(name_ + route + ": response is not JSON", response);
        }
      }
      const bool retryable = status == 0 || status == 429 || status >= 500;
      if (status != 0) last_error = "HTTP " + std::to_string(status);
      if (!retryable) {
        throw BackendError(name_ + route + ": " + last_error, response);
      }
      if (attempt >= cfg_.max_retries) {
        throw BackendError(name_ + route + ": gave up after " +
                               std::to_string(attempt + 1) + " attempts (" +
                               last_error + ")",
                           response);
      }
      const double delay = backoff_delay(attempt);
      log_event(log_, {{"event", "retry"}, {"backend", name_}, {"route", route},
                       {"image_id", image_id}, {"attempt", attempt + 1},
                       {"status", status}, {"delay_s", delay}});
      std::this_thread::sleep_for(std::chrono::duration<double>(delay));
    }
  }

 private:
  // Full jitter over [base * 2^attempt / 2, base * 2^attempt], capped.
  double backoff_delay(int attempt) {
    const double ceiling =
        std::min(cfg_.backoff_cap_s, cfg_.backoff_base_s * std::ldexp(1.0, attempt));
    thread_local std::mt19937_64 rng{std::random_device{}()};
    return ceiling * (0.5 + 0.5 * detail::uniform01(rng));
  }

  BackendConfig cfg_;
  std::string name_;
  RunLog* log_;
  detail::Endpoint endpoint_;
  std::string token_;
  std::counting_semaphore<> slots_;
};

namespace detail {

inline nlohmann::json support_json(const SupportPayload& s) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : s) arr.push_back({{"image", base64_encode(e.png)}, {"label", e.label}});
  return arr;
}

[[noreturn]] inline void malformed(const std::string& what, const nlohmann::json& body) {
  throw BackendError("malformed response: " + what, body.dump());
}

}  // namespace detail

class HttpDetector final : public Detector {
 public:
  HttpDetector(BackendConfig cfg, RunLog* log)
      : client_(std::move(cfg), "detector", log), log_(log) {}

  std::vector<Detection> detect(const ImageSource& image,
                                const std::vector<std::string>& vocab,
                                const std::optional<std::string>& prompt,
                                const SupportPayload* support) override {
    if (vocab.empty()) throw ValidationError("detect needs a non-empty vocabulary");
    nlohmann::json body{{"image", base64_encode(image.png())}, {"vocab", vocab}};
    if (prompt) body["prompt"] = *prompt;
    if (support != nullptr && !support->empty()) body["support"] = detail::support_json(*support);
    const auto res = client_.post("/detect", body, image.image_id());
    std::vector<Detection> out;
    try {
      for (const auto& d : res.at("detections")) {
        const auto boxes = detail::parse_box_list(nlohmann::json::array({d.at("bbox")}));
        std::optional<double> score;
        if (d.contains("score") && !d["score"].is_null()) score = d["score"].get<double>();
        const std::string label = d.at("label").get<std::string>();
        const auto box = admit_box(boxes[0], image.dims(), image.image_id(), "detector", log_);
        if (!box) continue;
        const bool ok = in_vocab(label, vocab);
        if (!ok) {
          log_event(log_, {{"event", "warning"}, {"backend", "detector"},
                           {"image_id", image.image_id()},
                           {"message", "label not in vocabulary"}, {"label", label}});
        }
        out.push_back({*box, label, score, ok});
      }
    } catch (const nlohmann::json::exception& e) {
      detail::malformed(e.what(), res);
    } catch (const std::invalid_argument& e) {
      detail::malformed(e.what(), res);
    }
    return out;
  }
  bool needs_pixels() const override { return true; }
  int max_parallel() const override { return client_.config().max_parallel; }

 private:
  HttpClient client_;
  RunLog* log_;
};

class HttpClassifier final : public Classifier {
 public:
  HttpClassifier(BackendConfig cfg, RunLog* log)
      : client_(std::move(cfg), "classifier", log), log_(log) {}

  Classification classify(const CropInput& crop,
                          const std::vector<std::string>& vocab,
                          const SupportPayload* support) override {
    if (vocab.empty()) throw ValidationError("classify needs a non-empty vocabulary");
    nlohmann::json body{{"image", base64_encode(crop.png())}, {"vocab", vocab}};
    if (support != nullptr && !support->empty()) body["support"] = detail::support_json(*support);
    const ImageId id = crop.source->image_id();
    const auto res = client_.post("/classify", body, id);
    Classification c;
    try {
      std::optional<double> score;
      if (res.contains("score") && !res["score"].is_null()) score = res["score"].get<double>();
      c = normalize_label(res.at("label").get<std::string>(), vocab, score);
    } catch (const nlohmann::json::exception& e) {
      detail::malformed(e.what(), res);
    }
    if (!c.valid) {
      log_event(log_, {{"event", "warning"}, {"backend", "classifier"}, {"image_id", id},
                       {"message", "label not in vocabulary"}, {"label", c.label}});
    }
    return c;
  }
  bool needs_pixels() const override { return true; }
  int max_parallel() const override { return client_.config().max_parallel; }

 private:
  HttpClient client_;
  RunLog* log_;
};

class HttpSegmenter final : public Segmenter {
 public:
  HttpSegmenter(BackendConfig cfg, RunLog* log)
      : client_(std::move(cfg), "segmenter", log), log_(log) {}

  std::vector<BBox> segment(const ImageSource& image) override {
    const auto res = client_.post("/segment", {{"image", base64_encode(image.png())}},
                                  image.image_id());
    std::vector<BBox> boxes;
    try {
      for (const auto& b : detail::parse_box_list(res.at("boxes"))) {
        if (auto c = admit_box(b, image.dims(), image.image_id(), "segmenter", log_)) {
          boxes.push_back(*c);
        }
      }
    } catch (const nlohmann::json::exception& e) {
      detail::malformed(e.what(), res);
    } catch (const std::invalid_argument& e) {
      detail::malformed(e.what(), res);
    }
    return dedup_proposals(boxes);
  }
  bool needs_pixels() const override { return true; }
  int max_parallel() const override { return client_.config().max_parallel; }

 private:
  HttpClient client_;
  RunLog* log_;
};

}  // namespace fsod

#endif  // FSOD_BACKENDS_HPP_
