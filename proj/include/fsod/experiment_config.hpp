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

// Declarative experiment configuration (one JSON file per run).
//
//   {
//     "mode": "zero_shot_t" | "few_shot_v" | "few_shot_mmd" | "few_shot_mmc",
//     "k": 0 | 1 | 3 | 6,
//     "method": "label used in report rows",        (default: mode)
//     "seed": 7,
//     "dataset": {"index": "path", "format": "coco" | "csv",
//                 "image_root": "dir", "source": "tag"},
//     "split": "path to split JSONL",
//     "prompt": "template id", "prompt_dir": "dir", (default dir: prompts)
//     "crop_margin": 0.1,
//     "workers": 4,
//     "limit": 20,
//     "backends": {
//       "detector" | "segmenter" | "classifier":
//         {"oracle": {"sigma", "p", "q", "r", "seed"}} |
//         {"http": {"endpoint", "token_env", "timeout_s", "max_retries",
//                   "backoff_base_s", "backoff_cap_s", "max_parallel"}}
//     }
//   }
//
// Relative paths resolve against the directory holding the config file.
// `workers` and `limit` change scheduling only and are left out of the
// config hash.

#ifndef FSOD_EXPERIMENT_CONFIG_HPP_
#define FSOD_EXPERIMENT_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fsod/backends.hpp"
#include "fsod/dataset.hpp"
#include "fsod/errors.hpp"
#include "fsod/geometry.hpp"
#include "fsod/support.hpp"

namespace fsod {

enum class Mode { kZeroShotT, kFewShotV, kFewShotMmd, kFewShotMmc };

inline const char* to_string(Mode m) {
  switch (m) {
    case Mode::kZeroShotT: return "zero_shot_t";
    case Mode::kFewShotV: return "few_shot_v";
    case Mode::kFewShotMmd: return "few_shot_mmd";
    case Mode::kFewShotMmc: return "few_shot_mmc";
  }
  return "?";
}

inline Mode parse_mode(const std::string& s) {
  for (Mode m : {Mode::kZeroShotT, Mode::kFewShotV, Mode::kFewShotMmd, Mode::kFewShotMmc}) {
    if (s == to_string(m)) return m;
  }
  throw ValidationError("unknown mode '" + s +
                        "' (zero_shot_t, few_shot_v, few_shot_mmd, few_shot_mmc)");
}

inline bool uses_prompt(Mode m) { return m == Mode::kZeroShotT || m == Mode::kFewShotMmd; }
inline bool uses_support(Mode m) { return m != Mode::kZeroShotT; }

struct BackendBinding {
  enum class Kind { kOracle, kHttp };
  Kind kind = Kind::kOracle;
  OracleConfig oracle;
  BackendConfig http;
};

struct ExperimentConfig {
  Mode mode = Mode::kZeroShotT;
  int k = 0;
  std::string method;
  std::uint64_t seed = 0;
  std::string index_path;
  IndexFormat index_format = IndexFormat::kCocoJson;
  std::string image_root;
  std::string source;
  std::string split_path;
  std::string prompt;
  std::string prompt_dir = "prompts";
  double crop_margin = kDefaultCropMargin;
  std::optional<BackendBinding> detector;
  std::optional<BackendBinding> segmenter;
  std::optional<BackendBinding> classifier;
  int workers = 0;  // 0: the bound backends' max_parallel
  int limit = -1;   // process at most this many pending images; rest skipped
  std::string base_dir;  // where relative paths resolve

  std::string resolve(const std::string& p) const {
    if (p.empty()) return p;
    const std::filesystem::path path(p);
    if (path.is_absolute() || base_dir.empty()) return path.lexically_normal().string();
    return (std::filesystem::path(base_dir) / path).lexically_normal().string();
  }

  void validate() const {
    if (mode == Mode::kZeroShotT) {
      if (k != 0) {
        throw ValidationError("zero_shot_t takes no support; k must be 0, got " +
                              std::to_string(k));
      }
    } else if (!is_supported_k(k)) {
      throw ValidationError(std::string(to_string(mode)) + " needs k in {1,3,6}, got " +
                            std::to_string(k));
    }
    if (mode == Mode::kFewShotMmc) {
      if (!segmenter || !classifier) {
        throw ValidationError("few_shot_mmc needs both a segmenter and a classifier");
      }
      if (detector) throw ValidationError("few_shot_mmc does not use a detector");
    } else {
      if (!detector) {
        throw ValidationError(std::string(to_string(mode)) + " needs a detector");
      }
      if (segmenter || classifier) {
        throw ValidationError(std::string(to_string(mode)) +
                              " uses only a detector; remove segmenter/classifier");
      }
    }
    if (uses_prompt(mode) && prompt.empty()) {
      throw ValidationError(std::string(to_string(mode)) + " needs a prompt template");
    }
    if (!uses_prompt(mode) && !prompt.empty()) {
      throw ValidationError(std::string(to_string(mode)) + " sends no text prompt");
    }
    if (!prompt.empty()) {
      for (char c : prompt) {
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) {
          throw ValidationError("prompt template id may use [A-Za-z0-9_-] only");
        }
      }
    }
    if (index_path.empty()) throw ValidationError("dataset.index is required");
    if (split_path.empty()) throw ValidationError("split is required");
    if (!(crop_margin >= 0.0) || !std::isfinite(crop_margin)) {
      throw ValidationError("crop_margin must be >= 0");
    }
    if (workers < 0) throw ValidationError("workers must be >= 0");
    for (const auto* b : {&detector, &segmenter, &classifier}) {
      if (!*b) continue;
      if ((*b)->kind == BackendBinding::Kind::kOracle) {
        (*b)->oracle.validate();
      } else {
        (*b)->http.validate();
      }
    }
  }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j,
                                std::initializer_list<const char*> allowed,
                                const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be a JSON object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items()) {
    if (!ok.count(key)) throw ValidationError(where + ": unknown key '" + key + "'");
  }
}

inline BackendBinding parse_binding(const nlohmann::json& j, const std::string& role) {
  const std::string where = "backends." + role;
  reject_unknown_keys(j, {"oracle", "http"}, where);
  if (j.size() != 1) throw ValidationError(where + " needs exactly one of oracle, http");
  BackendBinding b;
  if (j.contains("oracle")) {
    const auto& o = j["oracle"];
    reject_unknown_keys(o, {"sigma", "p", "q", "r", "seed"}, where + ".oracle");
    b.kind = BackendBinding::Kind::kOracle;
    b.oracle.sigma = o.value("sigma", 0.0);
    b.oracle.p = o.value("p", 0.0);
    b.oracle.q = o.value("q", 0.0);
    b.oracle.r = o.value("r", 0.0);
    b.oracle.seed = o.value("seed", std::uint64_t{0});
  } else {
    const auto& h = j["http"];
    reject_unknown_keys(h, {"endpoint", "token_env", "timeout_s", "max_retries",
                            "backoff_base_s", "backoff_cap_s", "max_parallel"},
                        where + ".http");
    b.kind = BackendBinding::Kind::kHttp;
    BackendConfig d;
    b.http.endpoint = h.at("endpoint").get<std::string>();
    b.http.token_env = h.value("token_env", d.token_env);
    b.http.timeout_s = h.value("timeout_s", d.timeout_s);
    b.http.max_retries = h.value("max_retries", d.max_retries);
    b.http.backoff_base_s = h.value("backoff_base_s", d.backoff_base_s);
    b.http.backoff_cap_s = h.value("backoff_cap_s", d.backoff_cap_s);
    b.http.max_parallel = h.value("max_parallel", d.max_parallel);
  }
  return b;
}

inline nlohmann::json binding_json(const BackendBinding& b) {
  if (b.kind == BackendBinding::Kind::kOracle) {
    return {{"oracle",
             {{"sigma", b.oracle.sigma}, {"p", b.oracle.p}, {"q", b.oracle.q},
              {"r", b.oracle.r}, {"seed", b.oracle.seed}}}};
  }
  return {{"http",
           {{"endpoint", b.http.endpoint}, {"token_env", b.http.token_env},
            {"timeout_s", b.http.timeout_s}, {"max_retries", b.http.max_retries},
            {"backoff_base_s", b.http.backoff_base_s},
            {"backoff_cap_s", b.http.backoff_cap_s},
            {"max_parallel", b.http.max_parallel}}}};
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j,
                                                const std::string& base_dir = "") {
  ExperimentConfig c;
  c.base_dir = base_dir;
  try {
    detail::reject_unknown_keys(
        j, {"name", "mode", "k", "method", "seed", "dataset", "split", "prompt",
            "prompt_dir", "crop_margin", "workers", "limit", "backends"},
        "config");
    c.mode = parse_mode(j.at("mode").get<std::string>());
    c.k = j.value("k", 0);
    c.method = j.value("method", std::string(to_string(c.mode)));
    c.seed = j.value("seed", std::uint64_t{0});
    const auto& ds = j.at("dataset");
    detail::reject_unknown_keys(ds, {"index", "format", "image_root", "source"}, "dataset");
    c.index_path = ds.at("index").get<std::string>();
    c.index_format = ds.contains("format")
                         ? parse_index_format(ds["format"].get<std::string>())
                         : guess_index_format(c.index_path);
    c.image_root = ds.value("image_root", std::string{});
    c.source = ds.value("source", std::string{});
    c.split_path = j.at("split").get<std::string>();
    c.prompt = j.value("prompt", std::string{});
    c.prompt_dir = j.value("prompt_dir", c.prompt_dir);
    c.crop_margin = j.value("crop_margin", kDefaultCropMargin);
    c.workers = j.value("workers", 0);
    c.limit = j.value("limit", -1);
    if (j.contains("backends")) {
      const auto& b = j["backends"];
      detail::reject_unknown_keys(b, {"detector", "segmenter", "classifier"}, "backends");
      if (b.contains("detector")) c.detector = detail::parse_binding(b["detector"], "detector");
      if (b.contains("segmenter")) c.segmenter = detail::parse_binding(b["segmenter"], "segmenter");
      if (b.contains("classifier")) c.classifier = detail::parse_binding(b["classifier"], "classifier");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  const std::string text = detail::read_text(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("'" + path + "': " + e.what());
  }
  const auto dir = std::filesystem::absolute(path).parent_path().string();
  return parse_experiment_config(j, dir);
}

// Normalized form: every field explicit, paths as written.
inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j{
      {"mode", to_string(c.mode)},
      {"k", c.k},
      {"method", c.method},
      {"seed", c.seed},
      {"dataset",
       {{"index", c.index_path},
        {"format", c.index_format == IndexFormat::kSimpleCsv ? "csv" : "coco"},
        {"image_root", c.image_root},
        {"source", c.source}}},
      {"split", c.split_path},
      {"prompt", c.prompt},
      {"prompt_dir", c.prompt_dir},
      {"crop_margin", c.crop_margin},
  };
  nlohmann::json b = nlohmann::json::object();
  if (c.detector) b["detector"] = detail::binding_json(*c.detector);
  if (c.segmenter) b["segmenter"] = detail::binding_json(*c.segmenter);
  if (c.classifier) b["classifier"] = detail::binding_json(*c.classifier);
  j["backends"] = b;
  return j;
}

inline std::uint64_t fnv1a64(const std::string& s,
                             std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ULL;
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = kHex[v & 15];
  return s;
}

// Template text from <prompt_dir>/<id>.txt with {vocab} and {K} filled in.
inline std::string render_prompt(const std::string& templ,
                                 const std::vector<std::string>& vocab, int k) {
  std::string vocab_text;
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    if (i > 0) vocab_text += ", ";
    vocab_text += vocab[i];
  }
  std::string out;
  for (std::size_t i = 0; i < templ.size();) {
    if (templ.compare(i, 7, "{vocab}") == 0) {
      out += vocab_text;
      i += 7;
    } else if (templ.compare(i, 3, "{K}") == 0) {
      out += std::to_string(k);
      i += 3;
    } else {
      out += templ[i++];
    }
  }
  return out;
}

inline std::string load_prompt_template(const ExperimentConfig& c) {
  if (c.prompt.empty()) return {};
  const auto path = std::filesystem::path(c.resolve(c.prompt_dir)) / (c.prompt + ".txt");
  return detail::read_text(path.string());
}

// FNV-1a over the normalized config, the prompt template text and the bytes
// of the index and split files it points at.
inline std::string config_hash(const ExperimentConfig& c) {
  std::uint64_t h = fnv1a64(to_json(c).dump());
  h = fnv1a64("\x1f" + load_prompt_template(c), h);
  h = fnv1a64("\x1f" + detail::read_text(c.resolve(c.index_path)), h);
  h = fnv1a64("\x1f" + detail::read_text(c.resolve(c.split_path)), h);
  return hex64(h);
}

}  // namespace fsod

#endif  // FSOD_EXPERIMENT_CONFIG_HPP_
