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

// Split file: JSON Lines. Per source, one header line
//   {"type":"split_header","source":..,"classes":[..],"score":{cpc,cbe,sss},
//    "seed":..,"trial":..,"trials":..,"base_seed":..,"constraints":{..},
//    "objectives":{..},"phase2_weighting":".."}
// followed by one line per image
//   {"type":"image","source":..,"image_id":..,"split":"example|test|unused",
//    "counts":{"<class>":n,..}}
// and, when the file holds more than one source, a closing
//   {"type":"summary","sources":n,"mean_sss":..,"mean_cpc":..,"mean_cbe":..}.

#ifndef FSOD_SPLIT_FILE_HPP_
#define FSOD_SPLIT_FILE_HPP_

#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fsod/dataset.hpp"
#include "fsod/errors.hpp"
#include "fsod/split_optimizer.hpp"

namespace fsod {

inline constexpr const char* kPhase2Weighting =
    "lexicographic: minimise sum_c f_c*max(0,example_c-m_exp), then maximise "
    "sum_c test_c/f_c; f_c = class share of all boxes";

struct SplitSection {
  std::string source;
  std::vector<std::string> classes;
  SplitScore score;
  SplitObjectives objectives;
  SplitConstraints constraints;
  std::uint64_t seed = 0;
  int trial = 0;
  int trials = 0;
  std::uint64_t base_seed = 0;
  std::vector<SplitImage> images;
  std::vector<Side> sides;  // parallel to images
};

class SplitFile {
 public:
  void add(const SplitInstance& inst, const SplitConstraints& cons,
           const SeedSearchConfig& search, const SplitAssignment& a) {
    SplitSection s;
    s.source = inst.source;
    s.classes = inst.classes;
    s.score = a.score;
    s.objectives = a.objectives;
    s.constraints = cons;
    s.seed = a.seed;
    s.trial = a.trial;
    s.trials = search.trials;
    s.base_seed = search.base_seed;
    s.images = inst.images;
    s.sides = a.decision.side;
    add(std::move(s));
  }

  void add(SplitSection s) {
    for (std::size_t i = 0; i < s.images.size(); ++i) {
      const auto [it, inserted] = side_.emplace(s.images[i].image_id, s.sides[i]);
      if (!inserted) {
        throw ValidationError("image " + std::to_string(s.images[i].image_id) +
                              " appears in more than one split section");
      }
    }
    sections_.push_back(std::move(s));
  }

  const std::vector<SplitSection>& sections() const { return sections_; }

  // Images not listed count as unused.
  Side side_of(ImageId id) const {
    const auto it = side_.find(id);
    return it == side_.end() ? Side::kUnused : it->second;
  }

  std::vector<ImageId> images_in(Side s) const {
    std::vector<ImageId> out;
    for (const auto& [id, side] : side_) {
      if (side == s) out.push_back(id);
    }
    return out;
  }

  double mean_sss() const { return mean([](const SplitScore& s) { return s.sss; }); }
  double mean_cpc() const { return mean([](const SplitScore& s) { return s.cpc; }); }
  double mean_cbe() const { return mean([](const SplitScore& s) { return s.cbe; }); }

  std::string to_jsonl() const {
    std::ostringstream out;
    for (const auto& s : sections_) {
      nlohmann::json h{
          {"type", "split_header"},
          {"source", s.source},
          {"classes", s.classes},
          {"score", {{"cpc", s.score.cpc}, {"cbe", s.score.cbe}, {"sss", s.score.sss}}},
          {"seed", s.seed},
          {"trial", s.trial},
          {"trials", s.trials},
          {"base_seed", s.base_seed},
          {"constraints",
           {{"m_exp", s.constraints.m_exp},
            {"m_test", s.constraints.m_test},
            {"n_exp", s.constraints.n_exp},
            {"n_test", s.constraints.n_test}}},
          {"objectives",
           {{"coverage", s.objectives.coverage},
            {"surplus", s.objectives.surplus},
            {"test_reward", s.objectives.test_reward}}},
          {"phase2_weighting", kPhase2Weighting}};
      out << h.dump() << "\n";
      for (std::size_t i = 0; i < s.images.size(); ++i) {
        nlohmann::json counts = nlohmann::json::object();
        for (std::size_t c = 0; c < s.classes.size(); ++c) {
          counts[s.classes[c]] = s.images[i].counts[c];
        }
        nlohmann::json r{{"type", "image"},
                         {"source", s.source},
                         {"image_id", s.images[i].image_id},
                         {"split", to_string(s.sides[i])},
                         {"counts", counts}};
        out << r.dump() << "\n";
      }
    }
    if (sections_.size() > 1) {
      nlohmann::json sum{{"type", "summary"},
                         {"sources", sections_.size()},
                         {"mean_sss", mean_sss()},
                         {"mean_cpc", mean_cpc()},
                         {"mean_cbe", mean_cbe()}};
      out << sum.dump() << "\n";
    }
    return out.str();
  }

  static SplitFile parse(const std::string& text) {
    SplitFile f;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    std::optional<SplitSection> cur;
    auto flush = [&] {
      if (cur) f.add(std::move(*cur));
      cur.reset();
    };
    try {
      while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        const std::string type = j.at("type").get<std::string>();
        if (type == "split_header") {
          flush();
          SplitSection s;
          s.source = j.at("source").get<std::string>();
          s.classes = j.at("classes").get<std::vector<std::string>>();
          const auto& sc = j.at("score");
          s.score = {sc.at("cpc").get<double>(), sc.at("cbe").get<double>(),
                     sc.at("sss").get<double>()};
          s.seed = j.at("seed").get<std::uint64_t>();
          s.trial = j.at("trial").get<int>();
          s.trials = j.value("trials", 0);
          s.base_seed = j.value("base_seed", std::uint64_t{0});
          const auto& c = j.at("constraints");
          s.constraints = {c.at("m_exp").get<int>(), c.at("m_test").get<int>(),
                           c.at("n_exp").get<int>(), c.at("n_test").get<int>()};
          const auto& o = j.at("objectives");
          s.objectives = {o.at("coverage").get<std::int64_t>(),
                          o.at("surplus").get<double>(),
                          o.at("test_reward").get<double>()};
          cur = std::move(s);
        } else if (type == "image") {
          if (!cur) {
            throw ValidationError("split file line " + std::to_string(line_no) +
                                  ": image record before any header");
          }
          SplitImage im{j.at("image_id").get<ImageId>(),
                        std::vector<int>(cur->classes.size(), 0)};
          const auto& counts = j.at("counts");
          for (std::size_t c = 0; c < cur->classes.size(); ++c) {
            im.counts[c] = counts.value(cur->classes[c], 0);
          }
          const std::string split = j.at("split").get<std::string>();
          Side side;
          if (split == "example") {
            side = Side::kExample;
          } else if (split == "test") {
            side = Side::kTest;
          } else if (split == "unused") {
            side = Side::kUnused;
          } else {
            throw ValidationError("split file line " + std::to_string(line_no) +
                                  ": unknown split '" + split + "'");
          }
          cur->images.push_back(std::move(im));
          cur->sides.push_back(side);
        } else if (type != "summary") {
          throw ValidationError("split file line " + std::to_string(line_no) +
                                ": unknown record type '" + type + "'");
        }
      }
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("split file line " + std::to_string(line_no) +
                            ": " + e.what());
    }
    flush();
    return f;
  }

  static SplitFile load(const std::string& path) {
    return parse(detail::read_text(path));
  }
  void save(const std::string& path) const {
    detail::write_text(path, to_jsonl());
  }

 private:
  template <typename Fn>
  double mean(Fn fn) const {
    if (sections_.empty()) return 0.0;
    double s = 0.0;
    for (const auto& sec : sections_) s += fn(sec.score);
    return s / static_cast<double>(sections_.size());
  }

  std::vector<SplitSection> sections_;
  std::map<ImageId, Side> side_;
};

}  // namespace fsod

#endif  // FSOD_SPLIT_FILE_HPP_
