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

// Annotated image corpora: ingestion (COCO JSON, flat CSV), validation,
// synthetic fixtures, and the per-source view consumed by the split
// optimizer.

#ifndef FSOD_DATASET_HPP_
#define FSOD_DATASET_HPP_

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fsod/errors.hpp"
#include "fsod/geometry.hpp"
#include "fsod/image.hpp"
#include "fsod/labeled_box.hpp"
#include "fsod/split_optimizer.hpp"

namespace fsod {

struct ImageRecord {
  ImageId image_id = 0;
  std::string path;
  ImageDims dims;
  std::string source;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

// Immutable once built. Images are sorted by id, annotations by (image id,
// file order).
class DatasetIndex {
 public:
  DatasetIndex() = default;

  // Validates and indexes. Throws ValidationError naming the image id and the
  // annotation ordinal (0-based position in the input) of the first bad box.
  DatasetIndex(std::vector<ImageRecord> images,
               std::vector<Annotation> annotations)
      : images_(std::move(images)), annotations_(std::move(annotations)) {
    std::stable_sort(images_.begin(), images_.end(),
                     [](const ImageRecord& a, const ImageRecord& b) {
                       return a.image_id < b.image_id;
                     });
    for (std::size_t i = 0; i < images_.size(); ++i) {
      const auto& rec = images_[i];
      if (i > 0 && images_[i - 1].image_id == rec.image_id) {
        throw ValidationError("duplicate image_id " +
                              std::to_string(rec.image_id));
      }
      if (!is_valid(rec.dims)) {
        throw ValidationError("image " + std::to_string(rec.image_id) +
                              ": width and height must be >= 1");
      }
      slot_[rec.image_id] = i;
    }
    for (std::size_t k = 0; k < annotations_.size(); ++k) {
      const auto& a = annotations_[k];
      const std::string where = "annotation #" + std::to_string(k) +
                                " (image " + std::to_string(a.image_id) + ")";
      const auto it = slot_.find(a.image_id);
      if (it == slot_.end()) {
        throw ValidationError(where + ": unknown image reference");
      }
      if (a.class_label.empty()) {
        throw ValidationError(where + ": empty class label");
      }
      require_valid(a.bbox, where);
      const ImageDims& d = images_[it->second].dims;
      if (a.bbox.x_min < 0.0 || a.bbox.y_min < 0.0 ||
          a.bbox.x_max > d.width || a.bbox.y_max > d.height) {
        throw ValidationError(where + ": box outside the " +
                              std::to_string(d.width) + "x" +
                              std::to_string(d.height) + " image");
      }
    }
    std::stable_sort(annotations_.begin(), annotations_.end(),
                     [](const Annotation& a, const Annotation& b) {
                       return a.image_id < b.image_id;
                     });
    for (const auto& a : annotations_) {
      totals_[a.class_label]++;
      by_image_[a.image_id].push_back(a);
    }
  }

  const std::vector<ImageRecord>& images() const { return images_; }
  const std::vector<Annotation>& annotations() const { return annotations_; }
  const std::map<std::string, std::int64_t>& class_totals() const {
    return totals_;
  }

  std::vector<std::string> vocabulary() const {
    std::vector<std::string> v;
    for (const auto& kv : totals_) v.push_back(kv.first);
    return v;
  }

  bool contains(ImageId id) const { return slot_.count(id) != 0; }

  const ImageRecord& record(ImageId id) const {
    const auto it = slot_.find(id);
    if (it == slot_.end()) {
      throw ValidationError("unknown image_id " + std::to_string(id));
    }
    return images_[it->second];
  }

  const std::vector<Annotation>& annotations_of(ImageId id) const {
    static const std::vector<Annotation> kNone;
    const auto it = by_image_.find(id);
    return it == by_image_.end() ? kNone : it->second;
  }

  const std::map<ImageId, std::vector<Annotation>>& by_image() const {
    return by_image_;
  }

  std::vector<std::string> sources() const {
    std::set<std::string> s;
    for (const auto& r : images_) s.insert(r.source);
    return {s.begin(), s.end()};
  }

  // Index restricted to one source tag.
  DatasetIndex subset(const std::string& source) const {
    std::vector<ImageRecord> imgs;
    std::vector<Annotation> anns;
    for (const auto& r : images_) {
      if (r.source != source) continue;
      imgs.push_back(r);
      const auto& a = annotations_of(r.image_id);
      anns.insert(anns.end(), a.begin(), a.end());
    }
    return DatasetIndex(std::move(imgs), std::move(anns));
  }

  friend bool operator==(const DatasetIndex& a, const DatasetIndex& b) {
    return a.images_ == b.images_ && a.annotations_ == b.annotations_;
  }

 private:
  std::vector<ImageRecord> images_;
  std::vector<Annotation> annotations_;
  std::map<ImageId, std::size_t> slot_;
  std::map<std::string, std::int64_t> totals_;
  std::map<ImageId, std::vector<Annotation>> by_image_;
};

// Split-optimizer view of one source: per-image box counts over the classes
// present in that source.
inline SplitInstance make_split_instance(const DatasetIndex& index,
                                         const std::string& source) {
  SplitInstance inst;
  inst.source = source;
  std::map<std::string, std::size_t> col;
  for (const auto& r : index.images()) {
    if (r.source != source) continue;
    for (const auto& a : index.annotations_of(r.image_id)) {
      col.emplace(a.class_label, 0);
    }
  }
  std::size_t c = 0;
  for (auto& [label, slot] : col) {
    slot = c++;
    inst.classes.push_back(label);
  }
  for (const auto& r : index.images()) {
    if (r.source != source) continue;
    SplitImage im{r.image_id, std::vector<int>(inst.classes.size(), 0)};
    for (const auto& a : index.annotations_of(r.image_id)) {
      im.counts[col.at(a.class_label)]++;
    }
    inst.images.push_back(std::move(im));
  }
  return inst;
}

// ---------------------------------------------------------------------------
// Ingestion.

enum class IndexFormat { kCocoJson, kSimpleCsv };

inline IndexFormat parse_index_format(const std::string& s) {
  if (s == "coco_json" || s == "coco") return IndexFormat::kCocoJson;
  if (s == "simple_csv" || s == "csv") return IndexFormat::kSimpleCsv;
  throw ValidationError("unknown index format '" + s + "'");
}

// Guess from the extension: .csv is flat CSV, anything else COCO JSON.
inline IndexFormat guess_index_format(const std::string& path) {
  return std::filesystem::path(path).extension() == ".csv"
             ? IndexFormat::kSimpleCsv
             : IndexFormat::kCocoJson;
}

namespace detail {

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("short write to '" + path + "'");
}

// Splits one CSV line; fields may be double-quoted with "" escapes.
inline std::vector<std::string> split_csv_line(const std::string& line,
                                               std::size_t line_no) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else if (ch != '\r') {
      field.push_back(ch);
    }
  }
  if (quoted) {
    throw ValidationError("csv line " + std::to_string(line_no) +
                          ": unterminated quote");
  }
  out.push_back(std::move(field));
  return out;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) {
    if (ch == '"') q += '"';
    q += ch;
  }
  return q + '"';
}

template <typename T>
T parse_number(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    T v;
    if constexpr (std::is_same_v<T, double>) {
      v = std::stod(s, &used);
    } else {
      v = static_cast<T>(std::stoll(s, &used));
    }
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(what + ": cannot parse number '" + s + "'");
  }
}

// Shortest decimal that round-trips, so written indexes reload bit-exactly.
inline std::string format_real(double v) {
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::stod(buf) == v) break;
  }
  return buf;
}

}  // namespace detail

inline DatasetIndex parse_coco_json(const nlohmann::json& j,
                                    const std::string& default_source = "") {
  try {
    std::map<std::int64_t, std::string> categories;
    for (const auto& c : j.at("categories")) {
      categories[c.at("id").get<std::int64_t>()] = c.at("name").get<std::string>();
    }
    std::vector<ImageRecord> images;
    for (const auto& im : j.at("images")) {
      ImageRecord r;
      r.image_id = im.at("id").get<ImageId>();
      r.path = im.value("file_name", std::string{});
      r.dims = {im.at("width").get<int>(), im.at("height").get<int>()};
      r.source = im.value("source", default_source);
      images.push_back(std::move(r));
    }
    std::vector<Annotation> anns;
    std::size_t ordinal = 0;
    for (const auto& a : j.at("annotations")) {
      const auto& bb = a.at("bbox");
      if (!bb.is_array() || bb.size() != 4) {
        throw ValidationError("annotation #" + std::to_string(ordinal) +
                              ": bbox must be [x, y, w, h]");
      }
      const auto cat = a.at("category_id").get<std::int64_t>();
      const auto it = categories.find(cat);
      if (it == categories.end()) {
        throw ValidationError("annotation #" + std::to_string(ordinal) +
                              ": unknown category_id " + std::to_string(cat));
      }
      anns.push_back({a.at("image_id").get<ImageId>(),
                      from_xywh(bb[0].get<double>(), bb[1].get<double>(),
                                bb[2].get<double>(), bb[3].get<double>()),
                      it->second});
      ++ordinal;
    }
    return DatasetIndex(std::move(images), std::move(anns));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed COCO json: ") + e.what());
  }
}

// Columns: image_id,path,width,height,class,x_min,y_min,x_max,y_max and an
// optional trailing `source`. A row with an empty class and empty coordinates
// declares an image without boxes.
inline DatasetIndex parse_simple_csv(const std::string& text,
                                     const std::string& default_source = "") {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::map<ImageId, ImageRecord> images;
  std::vector<Annotation> anns;
  bool header_seen = false;
  bool has_source = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto f = detail::split_csv_line(line, line_no);
    if (!header_seen) {
      header_seen = true;
      if (f.size() < 9 || f[0] != "image_id") {
        throw ValidationError(
            "csv header must be image_id,path,width,height,class,x_min,y_min,"
            "x_max,y_max[,source]");
      }
      has_source = f.size() >= 10 && f[9] == "source";
      continue;
    }
    const std::size_t want = has_source ? 10 : 9;
    if (f.size() != want) {
      throw ValidationError("csv line " + std::to_string(line_no) + ": expected " +
                            std::to_string(want) + " fields, got " +
                            std::to_string(f.size()));
    }
    const std::string where = "csv line " + std::to_string(line_no);
    ImageRecord rec;
    rec.image_id = detail::parse_number<ImageId>(f[0], where);
    rec.path = f[1];
    rec.dims = {detail::parse_number<int>(f[2], where),
                detail::parse_number<int>(f[3], where)};
    rec.source = has_source ? f[9] : default_source;
    const auto [it, inserted] = images.emplace(rec.image_id, rec);
    if (!inserted && !(it->second == rec)) {
      throw ValidationError(where + ": image " + std::to_string(rec.image_id) +
                            " redeclared with different path/dims/source");
    }
    if (f[4].empty() && f[5].empty()) continue;
    anns.push_back({rec.image_id,
                    BBox{detail::parse_number<double>(f[5], where),
                         detail::parse_number<double>(f[6], where),
                         detail::parse_number<double>(f[7], where),
                         detail::parse_number<double>(f[8], where)},
                    f[4]});
  }
  std::vector<ImageRecord> recs;
  for (auto& kv : images) recs.push_back(std::move(kv.second));
  return DatasetIndex(std::move(recs), std::move(anns));
}

inline DatasetIndex load_index(const std::string& path, IndexFormat format,
                               const std::string& default_source = "") {
  const std::string text = detail::read_text(path);
  if (format == IndexFormat::kSimpleCsv) {
    return parse_simple_csv(text, default_source);
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("'" + path + "': " + e.what());
  }
  return parse_coco_json(j, default_source);
}

inline DatasetIndex load_index(const std::string& path) {
  return load_index(path, guess_index_format(path));
}

inline nlohmann::json to_coco_json(const DatasetIndex& index) {
  nlohmann::json j;
  j["categories"] = nlohmann::json::array();
  std::map<std::string, int> cat_id;
  int next = 1;
  for (const auto& label : index.vocabulary()) {
    cat_id[label] = next;
    j["categories"].push_back({{"id", next}, {"name", label}});
    ++next;
  }
  j["images"] = nlohmann::json::array();
  for (const auto& r : index.images()) {
    nlohmann::json im{{"id", r.image_id},
                      {"file_name", r.path},
                      {"width", r.dims.width},
                      {"height", r.dims.height}};
    if (!r.source.empty()) im["source"] = r.source;
    j["images"].push_back(std::move(im));
  }
  j["annotations"] = nlohmann::json::array();
  std::int64_t ann_id = 1;
  for (const auto& a : index.annotations()) {
    j["annotations"].push_back(
        {{"id", ann_id++},
         {"image_id", a.image_id},
         {"category_id", cat_id.at(a.class_label)},
         {"bbox",
          {a.bbox.x_min, a.bbox.y_min, a.bbox.width(), a.bbox.height()}}});
  }
  return j;
}

inline std::string to_simple_csv(const DatasetIndex& index) {
  std::ostringstream out;
  out << "image_id,path,width,height,class,x_min,y_min,x_max,y_max,source\n";
  for (const auto& r : index.images()) {
    const std::string prefix = std::to_string(r.image_id) + "," +
                               detail::csv_field(r.path) + "," +
                               std::to_string(r.dims.width) + "," +
                               std::to_string(r.dims.height) + ",";
    const auto& anns = index.annotations_of(r.image_id);
    if (anns.empty()) {
      out << prefix << ",,,,," << detail::csv_field(r.source) << "\n";
    }
    for (const auto& a : anns) {
      out << prefix << detail::csv_field(a.class_label) << ","
          << detail::format_real(a.bbox.x_min) << ","
          << detail::format_real(a.bbox.y_min) << ","
          << detail::format_real(a.bbox.x_max) << ","
          << detail::format_real(a.bbox.y_max) << ","
          << detail::csv_field(r.source) << "\n";
    }
  }
  return out.str();
}

inline void save_index(const DatasetIndex& index, const std::string& path,
                       IndexFormat format) {
  if (format == IndexFormat::kSimpleCsv) {
    detail::write_text(path, to_simple_csv(index));
  } else {
    detail::write_text(path, to_coco_json(index).dump(1) + "\n");
  }
}

// ---------------------------------------------------------------------------
// Synthetic corpora.

struct SynthClass {
  std::string name;
  int count = 0;
  // When > 0, the class's boxes land only on this many randomly chosen
  // images (rare classes cluster on a few slides).
  int max_images = 0;
};

struct SynthSpec {
  std::string source = "synthetic";
  std::vector<SynthClass> classes;
  int num_images = 1;
  std::uint64_t seed = 0;
  ImageId first_image_id = 1;
  // Deal boxes round-robin over a shuffled image order instead of sampling
  // an image per box; gives near-equal box counts per image.
  bool even_spread = false;
  int cell = 32;  // grid cell side in pixels; one box per cell
};

struct SynthCorpus {
  DatasetIndex index;
  std::map<ImageId, Image> rasters;
};

inline Rgb synth_color(std::size_t class_index) {
  static constexpr Rgb kPalette[] = {
      {230, 57, 70},  {42, 157, 143}, {233, 196, 106}, {69, 123, 157},
      {244, 162, 97}, {131, 56, 236}, {255, 255, 255}, {20, 20, 20},
  };
  return kPalette[class_index % (sizeof(kPalette) / sizeof(kPalette[0]))];
}

inline constexpr Rgb kSynthBackground{128, 128, 128};

// Flat background with one filled rectangle (even class index) or ellipse
// (odd) per box, laid out on a grid so boxes never overlap.
inline SynthCorpus synth_fixture(const SynthSpec& spec) {
  if (spec.num_images < 1) throw ValidationError("synth: num_images must be >= 1");
  if (spec.cell < 8) throw ValidationError("synth: cell must be >= 8 px");
  std::mt19937_64 rng(spec.seed);
  std::vector<std::vector<std::size_t>> boxes_of(spec.num_images);
  std::vector<std::size_t> deal(spec.num_images);
  std::iota(deal.begin(), deal.end(), 0);
  detail::shuffle(deal, rng);
  std::size_t dealt = 0;
  for (std::size_t c = 0; c < spec.classes.size(); ++c) {
    if (spec.classes[c].name.empty() || spec.classes[c].count < 0) {
      throw ValidationError("synth: class needs a name and count >= 0");
    }
    std::vector<std::size_t> hosts = deal;
    const int limit = spec.classes[c].max_images;
    if (limit > 0 && limit < spec.num_images) {
      detail::shuffle(hosts, rng);
      hosts.resize(static_cast<std::size_t>(limit));
    }
    for (int b = 0; b < spec.classes[c].count; ++b) {
      const std::size_t img =
          spec.even_spread ? hosts[dealt++ % hosts.size()]
                           : hosts[detail::uniform_below(rng, hosts.size())];
      boxes_of[img].push_back(c);
    }
  }
  SynthCorpus out;
  std::vector<ImageRecord> recs;
  std::vector<Annotation> anns;
  const int cell = spec.cell;
  for (int i = 0; i < spec.num_images; ++i) {
    auto& classes = boxes_of[i];
    detail::shuffle(classes, rng);
    int cols = 1;
    while (static_cast<std::size_t>(cols) * cols < classes.size()) ++cols;
    cols = std::max(cols, 2);
    const int side = cols * cell;
    const ImageId id = spec.first_image_id + i;
    ImageRecord rec{id, spec.source + "/" + std::to_string(id) + ".png",
                    {side, side}, spec.source};
    Image raster(side, side, kSynthBackground);
    for (std::size_t k = 0; k < classes.size(); ++k) {
      const int cx = static_cast<int>(k % cols) * cell;
      const int cy = static_cast<int>(k / cols) * cell;
      const int lo = cell * 3 / 8, hi = cell - 4;
      const int w = lo + static_cast<int>(detail::uniform_below(rng, hi - lo + 1));
      const int h = lo + static_cast<int>(detail::uniform_below(rng, hi - lo + 1));
      const int x0 = cx + 2 + static_cast<int>(detail::uniform_below(rng, cell - 4 - w + 1));
      const int y0 = cy + 2 + static_cast<int>(detail::uniform_below(rng, cell - 4 - h + 1));
      const std::size_t c = classes[k];
      anns.push_back({id, BBox{double(x0), double(y0), double(x0 + w), double(y0 + h)},
                      spec.classes[c].name});
      const Rgb color = synth_color(c);
      const bool ellipse = c % 2 == 1;
      const double ax = w / 2.0, ay = h / 2.0;
      for (int y = y0; y < y0 + h; ++y) {
        for (int x = x0; x < x0 + w; ++x) {
          if (ellipse) {
            const double dx = (x + 0.5 - x0 - ax) / ax;
            const double dy = (y + 0.5 - y0 - ay) / ay;
            if (dx * dx + dy * dy > 1.0) continue;
          }
          raster.set(x, y, color);
        }
      }
    }
    out.rasters.emplace(id, std::move(raster));
    recs.push_back(std::move(rec));
  }
  out.index = DatasetIndex(std::move(recs), std::move(anns));
  return out;
}

// Writes every raster to <dir>/<record.path> and the index as COCO JSON at
// <dir>/index.json. Record paths stay relative to `dir`.
inline void write_corpus(const SynthCorpus& corpus, const std::string& dir) {
  namespace fs = std::filesystem;
  for (const auto& r : corpus.index.images()) {
    const fs::path p = fs::path(dir) / r.path;
    fs::create_directories(p.parent_path());
    write_png(p.string(), corpus.rasters.at(r.image_id));
  }
  save_index(corpus.index, (fs::path(dir) / "index.json").string(),
             IndexFormat::kCocoJson);
}

// Resolves a record path against the directory holding the index file.
inline std::string resolve_image_path(const ImageRecord& rec,
                                      const std::string& image_root) {
  const std::filesystem::path p(rec.path);
  if (p.is_absolute() || image_root.empty()) return p.string();
  return (std::filesystem::path(image_root) / p).string();
}

}  // namespace fsod

#endif  // FSOD_DATASET_HPP_
