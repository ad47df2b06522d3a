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

// K-shot support sets drawn from the example split, and crop extraction.

#ifndef FSOD_SUPPORT_HPP_
#define FSOD_SUPPORT_HPP_

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "fsod/dataset.hpp"
#include "fsod/errors.hpp"
#include "fsod/geometry.hpp"
#include "fsod/image.hpp"
#include "fsod/split_file.hpp"
#include "fsod/split_optimizer.hpp"

namespace fsod {

struct SupportCrop {
  ImageId image_id = 0;
  BBox box;     // the annotated object
  BBox region;  // crop_region(box, dims, margin)
  std::string class_label;

  friend bool operator==(const SupportCrop&, const SupportCrop&) = default;
};

struct SupportSet {
  int k = 0;
  double margin = kDefaultCropMargin;
  std::map<std::string, std::vector<SupportCrop>> per_class;
  // Classes with fewer than K example boxes; all of them were taken.
  std::map<std::string, int> shortfall;

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& kv : per_class) n += kv.second.size();
    return n;
  }
  friend bool operator==(const SupportSet&, const SupportSet&) = default;
};

inline bool is_supported_k(int k) { return k == 1 || k == 3 || k == 6; }

// Throws if any crop comes from an image outside the example split.
inline void assert_no_test_leak(const SupportSet& s, const SplitFile& split) {
  for (const auto& [label, crops] : s.per_class) {
    for (const auto& c : crops) {
      if (split.side_of(c.image_id) != Side::kExample) {
        throw ValidationError("support crop for '" + label + "' comes from image " +
                              std::to_string(c.image_id) +
                              ", which is not in the example split");
      }
    }
  }
}

// Per class, K annotations sampled without replacement from example-split
// images by a seeded shuffle of the canonical (image id, file order) list.
// Each class draws from its own stream so adding a class leaves the others
// unchanged.
inline SupportSet build_support(const DatasetIndex& index,
                                const SplitFile& split, int k,
                                std::uint64_t seed,
                                double margin = kDefaultCropMargin) {
  if (!is_supported_k(k)) {
    throw ValidationError("K must be 1, 3 or 6, got " + std::to_string(k));
  }
  std::map<std::string, std::vector<SupportCrop>> pool;
  for (ImageId id : split.images_in(Side::kExample)) {
    if (!index.contains(id)) {
      throw ValidationError("split lists image " + std::to_string(id) +
                            " that is not in the index");
    }
    const ImageDims dims = index.record(id).dims;
    for (const auto& a : index.annotations_of(id)) {
      pool[a.class_label].push_back(
          {id, a.bbox, crop_region(a.bbox, dims, margin), a.class_label});
    }
  }
  SupportSet out;
  out.k = k;
  out.margin = margin;
  for (const auto& label : index.vocabulary()) {
    auto it = pool.find(label);
    if (it == pool.end() || it->second.empty()) {
      throw ValidationError("class '" + label +
                            "' has no boxes in the example split");
    }
    auto candidates = it->second;
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : label) h = (h ^ ch) * 1099511628211ULL;
    std::mt19937_64 rng(detail::splitmix64(seed ^ h));
    detail::shuffle(candidates, rng);
    const std::size_t take =
        std::min<std::size_t>(static_cast<std::size_t>(k), candidates.size());
    candidates.resize(take);
    if (take < static_cast<std::size_t>(k)) {
      out.shortfall[label] = k - static_cast<int>(take);
    }
    out.per_class[label] = std::move(candidates);
  }
  assert_no_test_leak(out, split);
  return out;
}

// Pixels of crop_region(box, dims, margin) as a PNG.
inline Bytes extract_crop(const Image& image, const BBox& box,
                          double margin = kDefaultCropMargin) {
  const BBox region = crop_region(box, image.dims(), margin);
  const PixelRect r = pixel_rect(region, image.dims());
  if (r.width() <= 0 || r.height() <= 0) {
    throw ValidationError("crop region is empty");
  }
  return encode_png(image.crop(r));
}

inline Bytes extract_crop(const ImageRecord& record,
                          const std::string& image_root, const BBox& box,
                          double margin = kDefaultCropMargin) {
  const Image img = read_png(resolve_image_path(record, image_root));
  if (img.dims() != record.dims) {
    throw IoError("image " + std::to_string(record.image_id) + " is " +
                  std::to_string(img.width()) + "x" +
                  std::to_string(img.height()) + ", index says " +
                  std::to_string(record.dims.width) + "x" +
                  std::to_string(record.dims.height));
  }
  return extract_crop(img, box, margin);
}

}  // namespace fsod

#endif  // FSOD_SUPPORT_HPP_
