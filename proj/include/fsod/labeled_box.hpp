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

#ifndef FSOD_LABELED_BOX_HPP_
#define FSOD_LABELED_BOX_HPP_

#include <cstdint>
#include <optional>
#include <string>

#include "fsod/geometry.hpp"

namespace fsod {

using ImageId = std::int64_t;

// Ground-truth box.
struct Annotation {
  ImageId image_id = 0;
  BBox bbox;
  std::string class_label;

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

// Predicted box. `in_vocab` is false when the backend answered with a label
// outside the experiment vocabulary; such a label never matches ground truth.
struct Detection {
  BBox bbox;
  std::string class_label;
  std::optional<double> score;
  bool in_vocab = true;

  friend bool operator==(const Detection&, const Detection&) = default;
};

}  // namespace fsod

#endif  // FSOD_LABELED_BOX_HPP_
