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

#ifndef FSOD_ERRORS_HPP_
#define FSOD_ERRORS_HPP_

#include <stdexcept>
#include <string>
#include <utility>

namespace fsod {

// Input violates a documented contract (bad box, bad config, infeasible
// split constraints). Maps to CLI exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Split constraints cannot be met. Carries the offending class when known.
class InfeasibleError : public ValidationError {
 public:
  InfeasibleError(const std::string& what, std::string class_label = {})
      : ValidationError(what), class_label_(std::move(class_label)) {}
  const std::string& class_label() const noexcept { return class_label_; }

 private:
  std::string class_label_;
};

// A remote backend failed after all retries, or answered with a payload
// that does not follow the wire protocol. Maps to exit code 2.
class BackendError : public std::runtime_error {
 public:
  BackendError(const std::string& what, std::string raw_response = {})
      : std::runtime_error(what), raw_response_(std::move(raw_response)) {}
  const std::string& raw_response() const noexcept { return raw_response_; }

 private:
  std::string raw_response_;
};

// File system or encoding failure. Maps to exit code 3.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fsod

#endif  // FSOD_ERRORS_HPP_
