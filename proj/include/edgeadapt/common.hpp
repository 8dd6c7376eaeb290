// Copyright 2026 The edgeadapt Authors.
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

#ifndef EDGEADAPT_COMMON_HPP_
#define EDGEADAPT_COMMON_HPP_

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace edgeadapt {

/// Base class for every error raised by the library. The message is meant to
/// be shown to users as-is.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by file readers; `where` carries "path:line" or "path@byte".
class ParseError : public Error {
 public:
  ParseError(const std::string& where, const std::string& what)
      : Error(where + ": " + what), where_(where) {}
  const std::string& where() const { return where_; }

 private:
  std::string where_;
};

/// Identifies one block variant in a supernet: the first basic-block position
/// it covers and its degree. degree > 0 replaces degree+1 positions with one
/// merged block, 0 is the original block, and -k is the k-th shrink level.
struct VariantKey {
  int start = 0;
  int degree = 0;

  /// Number of basic-block positions this variant covers.
  int span() const { return degree > 0 ? degree + 1 : 1; }
  /// One past the last covered position.
  int end() const { return start + span(); }
  bool is_original() const { return degree == 0; }

  std::string str() const {
    return std::to_string(start) + ":" + std::to_string(degree);
  }

  friend auto operator<=>(const VariantKey&, const VariantKey&) = default;
};

}  // namespace edgeadapt

#endif  // EDGEADAPT_COMMON_HPP_
