// Copyright 2026 The repsup Authors
// SPDX-License-Identifier: Apache-2.0
//
// Token ids, reserved vocabulary slots and the toolkit's error types.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace repsup {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr TokenId kSep = 4;
inline constexpr TokenId kNumReserved = 5;

/// A configuration value violates its declared invariant. `field()` is the
/// dotted path of the offending field, e.g. "model.d_model".
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }
  /// The message without the field prefix.
  std::string message() const { return std::string(what()).substr(field_.size() + 2); }

  /// Same error with the first path component replaced by `prefix`
  /// ("loss.N" rebased on "train.loss" becomes "train.loss.N").
  ConfigError rebased(const std::string& prefix) const {
    const auto dot = field_.find('.');
    return ConfigError(prefix + (dot == std::string::npos ? "" : field_.substr(dot)), message());
  }

 private:
  std::string field_;
};

/// Bad runtime input (token ids out of range, empty sequences, malformed
/// files, ...).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

const char* version() noexcept;

}  // namespace repsup
