// Copyright 2026 The tokmerge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace tokmerge {

enum class Errc {
  invalid_argument,
  shape_mismatch,
  invalid_plan,
  config_infeasible,
  out_of_range,
  format,
  io,
};

const char* to_string(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// Structural failure while decoding a binary stream; `offset` is the byte
// position at which decoding could not continue.
class FormatError : public Error {
 public:
  FormatError(std::uint64_t offset, const std::string& what)
      : Error(Errc::format,
              what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset),
        detail_(what) {}

  std::uint64_t offset() const noexcept { return offset_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::uint64_t offset_;
  std::string detail_;
};

}  // namespace tokmerge
