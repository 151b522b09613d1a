// Copyright 2026 The tokmerge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace tokmerge::harness {

// FMAP capture files, all integers and floats little-endian:
//
//   "FMAP"            4 bytes
//   version           u32 (= 1)
//   record count      u32
//   per record:
//     timestep        u32
//     layer id        u32
//     n               u32
//     c               u32
//     features        n * c f32, row-major
//     guidance        n f32
//
// Trailing bytes after the last record are an error.

inline constexpr std::uint32_t kFmapVersion = 1;

struct FmapRecord {
  std::uint32_t timestep = 0;
  std::uint32_t layer = 0;
  std::uint32_t n = 0;
  std::uint32_t c = 0;
  std::vector<float> features;
  std::vector<float> guidance;

  bool operator==(const FmapRecord&) const = default;
};

std::vector<std::uint8_t> encode_fmap(std::span<const FmapRecord> records);

// Throws FormatError naming the byte offset of the first structural problem.
// Float payloads are not validated here.
std::vector<FmapRecord> decode_fmap(std::span<const std::uint8_t> bytes);

// Throw Error(io) with the path on filesystem failures.
void write_fmap(const std::filesystem::path& path,
                std::span<const FmapRecord> records);
std::vector<FmapRecord> read_fmap(const std::filesystem::path& path);

}  // namespace tokmerge::harness
