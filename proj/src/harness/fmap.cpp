// Copyright 2026 The tokmerge Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokmerge/harness/fmap.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <string>

#include "tokmerge/error.hpp"

namespace tokmerge::harness {

namespace {

constexpr char kMagic[4] = {'F', 'M', 'A', 'P'};
constexpr std::uint64_t kRecordHeaderBytes = 16;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint64_t offset() const { return pos_; }
  std::uint64_t remaining() const { return bytes_.size() - pos_; }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  void f32s(std::vector<float>& out, std::uint64_t count, const char* what) {
    if (count > remaining() / 4) {
      throw FormatError(pos_, std::string("truncated ") + what + ": need " +
                                  std::to_string(count) + " floats, have " +
                                  std::to_string(remaining()) + " bytes");
    }
    out.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      std::uint32_t v = 0;
      for (int b = 0; b < 4; ++b) {
        v |= static_cast<std::uint32_t>(bytes_[pos_ + b]) << (8 * b);
      }
      out[i] = std::bit_cast<float>(v);
      pos_ += 4;
    }
  }

  void need(std::uint64_t n, const char* what) const {
    if (remaining() < n) {
      throw FormatError(pos_, std::string("truncated ") + what + ": need " +
                                  std::to_string(n) + " bytes, have " +
                                  std::to_string(remaining()));
    }
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::uint64_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_fmap(std::span<const FmapRecord> records) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, kFmapVersion);
  put_u32(out, static_cast<std::uint32_t>(records.size()));
  for (const FmapRecord& r : records) {
    if (r.features.size() != static_cast<std::uint64_t>(r.n) * r.c ||
        r.guidance.size() != r.n) {
      throw Error(Errc::shape_mismatch,
                  "record payload does not match its declared n and c");
    }
    put_u32(out, r.timestep);
    put_u32(out, r.layer);
    put_u32(out, r.n);
    put_u32(out, r.c);
    for (float v : r.features) put_f32(out, v);
    for (float v : r.guidance) put_f32(out, v);
  }
  return out;
}

std::vector<FmapRecord> decode_fmap(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  in.need(4, "magic");
  for (int i = 0; i < 4; ++i) {
    if (bytes[i] != static_cast<std::uint8_t>(kMagic[i])) {
      throw FormatError(0, "bad magic, expected \"FMAP\"");
    }
  }
  in.u32("magic");
  const std::uint64_t version_at = in.offset();
  const std::uint32_t version = in.u32("version");
  if (version != kFmapVersion) {
    throw FormatError(version_at, "unsupported version " + std::to_string(version));
  }
  const std::uint32_t count = in.u32("record count");

  // Each record needs at least its header, which bounds a hostile count.
  if (static_cast<std::uint64_t>(count) * kRecordHeaderBytes > in.remaining()) {
    throw FormatError(in.offset(), "record count " + std::to_string(count) +
                                       " exceeds the remaining payload");
  }
  std::vector<FmapRecord> records;
  records.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    FmapRecord r;
    r.timestep = in.u32("record header");
    r.layer = in.u32("record header");
    r.n = in.u32("record header");
    r.c = in.u32("record header");
    const std::uint64_t values = static_cast<std::uint64_t>(r.n) * r.c;
    in.f32s(r.features, values, "feature payload");
    in.f32s(r.guidance, r.n, "guidance payload");
    records.push_back(std::move(r));
  }
  if (in.remaining() != 0) {
    throw FormatError(in.offset(), std::to_string(in.remaining()) +
                                       " trailing bytes after last record");
  }
  return records;
}

void write_fmap(const std::filesystem::path& path,
                std::span<const FmapRecord> records) {
  const auto bytes = encode_fmap(records);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::io, "write failed for " + path.string());
}

std::vector<FmapRecord> read_fmap(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(Errc::io, "read failed for " + path.string());
  try {
    return decode_fmap(bytes);
  } catch (const FormatError& e) {
    throw FormatError(e.offset(), path.string() + ": " + e.detail());
  }
}

}  // namespace tokmerge::harness
