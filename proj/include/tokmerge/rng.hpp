// Copyright 2026 The tokmerge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

namespace tokmerge {

/// xoshiro256** seeded through splitmix64.
///
/// A (seed, stream) pair fully determines the sequence. Integer draws are
/// bit-identical on every platform; `normal()` additionally depends on the
/// host libm for log/cos.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  // Stream id for the plan built at (timestep, layer). Disjoint from the
  // sampler's noise streams.
  static std::uint64_t plan_stream(std::uint64_t timestep, std::uint64_t layer);
  static std::uint64_t noise_stream(std::uint64_t purpose);

  std::uint64_t next();
  // Uniform in [0, bound); bound must be > 0.
  std::uint64_t uniform_below(std::uint64_t bound);
  // Uniform in [0, 1) with 53 bits.
  double uniform();
  double normal();

 private:
  std::uint64_t s_[4];
};

}  // namespace tokmerge
