// Copyright 2026 The tokmerge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>

namespace tokmerge::harness {

// Closed-form multiply-add counts (2 FLOPs per MAC) for the toy denoiser.
//
//   self-attention on n tokens, c channels:
//     Q, K, V, O projections   8 n c^2
//     scores + weighted sum    4 n^2 c
//   MLP with hidden width h:   2 n c h * 2
//   input/output projections:  2 n c^2 each
//
// A sampling step runs the network twice (conditional and unconditional).
struct FlopModel {
  std::uint64_t channels;
  std::uint64_t mlp_hidden;
  std::uint64_t blocks = 2;

  static std::uint64_t attention(std::uint64_t n, std::uint64_t c) {
    return 8 * n * c * c + 4 * n * n * c;
  }
  static std::uint64_t attention_quadratic(std::uint64_t n, std::uint64_t c) {
    return 4 * n * n * c;
  }
  static std::uint64_t mlp(std::uint64_t n, std::uint64_t c, std::uint64_t h) {
    return 2 * n * c * h * 2;
  }

  // One network evaluation with attention running on `attention_tokens`.
  std::uint64_t forward(std::uint64_t n_tokens, std::uint64_t attention_tokens) const;
  // Both CFG passes.
  std::uint64_t step(std::uint64_t n_tokens, std::uint64_t attention_tokens) const {
    return 2 * forward(n_tokens, attention_tokens);
  }
};

}  // namespace tokmerge::harness
