// Copyright 2026 The tokmerge Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokmerge/harness/flop_model.hpp"

namespace tokmerge::harness {

std::uint64_t FlopModel::forward(std::uint64_t n_tokens,
                                 std::uint64_t attention_tokens) const {
  const std::uint64_t io = 2 * (2 * n_tokens * channels * channels);
  const std::uint64_t per_block =
      attention(attention_tokens, channels) + mlp(n_tokens, channels, mlp_hidden);
  return io + blocks * per_block;
}

}  // namespace tokmerge::harness
