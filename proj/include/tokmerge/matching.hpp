// Copyright 2026 The tokmerge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "tokmerge/core.hpp"

namespace tokmerge {

/// Cosine of the angle between `a` and `b`, clamped to [-1, 1]. A zero-norm
/// operand yields 0.
double cosine_similarity(std::span<const float> a, std::span<const float> b);

using SimilarityKernel = double (*)(std::span<const float>,
                                    std::span<const float>);

struct MatchResult {
  std::vector<Index> assignment;  // per src: position in the dst set
  std::vector<double> score;      // per src: similarity to that dst
};

/// Links every src row to its most similar dst row. Ties go to the lowest
/// dst position.
MatchResult bipartite_match(const TokenMatrix& src, const TokenMatrix& dst,
                            SimilarityKernel kernel = &cosine_similarity);

/// Index-based form over rows of a single matrix; `assignment` holds
/// positions into `dst`, not token indices.
MatchResult bipartite_match(const TokenMatrix& tokens,
                            std::span<const Index> src,
                            std::span<const Index> dst,
                            SimilarityKernel kernel = &cosine_similarity);

}  // namespace tokmerge
