// Copyright 2026 The tokmerge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "tokmerge/core.hpp"
#include "tokmerge/matching.hpp"
#include "tokmerge/rng.hpp"

namespace tokmerge {

// Every planner returns dst_indices and independent_indices in ascending
// token order. Src tokens are matched to their most similar dst; the
// independents are the I candidates with the lowest best-match score (ties
// to the lower index) and everything else is merged.

/// ToMeSD baseline: one random dst per 2x2 cell of the token grid (k is
/// fixed at 1/4), every other token is a src candidate.
MergePlan plan_tome_grid(const TokenMatrix& tokens, const MergeConfig& config,
                         Rng& rng, SimilarityKernel kernel = &cosine_similarity);

/// D = floor(N k) dst drawn uniformly without replacement from all tokens;
/// every other token is a src candidate.
MergePlan plan_random_dst(const TokenMatrix& tokens, const MergeConfig& config,
                          Rng& rng, SimilarityKernel kernel = &cosine_similarity);

/// Importance-pool selection. The K most important tokens form the pool;
/// dst tokens are drawn uniformly from it, independents come only from the
/// rest of the pool, and every token outside the pool is merged.
MergePlan plan_importance_pool(const TokenMatrix& tokens,
                               const ImportanceMap& importance,
                               const MergeConfig& config, Rng& rng,
                               SimilarityKernel kernel = &cosine_similarity);

/// Ablation baseline: the D most important tokens become dst; independents
/// are chosen among all remaining tokens. Consumes no randomness.
MergePlan plan_topk_dst(const TokenMatrix& tokens,
                        const ImportanceMap& importance,
                        const MergeConfig& config,
                        SimilarityKernel kernel = &cosine_similarity);

/// Top-K token indices of `importance` (the pool), ascending.
std::vector<Index> importance_pool(const ImportanceMap& importance,
                                   std::size_t pool_size);

}  // namespace tokmerge
