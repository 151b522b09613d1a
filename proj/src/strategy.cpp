// Copyright 2026 The tokmerge Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokmerge/strategy.hpp"

#include <algorithm>
#include <numeric>

#include "tokmerge/importance.hpp"

namespace tokmerge {

namespace {

// Matches `candidates` and `forced` against `dst`, keeps `n_independent` of
// the candidates as independents and merges the remainder.
MergePlan finish_plan(const TokenMatrix& tokens, std::vector<Index> dst,
                      const std::vector<Index>& candidates,
                      const std::vector<Index>& forced,
                      std::size_t n_independent, SimilarityKernel kernel) {
  std::sort(dst.begin(), dst.end());
  if (n_independent > candidates.size()) {
    throw Error(Errc::config_infeasible,
                "pool holds fewer src tokens than the independent count");
  }

  std::vector<Index> src = candidates;
  src.insert(src.end(), forced.begin(), forced.end());
  const MatchResult match = bipartite_match(tokens, src, dst, kernel);

  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (match.score[a] != match.score[b]) return match.score[a] < match.score[b];
    return candidates[a] < candidates[b];
  });

  std::vector<bool> keep(src.size(), false);
  std::vector<Index> independent;
  independent.reserve(n_independent);
  for (std::size_t i = 0; i < n_independent; ++i) {
    keep[order[i]] = true;
    independent.push_back(candidates[order[i]]);
  }
  std::sort(independent.begin(), independent.end());

  std::vector<MergeEdge> merged;
  merged.reserve(src.size() - n_independent);
  for (std::size_t s = 0; s < src.size(); ++s) {
    if (!keep[s]) merged.push_back({src[s], dst[match.assignment[s]]});
  }
  return MergePlan(tokens.n_tokens(), std::move(dst), std::move(independent),
                   std::move(merged));
}

std::vector<Index> complement(std::size_t n, const std::vector<Index>& taken) {
  std::vector<bool> used(n, false);
  for (Index i : taken) used[i] = true;
  std::vector<Index> rest;
  rest.reserve(n - taken.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (!used[i]) rest.push_back(static_cast<Index>(i));
  }
  return rest;
}

// Partial Fisher-Yates: moves `count` uniformly drawn elements to the front.
void draw_front(std::vector<Index>& items, std::size_t count, Rng& rng) {
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.uniform_below(items.size() - i);
    std::swap(items[i], items[j]);
  }
}

void check_importance(const TokenMatrix& tokens, const ImportanceMap& importance) {
  if (importance.size() != tokens.n_tokens()) {
    throw Error(Errc::shape_mismatch,
                "importance map has " + std::to_string(importance.size()) +
                    " scores for " + std::to_string(tokens.n_tokens()) +
                    " tokens");
  }
}

}  // namespace

MergePlan plan_tome_grid(const TokenMatrix& tokens, const MergeConfig& config,
                         Rng& rng, SimilarityKernel kernel) {
  const auto& grid = tokens.grid();
  if (!grid || grid->height % 2 != 0 || grid->width % 2 != 0) {
    throw Error(Errc::invalid_argument,
                "grid selection needs a token grid with even height and width");
  }
  MergeConfig grid_config = config;
  grid_config.dst_fraction = 0.25;
  const MergeCounts counts = counts_for(tokens.n_tokens(), grid_config);

  std::vector<Index> dst;
  dst.reserve(counts.dst);
  for (std::size_t y = 0; y < grid->height; y += 2) {
    for (std::size_t x = 0; x < grid->width; x += 2) {
      const std::uint64_t pick = rng.uniform_below(4);
      dst.push_back(static_cast<Index>((y + pick / 2) * grid->width + x + pick % 2));
    }
  }
  const auto candidates = complement(tokens.n_tokens(), dst);
  return finish_plan(tokens, std::move(dst), candidates, {}, counts.independent,
                     kernel);
}

MergePlan plan_random_dst(const TokenMatrix& tokens, const MergeConfig& config,
                          Rng& rng, SimilarityKernel kernel) {
  const MergeCounts counts = counts_for(tokens.n_tokens(), config);
  std::vector<Index> all(tokens.n_tokens());
  std::iota(all.begin(), all.end(), Index{0});
  draw_front(all, counts.dst, rng);
  std::vector<Index> dst(all.begin(), all.begin() + counts.dst);
  const auto candidates = complement(tokens.n_tokens(), dst);
  return finish_plan(tokens, std::move(dst), candidates, {}, counts.independent,
                     kernel);
}

std::vector<Index> importance_pool(const ImportanceMap& importance,
                                   std::size_t pool_size) {
  auto ranked = rank_tokens(importance);
  ranked.resize(std::min(pool_size, ranked.size()));
  std::sort(ranked.begin(), ranked.end());
  return ranked;
}

MergePlan plan_importance_pool(const TokenMatrix& tokens,
                               const ImportanceMap& importance,
                               const MergeConfig& config, Rng& rng,
                               SimilarityKernel kernel) {
  check_importance(tokens, importance);
  const MergeCounts counts = counts_for(tokens.n_tokens(), config);
  if (counts.pool < counts.dst + counts.independent) {
    throw Error(Errc::config_infeasible, "pool smaller than D + I");
  }

  // Sampling runs over the pool in ascending index order, so with K = N it
  // consumes the stream exactly like plan_random_dst.
  std::vector<Index> pool = importance_pool(importance, counts.pool);
  draw_front(pool, counts.dst, rng);
  std::vector<Index> dst(pool.begin(), pool.begin() + counts.dst);
  std::vector<Index> candidates(pool.begin() + counts.dst, pool.end());
  std::sort(candidates.begin(), candidates.end());

  const auto outside = complement(tokens.n_tokens(), pool);
  return finish_plan(tokens, std::move(dst), candidates, outside,
                     counts.independent, kernel);
}

MergePlan plan_topk_dst(const TokenMatrix& tokens,
                        const ImportanceMap& importance,
                        const MergeConfig& config, SimilarityKernel kernel) {
  check_importance(tokens, importance);
  const MergeCounts counts = counts_for(tokens.n_tokens(), config);
  auto ranked = rank_tokens(importance);
  std::vector<Index> dst(ranked.begin(), ranked.begin() + counts.dst);
  const auto candidates = complement(tokens.n_tokens(), dst);
  return finish_plan(tokens, std::move(dst), candidates, {}, counts.independent,
                     kernel);
}

}  // namespace tokmerge
