// Copyright 2026 The tokmerge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tokmerge/error.hpp"

namespace tokmerge {

using Index = std::uint32_t;

struct Grid {
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t size() const noexcept { return height * width; }
  bool operator==(const Grid&) const = default;
};

/// Row-major N x C matrix of token features.
///
/// Token i sits at grid cell (i / width, i % width) when a grid is attached.
/// All values are finite; construction rejects anything else.
class TokenMatrix {
 public:
  TokenMatrix(std::size_t n_tokens, std::size_t n_channels,
              std::vector<float> data, std::optional<Grid> grid = {});

  static TokenMatrix zeros(std::size_t n_tokens, std::size_t n_channels,
                           std::optional<Grid> grid = {});

  std::size_t n_tokens() const noexcept { return n_tokens_; }
  std::size_t n_channels() const noexcept { return n_channels_; }
  const std::optional<Grid>& grid() const noexcept { return grid_; }

  std::span<const float> data() const noexcept { return data_; }
  std::span<const float> row(std::size_t i) const noexcept {
    return {data_.data() + i * n_channels_, n_channels_};
  }
  std::span<float> row(std::size_t i) noexcept {
    return {data_.data() + i * n_channels_, n_channels_};
  }

  float at(std::size_t i, std::size_t c) const noexcept {
    return data_[i * n_channels_ + c];
  }

  // Same data with a different (or no) grid. Throws if the grid does not
  // cover exactly n_tokens cells.
  TokenMatrix with_grid(std::optional<Grid> grid) const;

  bool operator==(const TokenMatrix&) const = default;

 private:
  std::size_t n_tokens_ = 0;
  std::size_t n_channels_ = 0;
  std::vector<float> data_;
  std::optional<Grid> grid_;
};

/// One non-negative score per token.
class ImportanceMap {
 public:
  explicit ImportanceMap(std::vector<float> scores,
                         std::int64_t source_timestep = -1);

  std::size_t size() const noexcept { return scores_.size(); }
  std::span<const float> scores() const noexcept { return scores_; }
  float operator[](std::size_t i) const noexcept { return scores_[i]; }
  std::int64_t source_timestep() const noexcept { return source_timestep_; }

  bool operator==(const ImportanceMap&) const = default;

 private:
  std::vector<float> scores_;
  std::int64_t source_timestep_;
};

enum class Strategy {
  none,
  tome_random_grid,
  importance_pool,
  topk_dst,
  // Uniform dst over the whole token set (no grid); the reference the
  // importance pool collapses to when K = N.
  random_dst,
};

// CLI spellings: none | tome | importance | topk | random.
std::string_view to_string(Strategy s) noexcept;
std::optional<Strategy> parse_strategy(std::string_view name) noexcept;

struct MergeConfig {
  Strategy strategy = Strategy::importance_pool;
  double ratio = 0.5;         // r: fraction of tokens removed
  double dst_fraction = 0.25; // k
  double pool_factor = 0.4;   // p
  std::size_t prune_steps = 6;
  std::uint64_t seed = 0;

  // Throws Error(invalid_argument) when a field is out of range.
  void validate() const;
};

struct MergeCounts {
  std::size_t pool;         // K
  std::size_t dst;          // D
  std::size_t independent;  // I
  std::size_t n_out;        // D + I

  bool operator==(const MergeCounts&) const = default;
};

/// Token budget for `n` input tokens. Fractional counts are floored (with a
/// tiny tolerance so that e.g. 10 * 0.7 yields 7), I is the residual
/// n_out - D, and K is clamped into [D + I, n].
MergeCounts counts_for(std::size_t n, const MergeConfig& config);

struct MergeEdge {
  Index src;
  Index dst;
  bool operator==(const MergeEdge&) const = default;
};

/// A partition of {0..N-1} into dst, independent and merged tokens, plus the
/// merged -> dst assignment.
///
/// Reduced-set ordering is [dst..., independent...]; `slot_of(i)` gives the
/// reduced row that carries token i after merging.
class MergePlan {
 public:
  // Throws Error(invalid_plan) unless the three sets partition {0..n_in-1}
  // and every merge target is a dst token.
  MergePlan(std::size_t n_in, std::vector<Index> dst,
            std::vector<Index> independent, std::vector<MergeEdge> merged);

  // Keeps every token as independent; reduces nothing.
  static MergePlan identity(std::size_t n_in);

  std::size_t n_in() const noexcept { return n_in_; }
  std::size_t n_out() const noexcept {
    return dst_.size() + independent_.size();
  }
  std::span<const Index> dst_indices() const noexcept { return dst_; }
  std::span<const Index> independent_indices() const noexcept {
    return independent_;
  }
  // Sorted by src index.
  std::span<const MergeEdge> merged() const noexcept { return merged_; }

  Index slot_of(std::size_t token) const noexcept { return slot_[token]; }
  bool merges_nothing() const noexcept { return merged_.empty(); }

  bool operator==(const MergePlan&) const = default;

 private:
  std::size_t n_in_;
  std::vector<Index> dst_;
  std::vector<Index> independent_;
  std::vector<MergeEdge> merged_;
  std::vector<Index> slot_;
};

/// Reduces `tokens` to plan.n_out() rows: each dst row becomes the unweighted
/// mean of itself and the tokens merged into it; independents pass through.
TokenMatrix apply_merge(const TokenMatrix& tokens, const MergePlan& plan);

/// Like apply_merge but merged tokens are dropped and dst rows are kept as-is.
TokenMatrix apply_prune(const TokenMatrix& tokens, const MergePlan& plan);

/// Restores n_in rows in original order; merged positions copy the processed
/// value of their dst.
TokenMatrix apply_unmerge(const TokenMatrix& processed, const MergePlan& plan);

}  // namespace tokmerge
