// Copyright 2026 The tokmerge Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokmerge/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tokmerge {

const char* to_string(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument: return "invalid argument";
    case Errc::shape_mismatch: return "shape mismatch";
    case Errc::invalid_plan: return "invalid plan";
    case Errc::config_infeasible: return "infeasible config";
    case Errc::out_of_range: return "out of range";
    case Errc::format: return "format error";
    case Errc::io: return "i/o error";
  }
  return "unknown error";
}

namespace {

constexpr Index kUnassigned = std::numeric_limits<Index>::max();

void check_grid(const std::optional<Grid>& grid, std::size_t n_tokens) {
  if (grid && grid->size() != n_tokens) {
    throw Error(Errc::shape_mismatch,
                "grid " + std::to_string(grid->height) + "x" +
                    std::to_string(grid->width) + " does not cover " +
                    std::to_string(n_tokens) + " tokens");
  }
}

std::size_t floor_count(double x) {
  // Products such as 10 * 0.7 land a few ulps under the integer they denote.
  return static_cast<std::size_t>(std::floor(x + 1e-9));
}

}  // namespace

TokenMatrix::TokenMatrix(std::size_t n_tokens, std::size_t n_channels,
                         std::vector<float> data, std::optional<Grid> grid)
    : n_tokens_(n_tokens),
      n_channels_(n_channels),
      data_(std::move(data)),
      grid_(grid) {
  if (n_tokens_ == 0 || n_channels_ == 0) {
    throw Error(Errc::invalid_argument, "token matrix must be non-empty");
  }
  if (data_.size() != n_tokens_ * n_channels_) {
    throw Error(Errc::shape_mismatch,
                "token matrix expects " +
                    std::to_string(n_tokens_ * n_channels_) + " values, got " +
                    std::to_string(data_.size()));
  }
  check_grid(grid_, n_tokens_);
  for (float v : data_) {
    if (!std::isfinite(v)) {
      throw Error(Errc::invalid_argument, "token matrix holds a non-finite value");
    }
  }
}

TokenMatrix TokenMatrix::zeros(std::size_t n_tokens, std::size_t n_channels,
                               std::optional<Grid> grid) {
  return TokenMatrix(n_tokens, n_channels,
                     std::vector<float>(n_tokens * n_channels, 0.0f), grid);
}

TokenMatrix TokenMatrix::with_grid(std::optional<Grid> grid) const {
  check_grid(grid, n_tokens_);
  TokenMatrix out = *this;
  out.grid_ = grid;
  return out;
}

ImportanceMap::ImportanceMap(std::vector<float> scores,
                             std::int64_t source_timestep)
    : scores_(std::move(scores)), source_timestep_(source_timestep) {
  for (float s : scores_) {
    if (!std::isfinite(s) || s < 0.0f) {
      throw Error(Errc::invalid_argument,
                  "importance scores must be finite and non-negative");
    }
  }
}

std::string_view to_string(Strategy s) noexcept {
  switch (s) {
    case Strategy::none: return "none";
    case Strategy::tome_random_grid: return "tome";
    case Strategy::importance_pool: return "importance";
    case Strategy::topk_dst: return "topk";
    case Strategy::random_dst: return "random";
  }
  return "?";
}

std::optional<Strategy> parse_strategy(std::string_view name) noexcept {
  if (name == "none") return Strategy::none;
  if (name == "tome" || name == "tome-random-grid") return Strategy::tome_random_grid;
  if (name == "importance" || name == "importance-pool") return Strategy::importance_pool;
  if (name == "topk" || name == "topk-dst") return Strategy::topk_dst;
  if (name == "random" || name == "random-dst") return Strategy::random_dst;
  return std::nullopt;
}

void MergeConfig::validate() const {
  auto fail = [](const std::string& msg) {
    throw Error(Errc::invalid_argument, msg);
  };
  if (!(ratio >= 0.0 && ratio < 1.0)) fail("ratio must lie in [0, 1)");
  if (!(dst_fraction > 0.0 && dst_fraction < 1.0)) {
    fail("dst fraction must lie in (0, 1)");
  }
  // k + r = 1 is admitted: it leaves zero independent tokens (k=0.25, r=0.75).
  if (dst_fraction + ratio > 1.0 + 1e-12) {
    fail("dst fraction + ratio must not exceed 1");
  }
  if (!(pool_factor >= 0.0) || !std::isfinite(pool_factor)) {
    fail("pool factor must be finite and non-negative");
  }
}

MergeCounts counts_for(std::size_t n, const MergeConfig& config) {
  config.validate();
  if (n < 4) {
    throw Error(Errc::config_infeasible, "need at least 4 tokens to merge");
  }
  const double nd = static_cast<double>(n);
  const std::size_t dst = floor_count(nd * config.dst_fraction);
  const std::size_t n_out = floor_count(nd * (1.0 - config.ratio));
  if (dst == 0) {
    throw Error(Errc::config_infeasible,
                "dst fraction yields no destination tokens for n=" +
                    std::to_string(n));
  }
  if (n_out < dst) {
    throw Error(Errc::config_infeasible,
                "ratio and dst fraction leave a negative independent count");
  }
  const std::size_t independent = n_out - dst;
  std::size_t pool = floor_count(nd * (1.0 - config.ratio) *
                                 (1.0 + config.pool_factor));
  pool = std::clamp(pool, n_out, n);
  return {pool, dst, independent, n_out};
}

MergePlan::MergePlan(std::size_t n_in, std::vector<Index> dst,
                     std::vector<Index> independent,
                     std::vector<MergeEdge> merged)
    : n_in_(n_in),
      dst_(std::move(dst)),
      independent_(std::move(independent)),
      merged_(std::move(merged)),
      slot_(n_in, kUnassigned) {
  auto fail = [](const std::string& msg) {
    throw Error(Errc::invalid_plan, msg);
  };
  if (dst_.size() + independent_.size() + merged_.size() != n_in_) {
    fail("plan sets do not cover " + std::to_string(n_in_) + " tokens");
  }
  Index slot = 0;
  auto claim = [&](Index token) {
    if (token >= n_in_) fail("token index " + std::to_string(token) + " out of range");
    if (slot_[token] != kUnassigned) {
      fail("token " + std::to_string(token) + " appears twice in plan");
    }
    slot_[token] = slot++;
  };
  for (Index d : dst_) claim(d);
  for (Index i : independent_) claim(i);

  std::sort(merged_.begin(), merged_.end(),
            [](const MergeEdge& a, const MergeEdge& b) { return a.src < b.src; });
  for (const MergeEdge& e : merged_) {
    if (e.src >= n_in_ || e.dst >= n_in_) fail("merge edge out of range");
    if (slot_[e.src] != kUnassigned) {
      fail("token " + std::to_string(e.src) + " appears twice in plan");
    }
    const Index target = slot_[e.dst];
    if (target == kUnassigned || target >= dst_.size()) {
      fail("token " + std::to_string(e.src) + " merges into non-dst token " +
           std::to_string(e.dst));
    }
    slot_[e.src] = target;
  }
}

MergePlan MergePlan::identity(std::size_t n_in) {
  std::vector<Index> all(n_in);
  for (std::size_t i = 0; i < n_in; ++i) all[i] = static_cast<Index>(i);
  return MergePlan(n_in, {}, std::move(all), {});
}

namespace {

void check_plan_input(const TokenMatrix& tokens, const MergePlan& plan) {
  if (tokens.n_tokens() != plan.n_in()) {
    throw Error(Errc::invalid_plan,
                "plan expects " + std::to_string(plan.n_in()) +
                    " tokens, got " + std::to_string(tokens.n_tokens()));
  }
}

TokenMatrix reduce(const TokenMatrix& tokens, const MergePlan& plan,
                   bool average) {
  check_plan_input(tokens, plan);
  const std::size_t c = tokens.n_channels();
  const auto dst = plan.dst_indices();
  const auto ind = plan.independent_indices();
  std::vector<float> out(plan.n_out() * c);

  if (average) {
    std::vector<double> acc(dst.size() * c, 0.0);
    std::vector<std::size_t> members(dst.size(), 1);
    for (std::size_t s = 0; s < dst.size(); ++s) {
      const auto src = tokens.row(dst[s]);
      std::copy(src.begin(), src.end(), acc.begin() + s * c);
    }
    for (const MergeEdge& e : plan.merged()) {
      const std::size_t s = plan.slot_of(e.src);
      const auto src = tokens.row(e.src);
      for (std::size_t j = 0; j < c; ++j) acc[s * c + j] += src[j];
      ++members[s];
    }
    for (std::size_t s = 0; s < dst.size(); ++s) {
      const double inv = 1.0 / static_cast<double>(members[s]);
      for (std::size_t j = 0; j < c; ++j) {
        out[s * c + j] = static_cast<float>(acc[s * c + j] * inv);
      }
    }
  } else {
    for (std::size_t s = 0; s < dst.size(); ++s) {
      const auto src = tokens.row(dst[s]);
      std::copy(src.begin(), src.end(), out.begin() + s * c);
    }
  }
  for (std::size_t s = 0; s < ind.size(); ++s) {
    const auto src = tokens.row(ind[s]);
    std::copy(src.begin(), src.end(), out.begin() + (dst.size() + s) * c);
  }
  return TokenMatrix(plan.n_out(), c, std::move(out));
}

}  // namespace

TokenMatrix apply_merge(const TokenMatrix& tokens, const MergePlan& plan) {
  return reduce(tokens, plan, /*average=*/true);
}

TokenMatrix apply_prune(const TokenMatrix& tokens, const MergePlan& plan) {
  return reduce(tokens, plan, /*average=*/false);
}

TokenMatrix apply_unmerge(const TokenMatrix& processed, const MergePlan& plan) {
  if (processed.n_tokens() != plan.n_out()) {
    throw Error(Errc::invalid_plan,
                "unmerge expects " + std::to_string(plan.n_out()) +
                    " processed tokens, got " +
                    std::to_string(processed.n_tokens()));
  }
  const std::size_t c = processed.n_channels();
  std::vector<float> out(plan.n_in() * c);
  for (std::size_t i = 0; i < plan.n_in(); ++i) {
    const auto src = processed.row(plan.slot_of(i));
    std::copy(src.begin(), src.end(), out.begin() + i * c);
  }
  return TokenMatrix(plan.n_in(), c, std::move(out));
}

}  // namespace tokmerge
