// Copyright 2026 The tokmerge Authors
// SPDX-License-Identifier: Apache-2.0

// Test-side generators and reference implementations. Nothing here calls
// into the library's own planners or matchers.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <vector>

#include "tokmerge/core.hpp"

namespace tokmerge::testing {

inline TokenMatrix random_tokens(std::mt19937_64& gen, std::size_t n, std::size_t c,
                                 std::optional<Grid> grid = {}) {
  std::normal_distribution<float> dist(0.0f, 1.0f);
  std::vector<float> data(n * c);
  for (auto& v : data) v = dist(gen);
  return TokenMatrix(n, c, std::move(data), grid);
}

inline ImportanceMap random_importance(std::mt19937_64& gen, std::size_t n) {
  std::uniform_real_distribution<float> dist(0.0f, 1.0f);
  std::vector<float> s(n);
  for (auto& v : s) v = dist(gen);
  return ImportanceMap(std::move(s));
}

// Random partition with at least one dst; every merged token picks a random dst.
inline MergePlan random_plan(std::mt19937_64& gen, std::size_t n) {
  std::vector<Index> perm(n);
  std::iota(perm.begin(), perm.end(), Index{0});
  std::shuffle(perm.begin(), perm.end(), gen);
  const std::size_t d = 1 + gen() % n;
  const std::size_t i = gen() % (n - d + 1);
  std::vector<Index> dst(perm.begin(), perm.begin() + d);
  std::vector<Index> ind(perm.begin() + d, perm.begin() + d + i);
  std::vector<MergeEdge> merged;
  for (std::size_t j = d + i; j < n; ++j) merged.push_back({perm[j], dst[gen() % d]});
  return MergePlan(n, dst, ind, merged);
}

// Exact floor(n * num / den) on integers.
inline std::size_t floor_ratio(std::size_t n, std::size_t num, std::size_t den) {
  return n * num / den;
}

// Reference cosine in long double, written independently of the library.
inline long double ref_cosine(std::span<const float> a, std::span<const float> b) {
  long double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<long double>(a[i]) * b[i];
    aa += static_cast<long double>(a[i]) * a[i];
    bb += static_cast<long double>(b[i]) * b[i];
  }
  if (aa == 0 || bb == 0) return 0;
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

// True when dst, independent and merged-src sets partition {0..n-1} and every
// merge target is a dst.
inline bool is_partition(const MergePlan& plan) {
  std::vector<int> seen(plan.n_in(), 0);
  std::set<Index> dst(plan.dst_indices().begin(), plan.dst_indices().end());
  for (auto i : plan.dst_indices()) ++seen[i];
  for (auto i : plan.independent_indices()) ++seen[i];
  for (const auto& e : plan.merged()) {
    ++seen[e.src];
    if (!dst.count(e.dst)) return false;
  }
  return std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; });
}

}  // namespace tokmerge::testing
