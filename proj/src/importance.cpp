// Copyright 2026 The tokmerge Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokmerge/importance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tokmerge {

ImportanceMap guidance_magnitude(const TokenMatrix& eps_cond,
                                 const TokenMatrix& eps_uncond,
                                 std::int64_t source_timestep) {
  if (eps_cond.n_tokens() != eps_uncond.n_tokens() ||
      eps_cond.n_channels() != eps_uncond.n_channels()) {
    throw Error(Errc::shape_mismatch,
                "conditional and unconditional predictions differ in shape");
  }
  const std::size_t c = eps_cond.n_channels();
  std::vector<float> scores(eps_cond.n_tokens());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto a = eps_cond.row(i);
    const auto b = eps_uncond.row(i);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      sum += std::abs(static_cast<double>(a[j]) - static_cast<double>(b[j]));
    }
    scores[i] = static_cast<float>(sum / static_cast<double>(c));
  }
  return ImportanceMap(std::move(scores), source_timestep);
}

ImportanceMap resample_importance(const ImportanceMap& map, Grid from, Grid to) {
  if (from.size() != map.size()) {
    throw Error(Errc::shape_mismatch, "source grid does not match map length");
  }
  if (from == to) return map;
  if (to.height == 0 || to.width == 0 || from.height % to.height != 0 ||
      from.width % to.width != 0) {
    throw Error(Errc::invalid_argument,
                "cannot pool " + std::to_string(from.height) + "x" +
                    std::to_string(from.width) + " onto " +
                    std::to_string(to.height) + "x" + std::to_string(to.width));
  }
  const std::size_t fh = from.height / to.height;
  const std::size_t fw = from.width / to.width;
  const double inv = 1.0 / static_cast<double>(fh * fw);
  const auto src = map.scores();
  std::vector<float> out(to.size());
  for (std::size_t y = 0; y < to.height; ++y) {
    for (std::size_t x = 0; x < to.width; ++x) {
      double sum = 0.0;
      for (std::size_t dy = 0; dy < fh; ++dy) {
        for (std::size_t dx = 0; dx < fw; ++dx) {
          sum += src[(y * fh + dy) * from.width + x * fw + dx];
        }
      }
      out[y * to.width + x] = static_cast<float>(sum * inv);
    }
  }
  return ImportanceMap(std::move(out), map.source_timestep());
}

std::vector<Index> rank_tokens(const ImportanceMap& map) {
  std::vector<Index> order(map.size());
  std::iota(order.begin(), order.end(), Index{0});
  const auto s = map.scores();
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return s[a] > s[b]; });
  return order;
}

}  // namespace tokmerge
