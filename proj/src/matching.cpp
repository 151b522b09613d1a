// Copyright 2026 The tokmerge Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokmerge/matching.hpp"

#include <algorithm>
#include <cmath>

namespace tokmerge {

namespace {

double dot(std::span<const float> a, std::span<const float> b) {
  double sum = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    sum += static_cast<double>(a[j]) * static_cast<double>(b[j]);
  }
  return sum;
}

// Shared by the pairwise kernel and the cached-norm path so both round
// identically.
double cosine_from(double ab, double norm_a, double norm_b) {
  if (norm_a == 0.0 || norm_b == 0.0) return 0.0;
  return std::clamp(ab / (norm_a * norm_b), -1.0, 1.0);
}

MatchResult match_rows(const TokenMatrix& src_m, std::span<const Index> src,
                       const TokenMatrix& dst_m, std::span<const Index> dst,
                       SimilarityKernel kernel) {
  if (dst.empty()) throw Error(Errc::invalid_argument, "dst set is empty");
  if (src_m.n_channels() != dst_m.n_channels()) {
    throw Error(Errc::shape_mismatch, "src and dst differ in channel count");
  }
  MatchResult out;
  out.assignment.resize(src.size());
  out.score.resize(src.size());

  if (kernel == &cosine_similarity) {
    std::vector<double> dst_norm(dst.size());
    for (std::size_t d = 0; d < dst.size(); ++d) {
      const auto row = dst_m.row(dst[d]);
      dst_norm[d] = std::sqrt(dot(row, row));
    }
    for (std::size_t s = 0; s < src.size(); ++s) {
      const auto a = src_m.row(src[s]);
      const double na = std::sqrt(dot(a, a));
      Index best = 0;
      double best_score = cosine_from(dot(a, dst_m.row(dst[0])), na, dst_norm[0]);
      for (std::size_t d = 1; d < dst.size(); ++d) {
        const double v = cosine_from(dot(a, dst_m.row(dst[d])), na, dst_norm[d]);
        if (v > best_score) {
          best_score = v;
          best = static_cast<Index>(d);
        }
      }
      out.assignment[s] = best;
      out.score[s] = best_score;
    }
    return out;
  }

  for (std::size_t s = 0; s < src.size(); ++s) {
    const auto a = src_m.row(src[s]);
    Index best = 0;
    double best_score = kernel(a, dst_m.row(dst[0]));
    for (std::size_t d = 1; d < dst.size(); ++d) {
      const double v = kernel(a, dst_m.row(dst[d]));
      if (v > best_score) {
        best_score = v;
        best = static_cast<Index>(d);
      }
    }
    out.assignment[s] = best;
    out.score[s] = best_score;
  }
  return out;
}

std::vector<Index> all_rows(std::size_t n) {
  std::vector<Index> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<Index>(i);
  return idx;
}

}  // namespace

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw Error(Errc::shape_mismatch, "cosine operands differ in length");
  }
  return cosine_from(dot(a, b), std::sqrt(dot(a, a)), std::sqrt(dot(b, b)));
}

MatchResult bipartite_match(const TokenMatrix& src, const TokenMatrix& dst,
                            SimilarityKernel kernel) {
  const auto s = all_rows(src.n_tokens());
  const auto d = all_rows(dst.n_tokens());
  return match_rows(src, s, dst, d, kernel);
}

MatchResult bipartite_match(const TokenMatrix& tokens,
                            std::span<const Index> src,
                            std::span<const Index> dst,
                            SimilarityKernel kernel) {
  return match_rows(tokens, src, tokens, dst, kernel);
}

}  // namespace tokmerge
