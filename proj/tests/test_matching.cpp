// Copyright 2026 The tokmerge Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "support.hpp"
#include "tokmerge/error.hpp"
#include "tokmerge/matching.hpp"

using namespace tokmerge;
using tokmerge::testing::random_tokens;
using tokmerge::testing::ref_cosine;

namespace {

std::vector<float> v(std::initializer_list<float> x) { return x; }

double dot_kernel(std::span<const float> a, std::span<const float> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += double(a[i]) * b[i];
  return s;
}

}  // namespace

TEST_CASE("cosine similarity examples") {
  const auto a = v({1, 0});
  CHECK(cosine_similarity(a, v({0.9f, 0.1f})) == doctest::Approx(0.99388).epsilon(1e-5));
  CHECK(cosine_similarity(a, v({0, 1})) == 0.0);
  const auto w = v({0.3f, -2.0f, 5.5f});
  CHECK(cosine_similarity(w, w) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cosine_similarity(w, v({-0.3f, 2.0f, -5.5f})) ==
        doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(cosine_similarity(v({0, 0}), a) == 0.0);
  CHECK(cosine_similarity(v({0, 0}), v({0, 0})) == 0.0);
  CHECK_THROWS_AS(cosine_similarity(a, w), Error);
}

TEST_CASE("bipartite match hand example") {
  TokenMatrix src(3, 2, {0.9f, 0.1f, 0.1f, 0.9f, -1.0f, 0.0f});
  TokenMatrix dst(2, 2, {1, 0, 0, 1});
  const auto m = bipartite_match(src, dst);
  CHECK(m.assignment == std::vector<Index>{0, 1, 1});
  CHECK(m.score[0] == doctest::Approx(0.99388).epsilon(1e-5));
  CHECK(m.score[1] == doctest::Approx(0.99388).epsilon(1e-5));
  CHECK(m.score[2] == 0.0);
}

TEST_CASE("bipartite match forced and twin cases") {
  std::mt19937_64 gen(7);
  const auto src = random_tokens(gen, 20, 6);
  const auto one = random_tokens(gen, 1, 6);
  const auto m = bipartite_match(src, one);
  for (auto a : m.assignment) CHECK(a == 0);

  // Rows are in general position, so each row's own twin is the unique max.
  const auto twin = bipartite_match(src, src);
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(twin.assignment[i] == i);
    CHECK(twin.score[i] == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(
      bipartite_match(src, std::span<const Index>{}, std::span<const Index>{}), Error);
}

TEST_CASE("ties go to the lowest dst position") {
  TokenMatrix src(1, 2, {1, 1});
  TokenMatrix dst(3, 2, {1, 0, 0, 1, 2, 2});
  const auto m = bipartite_match(src, dst);
  CHECK(m.assignment[0] == 2);
  TokenMatrix dup(3, 2, {0, 1, 3, 3, 3, 3});
  CHECK(bipartite_match(src, dup).assignment[0] == 1);
}

TEST_CASE("index form agrees with the matrix form") {
  std::mt19937_64 gen(8);
  const auto x = random_tokens(gen, 30, 5);
  std::vector<Index> src{1, 4, 7, 9, 29}, dst{0, 2, 3, 20};
  const auto by_index = bipartite_match(x, src, dst);
  auto gather = [&](const std::vector<Index>& ids) {
    std::vector<float> d;
    for (auto i : ids) d.insert(d.end(), x.row(i).begin(), x.row(i).end());
    return TokenMatrix(ids.size(), 5, d);
  };
  const auto by_matrix = bipartite_match(gather(src), gather(dst));
  CHECK(by_index.assignment == by_matrix.assignment);
  CHECK(by_index.score == by_matrix.score);
}

TEST_CASE("custom kernels are honored") {
  TokenMatrix src(1, 2, {1, 0});
  TokenMatrix dst(2, 2, {0.5f, 0, 3, 3});
  CHECK(bipartite_match(src, dst).assignment[0] == 0);
  CHECK(bipartite_match(src, dst, &dot_kernel).assignment[0] == 1);
}

TEST_CASE("property: brute-force oracle, permutation invariance, bounds") {
  std::mt19937_64 gen(9);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t s = 1 + gen() % 128, d = 1 + gen() % 128, c = 1 + gen() % 64;
    const auto src = random_tokens(gen, s, c);
    const auto dst = random_tokens(gen, d, c);
    const auto m = bipartite_match(src, dst);
    for (std::size_t i = 0; i < s; ++i) {
      std::size_t best = 0;
      long double best_score = -2;
      for (std::size_t j = 0; j < d; ++j) {
        const long double sc = ref_cosine(src.row(i), dst.row(j));
        if (sc > best_score) {
          best_score = sc;
          best = j;
        }
      }
      CHECK(m.assignment[i] == best);
      CHECK(std::abs(m.score[i] - static_cast<double>(best_score)) <= 1e-6);
      CHECK(m.score[i] >= -1.0);
      CHECK(m.score[i] <= 1.0);
    }

    std::vector<Index> perm(d);
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), gen);
    std::vector<float> pd;
    for (auto j : perm) pd.insert(pd.end(), dst.row(j).begin(), dst.row(j).end());
    const auto pm = bipartite_match(src, TokenMatrix(d, c, pd));
    for (std::size_t i = 0; i < s; ++i) {
      CHECK(perm[pm.assignment[i]] == m.assignment[i]);
      CHECK(pm.score[i] == m.score[i]);
    }
  }
}
