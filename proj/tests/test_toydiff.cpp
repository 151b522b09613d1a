// Copyright 2026 The tokmerge Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include "doctest.h"
#include "support.hpp"
#include "tokmerge/error.hpp"
#include "tokmerge/toydiff.hpp"

using namespace tokmerge;
using tokmerge::testing::random_tokens;

namespace {

MergeConfig config(Strategy s, double r, std::size_t prune_steps = 6) {
  MergeConfig c;
  c.strategy = s;
  c.ratio = r;
  c.prune_steps = prune_steps;
  return c;
}

DenoiserConfig small_model(std::size_t channels = 16) {
  DenoiserConfig d;
  d.channels = channels;
  d.heads = 4;
  d.mlp_hidden = 2 * channels;
  return d;
}

SamplerState state_for(const TokenMatrix& x, std::size_t t, double w) {
  return SamplerState{x, t, w, 1, std::nullopt};
}

}  // namespace

TEST_CASE("linear schedule invariants") {
  const auto s = NoiseSchedule::linear(50);
  CHECK(s.steps() == 50);
  CHECK(s.beta(1) == doctest::Approx(1e-4));
  CHECK(s.beta(50) == doctest::Approx(2e-2));
  CHECK(s.alpha_bar(0) == 1.0);
  for (std::size_t t = 1; t <= 50; ++t) {
    CHECK(s.beta(t) > 0.0);
    CHECK(s.beta(t) < 1.0);
    if (t > 1) CHECK(s.beta(t) >= s.beta(t - 1));
    CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
    CHECK(s.alpha_bar(t) > 0.0);
  }
  CHECK_THROWS_AS(NoiseSchedule({0.1, 0.05}), Error);
  CHECK_THROWS_AS(NoiseSchedule({1.0}), Error);
  CHECK_THROWS_AS(NoiseSchedule({}), Error);
}

TEST_CASE("forward_noise: zero-noise limit, determinism, range") {
  std::mt19937_64 gen(20);
  const auto x0 = random_tokens(gen, 16, 4);
  const auto s = NoiseSchedule::linear(50);
  Rng rng(0);
  CHECK(forward_noise(x0, 0, s, rng) == x0);
  Rng a(9), b(9);
  CHECK(forward_noise(x0, 30, s, a) == forward_noise(x0, 30, s, b));
  CHECK_THROWS_AS(forward_noise(x0, 51, s, rng), Error);
}

TEST_CASE("forward_noise variance matches 1 - alpha_bar") {
  const auto s = NoiseSchedule::linear(50);
  const TokenMatrix x0 = TokenMatrix::zeros(1, 1);
  constexpr int kSeeds = 10000;
  for (std::size_t t : {5u, 25u, 50u}) {
    double sum_sq = 0;
    for (int seed = 0; seed < kSeeds; ++seed) {
      Rng rng(seed);
      const double v = forward_noise(x0, t, s, rng).at(0, 0);
      sum_sq += v * v;
    }
    // Known-mean estimator: E[x^2] = var, Var[x^2] = 2 var^2.
    const double var = 1.0 - s.alpha_bar(t);
    const double est = sum_sq / kSeeds;
    const double sigma = var * std::sqrt(2.0 / kSeeds);
    CAPTURE(t);
    CHECK(std::abs(est - var) <= 3 * sigma);
  }
}

TEST_CASE("guided_noise arithmetic") {
  TokenMatrix u(2, 2, {0.1f, 0.2f, 0.3f, -0.4f});
  TokenMatrix c(2, 2, {0.5f, 0.0f, 0.3f, 0.6f});
  const auto g = guided_noise(c, u, 7.5);
  CHECK(g.at(0, 0) == doctest::Approx(3.1).epsilon(1e-6));
  CHECK(g.at(0, 1) == doctest::Approx(-1.3).epsilon(1e-6));
  CHECK(g.at(1, 0) == doctest::Approx(0.3).epsilon(1e-6));
  CHECK(g.at(1, 1) == doctest::Approx(7.1).epsilon(1e-6));
  CHECK(guided_noise(c, u, 0.0) == u);
  CHECK(guided_noise(c, u, 1.0) == c);
  CHECK_THROWS_AS(guided_noise(c, TokenMatrix(1, 2, {0, 0}), 1.0), Error);
}

TEST_CASE("cfg_predict identities on the model") {
  const ToyDenoiser model(small_model());
  std::mt19937_64 gen(21);
  const auto x = random_tokens(gen, 16, 16, Grid{4, 4});
  const auto p0 = cfg_predict(state_for(x, 20, 0.0), model);
  const auto p1 = cfg_predict(state_for(x, 20, 1.0), model);
  const auto p2 = cfg_predict(state_for(x, 20, 2.0), model);
  CHECK(p0.eps_guided == p0.eps_uncond);
  CHECK(p1.eps_guided == p1.eps_cond);
  for (std::size_t i = 0; i < 16; ++i) {
    for (std::size_t ch = 0; ch < 16; ++ch) {
      const double lhs = p2.eps_guided.at(i, ch);
      const double rhs = 2.0 * p1.eps_guided.at(i, ch) - p0.eps_guided.at(i, ch);
      CHECK(std::abs(lhs - rhs) <= 1e-5 * std::max(1.0, std::abs(rhs)));
    }
  }
  CHECK(p0.guidance.source_timestep() == 20);
  CHECK(p0.guidance.size() == 16);
}

TEST_CASE("denoiser is deterministic and shape-preserving") {
  const ToyDenoiser a(small_model()), b(small_model());
  std::mt19937_64 gen(22);
  const auto x = random_tokens(gen, 36, 16, Grid{6, 6});
  const auto ya = a.forward(x, 7, 2);
  CHECK(ya == b.forward(x, 7, 2));
  CHECK(ya.n_tokens() == 36);
  CHECK(ya.n_channels() == 16);
  CHECK_FALSE(ya == a.forward(x, 7, std::nullopt));
  CHECK_THROWS_AS(a.forward(x, 7, 99), Error);
  CHECK_THROWS_AS(a.forward(random_tokens(gen, 4, 8), 7, 0), Error);
}

TEST_CASE("scheduled_plan follows the prune-then-merge schedule") {
  std::mt19937_64 gen(23);
  const auto x = random_tokens(gen, 64, 8, Grid{8, 8});
  auto st = state_for(x, 50, 7.5);
  st.prev_guidance = ImportanceMap(std::vector<float>(64, 1.0f), 51);
  const auto cfg = config(Strategy::importance_pool, 0.5);
  for (std::size_t step = 0; step < 50; ++step) {
    Rng rng(step);
    const auto sp = scheduled_plan(st, step, x, cfg, rng);
    CAPTURE(step);
    if (step < 6) {
      CHECK(sp.mode == PlanMode::prune);
      CHECK(sp.strategy == Strategy::tome_random_grid);
    } else {
      CHECK(sp.mode == PlanMode::merge);
      CHECK(sp.strategy == Strategy::importance_pool);
      CHECK(sp.importance.has_value());
    }
    CHECK(sp.plan.n_out() == 32);
  }
}

TEST_CASE("scheduled_plan cold start and disabled engine") {
  std::mt19937_64 gen(24);
  const auto x = random_tokens(gen, 64, 8, Grid{8, 8});
  auto st = state_for(x, 50, 7.5);
  const auto cfg = config(Strategy::importance_pool, 0.5, 0);
  Rng r0(0);
  const auto cold = scheduled_plan(st, 0, x, cfg, r0);
  CHECK(cold.mode == PlanMode::merge);
  CHECK(cold.strategy == Strategy::tome_random_grid);
  CHECK(cold.diagnostic.has_value());

  st.prev_guidance = ImportanceMap(std::vector<float>(64, 1.0f), 51);
  Rng r1(1);
  const auto warm = scheduled_plan(st, 1, x, cfg, r1);
  CHECK(warm.strategy == Strategy::importance_pool);
  CHECK_FALSE(warm.diagnostic.has_value());

  for (std::size_t step : {0u, 3u, 40u}) {
    Rng r(step);
    const auto off = scheduled_plan(st, step, x, config(Strategy::none, 0.5), r);
    CHECK(off.plan.merges_nothing());
    CHECK(off.plan.n_out() == 64);
  }
}

TEST_CASE("scheduled_plan pools latent guidance to a coarser layer grid") {
  std::mt19937_64 gen(25);
  const auto latent = random_tokens(gen, 64, 8, Grid{8, 8});
  const auto layer = random_tokens(gen, 16, 8, Grid{4, 4});
  auto st = state_for(latent, 10, 7.5);
  std::vector<float> g(64);
  for (std::size_t i = 0; i < 64; ++i) g[i] = static_cast<float>(i);
  st.prev_guidance = ImportanceMap(g, 11);
  Rng rng(0);
  const auto sp = scheduled_plan(st, 10, layer, config(Strategy::topk_dst, 0.5), rng);
  REQUIRE(sp.importance.has_value());
  CHECK(sp.importance->size() == 16);
  // Window (0,0) covers latent 0, 1, 8, 9.
  CHECK((*sp.importance)[0] == 4.5f);
}

TEST_CASE("wrap_attention runs attention on n_out tokens") {
  std::mt19937_64 gen(26);
  const auto x = random_tokens(gen, 1024, 4, Grid{32, 32});
  Rng rng(1);
  MergeConfig cfg = config(Strategy::tome_random_grid, 0.5);
  const auto sp = scheduled_plan(state_for(x, 10, 7.5), 20, x, cfg, rng);
  std::size_t inner = 0;
  const auto y = wrap_attention(x, sp.plan, sp.mode, [&](const TokenMatrix& t) {
    inner = t.n_tokens();
    return t;
  });
  CHECK(inner == 512);
  CHECK(y.n_tokens() == 1024);
  CHECK(y.grid() == x.grid());
}

TEST_CASE("sample at r = 0 is bit-identical to the disabled engine") {
  const ToyDenoiser model(small_model());
  const auto sched = NoiseSchedule::linear(12);
  SampleRequest req;
  req.grid = {4, 4};
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng a(seed), b(seed), c(seed);
    const auto off = sample(model, sched, config(Strategy::none, 0.5), req, a);
    const auto zero_pool =
        sample(model, sched, config(Strategy::importance_pool, 0.0), req, b);
    const auto zero_grid =
        sample(model, sched, config(Strategy::tome_random_grid, 0.0), req, c);
    CHECK(off == zero_pool);
    CHECK(off == zero_grid);
  }
}

TEST_CASE("sample at N = 1024 attends over 512 tokens in every layer") {
  const ToyDenoiser model(small_model(8));
  const auto sched = NoiseSchedule::linear(3);
  SampleRequest req;
  req.grid = {32, 32};
  std::size_t layers = 0;
  SampleObserver obs;
  obs.on_layer = [&](const LayerEvent& e) {
    ++layers;
    CHECK(e.plan.plan.n_out() == 512);
    CHECK(e.tokens.n_tokens() == 1024);
  };
  Rng rng(0);
  const auto out = sample(model, sched, config(Strategy::importance_pool, 0.5, 1), req, rng,
                          obs);
  CHECK(layers == 3 * 2 * ToyDenoiser::kBlocks);
  CHECK(out.n_tokens() == 1024);
}

TEST_CASE("sample outputs are finite, bounded and strategy-dependent") {
  const ToyDenoiser model;
  const auto sched = NoiseSchedule::linear(50);
  SampleRequest req;
  Rng a(5), b(5), c(5);
  const auto pool = sample(model, sched, config(Strategy::importance_pool, 0.5), req, a);
  const auto grid = sample(model, sched, config(Strategy::tome_random_grid, 0.5), req, b);
  CHECK_FALSE(pool == grid);
  for (const auto* out : {&pool, &grid}) {
    for (float v : out->data()) {
      CHECK(std::isfinite(v));
      CHECK(std::abs(v) <= 10.0f);
    }
  }
  CHECK(sample(model, sched, config(Strategy::importance_pool, 0.5), req, c) == pool);
}

TEST_CASE("guidance used at each step comes from the step before") {
  const ToyDenoiser model(small_model());
  const auto sched = NoiseSchedule::linear(10);
  SampleRequest req;
  req.grid = {4, 4};
  std::size_t checked = 0;
  std::optional<ImportanceMap> last;
  SampleObserver obs;
  obs.on_layer = [&](const LayerEvent& e) {
    if (e.step_index == 0) {
      CHECK_FALSE(e.state.prev_guidance.has_value());
      return;
    }
    REQUIRE(e.state.prev_guidance.has_value());
    CHECK(e.state.prev_guidance->source_timestep() ==
          static_cast<std::int64_t>(e.state.t + 1));
    CHECK(*e.state.prev_guidance == *last);
    if (e.plan.mode == PlanMode::merge) {
      CHECK(e.plan.strategy == Strategy::importance_pool);
      ++checked;
    }
  };
  obs.on_step = [&](const StepEvent& e) {
    CHECK(e.prediction.guidance.source_timestep() == static_cast<std::int64_t>(e.state.t));
    last = e.prediction.guidance;
  };
  Rng rng(3);
  sample(model, sched, config(Strategy::importance_pool, 0.5, 2), req, rng, obs);
  CHECK(checked == 8 * 2 * ToyDenoiser::kBlocks);
}

TEST_CASE("sample validates its inputs") {
  const ToyDenoiser model(small_model());
  SampleRequest req;
  req.grid = {4, 4};
  Rng rng(0);
  CHECK_THROWS_AS(sample(model, NoiseSchedule::linear(1), config(Strategy::none, 0.5), req,
                         rng),
                  Error);
  CHECK_THROWS_AS(sample(model, NoiseSchedule::linear(5),
                         config(Strategy::importance_pool, 1.5), req, rng),
                  Error);
}
