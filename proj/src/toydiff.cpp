// Copyright 2026 The tokmerge Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokmerge/toydiff.hpp"

#include <algorithm>
#include <cmath>

#include "tokmerge/importance.hpp"
#include "tokmerge/strategy.hpp"

namespace tokmerge {

// ---------------------------------------------------------------------------
// Noise schedule

NoiseSchedule::NoiseSchedule(std::vector<double> betas)
    : betas_(std::move(betas)) {
  if (betas_.empty()) throw Error(Errc::invalid_argument, "schedule needs T >= 1");
  alpha_bar_.reserve(betas_.size() + 1);
  alpha_bar_.push_back(1.0);
  double prev = 0.0;
  for (double b : betas_) {
    if (!(b > 0.0 && b < 1.0) || b < prev) {
      throw Error(Errc::invalid_argument,
                  "betas must be non-decreasing and inside (0, 1)");
    }
    prev = b;
    alpha_bar_.push_back(alpha_bar_.back() * (1.0 - b));
  }
}

NoiseSchedule NoiseSchedule::linear(std::size_t steps, double beta_start,
                                    double beta_end) {
  if (steps == 0) throw Error(Errc::invalid_argument, "schedule needs T >= 1");
  std::vector<double> betas(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    const double frac =
        steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
    betas[i] = beta_start + (beta_end - beta_start) * frac;
  }
  return NoiseSchedule(std::move(betas));
}

TokenMatrix forward_noise(const TokenMatrix& x0, std::size_t t,
                          const NoiseSchedule& schedule, Rng& rng) {
  if (t > schedule.steps()) {
    throw Error(Errc::out_of_range,
                "timestep " + std::to_string(t) + " outside [0, " +
                    std::to_string(schedule.steps()) + "]");
  }
  const double abar = schedule.alpha_bar(t);
  const double signal = std::sqrt(abar);
  const double noise = std::sqrt(1.0 - abar);
  const auto src = x0.data();
  std::vector<float> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    out[i] = static_cast<float>(signal * src[i] + noise * rng.normal());
  }
  return TokenMatrix(x0.n_tokens(), x0.n_channels(), std::move(out), x0.grid());
}

// ---------------------------------------------------------------------------
// Denoiser

namespace {

constexpr float kOutputGain = 0.5f;

std::vector<float> init_weights(std::size_t fan_in, std::size_t fan_out,
                                Rng& rng) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<float> w(fan_in * fan_out);
  for (float& v : w) v = static_cast<float>(rng.normal() * scale);
  return w;
}

// out[n x m] = a[n x k] * w[k x m]
std::vector<float> matmul(std::span<const float> a, std::size_t n, std::size_t k,
                          std::span<const float> w, std::size_t m) {
  std::vector<float> out(n * m, 0.0f);
  for (std::size_t i = 0; i < n; ++i) {
    float* o = out.data() + i * m;
    const float* ai = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const float s = ai[p];
      const float* wp = w.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += s * wp[j];
    }
  }
  return out;
}

std::vector<float> layer_norm(std::span<const float> x, std::size_t n,
                              std::size_t c) {
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < n; ++i) {
    const float* row = x.data() + i * c;
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += row[j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(c);
    const double inv = 1.0 / std::sqrt(var + 1e-5);
    for (std::size_t j = 0; j < c; ++j) {
      out[i * c + j] = static_cast<float>((row[j] - mean) * inv);
    }
  }
  return out;
}

float gelu(float x) {
  constexpr float k = 0.7978845608f;  // sqrt(2 / pi)
  return 0.5f * x * (1.0f + std::tanh(k * (x + 0.044715f * x * x * x)));
}

std::vector<float> timestep_embedding(std::size_t t, std::size_t c) {
  std::vector<float> emb(c, 0.0f);
  const std::size_t half = c / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double freq =
        std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    emb[i] = static_cast<float>(std::sin(static_cast<double>(t) * freq));
    emb[i + half] = static_cast<float>(std::cos(static_cast<double>(t) * freq));
  }
  return emb;
}

}  // namespace

ToyDenoiser::ToyDenoiser(const DenoiserConfig& config) : config_(config) {
  const std::size_t c = config_.channels;
  if (c == 0 || config_.heads == 0 || c % config_.heads != 0 ||
      config_.mlp_hidden == 0 || config_.num_classes == 0) {
    throw Error(Errc::invalid_argument,
                "denoiser needs channels divisible by heads and non-zero sizes");
  }
  Rng rng(config_.weight_seed, Rng::noise_stream(0));
  w_in_ = init_weights(c, c, rng);
  class_emb_ = init_weights(c, config_.num_classes + 1, rng);
  // Unconditional row: the model sees no label at all.
  std::fill(class_emb_.end() - static_cast<std::ptrdiff_t>(c), class_emb_.end(), 0.0f);
  for (std::size_t b = 0; b < kBlocks; ++b) {
    Block blk;
    blk.wq = init_weights(c, c, rng);
    blk.wk = init_weights(c, c, rng);
    blk.wv = init_weights(c, c, rng);
    blk.wo = init_weights(c, c, rng);
    blk.w1 = init_weights(c, config_.mlp_hidden, rng);
    blk.b1.assign(config_.mlp_hidden, 0.0f);
    blk.w2 = init_weights(config_.mlp_hidden, c, rng);
    blk.b2.assign(c, 0.0f);
    blocks_.push_back(std::move(blk));
  }
  w_out_ = init_weights(c, c, rng);
  // Halved so the untrained predictor's drift keeps 50-step samples in range.
  for (float& v : w_out_) v *= kOutputGain;
}

TokenMatrix ToyDenoiser::self_attention(std::size_t layer,
                                        const TokenMatrix& x) const {
  const Block& blk = blocks_.at(layer);
  const std::size_t n = x.n_tokens();
  const std::size_t c = config_.channels;
  if (x.n_channels() != c) {
    throw Error(Errc::shape_mismatch, "attention input has wrong channel count");
  }
  const std::size_t heads = config_.heads;
  const std::size_t dh = c / heads;
  const auto q = matmul(x.data(), n, c, blk.wq, c);
  const auto k = matmul(x.data(), n, c, blk.wk, c);
  const auto v = matmul(x.data(), n, c, blk.wv, c);
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));

  std::vector<float> ctx(n * c, 0.0f);
  std::vector<float> kt(dh * n);
  std::vector<float> scores(n);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t d = 0; d < dh; ++d) kt[d * n + j] = k[j * c + off + d];
    }
    for (std::size_t i = 0; i < n; ++i) {
      std::fill(scores.begin(), scores.end(), 0.0f);
      for (std::size_t d = 0; d < dh; ++d) {
        const float qd = q[i * c + off + d] * scale;
        const float* row = kt.data() + d * n;
        for (std::size_t j = 0; j < n; ++j) scores[j] += qd * row[j];
      }
      const float peak = *std::max_element(scores.begin(), scores.end());
      float total = 0.0f;
      for (float& s : scores) {
        s = std::exp(s - peak);
        total += s;
      }
      const float inv = 1.0f / total;
      float* out = ctx.data() + i * c + off;
      for (std::size_t j = 0; j < n; ++j) {
        const float p = scores[j] * inv;
        const float* vj = v.data() + j * c + off;
        for (std::size_t d = 0; d < dh; ++d) out[d] += p * vj[d];
      }
    }
  }
  return TokenMatrix(n, c, matmul(ctx, n, c, blk.wo, c), x.grid());
}

TokenMatrix ToyDenoiser::forward(const TokenMatrix& x_t, std::size_t t,
                                 std::optional<std::size_t> label,
                                 const LayerWrapper& wrapper) const {
  const std::size_t n = x_t.n_tokens();
  const std::size_t c = config_.channels;
  if (x_t.n_channels() != c) {
    throw Error(Errc::shape_mismatch,
                "denoiser expects " + std::to_string(c) + " channels");
  }
  if (label && *label >= config_.num_classes) {
    throw Error(Errc::out_of_range, "class label out of range");
  }
  const std::size_t label_row = label.value_or(config_.num_classes);

  std::vector<float> h = matmul(x_t.data(), n, c, w_in_, c);
  const auto temb = timestep_embedding(t, c);
  const float* cemb = class_emb_.data() + label_row * c;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) h[i * c + j] += temb[j] + cemb[j];
  }

  for (std::size_t b = 0; b < kBlocks; ++b) {
    const Block& blk = blocks_[b];
    TokenMatrix normed(n, c, layer_norm(h, n, c), x_t.grid());
    const AttentionFn attend = [this, b](const TokenMatrix& x) {
      return self_attention(b, x);
    };
    const TokenMatrix attn =
        wrapper ? wrapper(LayerContext{b, label.has_value()}, normed, attend)
                : attend(normed);
    if (attn.n_tokens() != n || attn.n_channels() != c) {
      throw Error(Errc::shape_mismatch, "attention wrapper changed the token shape");
    }
    const auto a = attn.data();
    for (std::size_t i = 0; i < h.size(); ++i) h[i] += a[i];

    const auto n2 = layer_norm(h, n, c);
    auto hidden = matmul(n2, n, c, blk.w1, config_.mlp_hidden);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < config_.mlp_hidden; ++j) {
        float& z = hidden[i * config_.mlp_hidden + j];
        z = gelu(z + blk.b1[j]);
      }
    }
    const auto mlp = matmul(hidden, n, config_.mlp_hidden, blk.w2, c);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < c; ++j) h[i * c + j] += mlp[i * c + j] + blk.b2[j];
    }
  }
  const auto out = layer_norm(h, n, c);
  return TokenMatrix(n, c, matmul(out, n, c, w_out_, c), x_t.grid());
}

// ---------------------------------------------------------------------------
// Guidance and scheduling

TokenMatrix guided_noise(const TokenMatrix& eps_cond, const TokenMatrix& eps_uncond,
                         double w) {
  if (eps_cond.n_tokens() != eps_uncond.n_tokens() ||
      eps_cond.n_channels() != eps_uncond.n_channels()) {
    throw Error(Errc::shape_mismatch,
                "conditional and unconditional predictions differ in shape");
  }
  const auto cond = eps_cond.data();
  const auto uncond = eps_uncond.data();
  std::vector<float> guided(cond.size());
  // (1 - w) u + w c is the same affine map as u + w (c - u) but lands on u
  // and c exactly at w = 0 and w = 1.
  for (std::size_t i = 0; i < guided.size(); ++i) {
    guided[i] = static_cast<float>((1.0 - w) * uncond[i] + w * cond[i]);
  }
  return TokenMatrix(eps_cond.n_tokens(), eps_cond.n_channels(), std::move(guided),
                     eps_cond.grid());
}

CfgPrediction cfg_predict(const SamplerState& state, const ToyDenoiser& model,
                          const LayerWrapper& wrapper) {
  TokenMatrix eps_cond = model.forward(state.x_t, state.t, state.label, wrapper);
  TokenMatrix eps_uncond = model.forward(state.x_t, state.t, std::nullopt, wrapper);
  TokenMatrix eps = guided_noise(eps_cond, eps_uncond, state.guidance_weight);
  ImportanceMap guidance = guidance_magnitude(
      eps_cond, eps_uncond, static_cast<std::int64_t>(state.t));
  return {std::move(eps), std::move(guidance), std::move(eps_cond),
          std::move(eps_uncond)};
}

namespace {

bool needs_importance(Strategy s) {
  return s == Strategy::importance_pool || s == Strategy::topk_dst;
}

ImportanceMap importance_for_layer(const ImportanceMap& guidance,
                                   const TokenMatrix& latent,
                                   const TokenMatrix& layer_tokens) {
  if (guidance.size() == layer_tokens.n_tokens()) return guidance;
  if (!latent.grid() || !layer_tokens.grid()) {
    throw Error(Errc::shape_mismatch,
                "guidance and layer resolutions differ and no grid is attached");
  }
  return resample_importance(guidance, *latent.grid(), *layer_tokens.grid());
}

}  // namespace

ScheduledPlan scheduled_plan(const SamplerState& state, std::size_t step_index,
                             const TokenMatrix& layer_tokens,
                             const MergeConfig& config, Rng& rng) {
  if (config.strategy == Strategy::none) {
    return {MergePlan::identity(layer_tokens.n_tokens()), PlanMode::merge,
            Strategy::none, std::nullopt, std::nullopt};
  }
  if (step_index < config.prune_steps) {
    return {plan_tome_grid(layer_tokens, config, rng), PlanMode::prune,
            Strategy::tome_random_grid, std::nullopt, std::nullopt};
  }
  if (config.strategy == Strategy::random_dst) {
    return {plan_random_dst(layer_tokens, config, rng), PlanMode::merge,
            Strategy::random_dst, std::nullopt, std::nullopt};
  }
  if (!needs_importance(config.strategy)) {
    return {plan_tome_grid(layer_tokens, config, rng), PlanMode::merge,
            Strategy::tome_random_grid, std::nullopt, std::nullopt};
  }
  if (!state.prev_guidance) {
    return {plan_tome_grid(layer_tokens, config, rng), PlanMode::merge,
            Strategy::tome_random_grid, std::nullopt,
            "no cached guidance at step " + std::to_string(step_index) +
                "; used grid selection"};
  }
  ImportanceMap importance =
      importance_for_layer(*state.prev_guidance, state.x_t, layer_tokens);
  MergePlan plan = config.strategy == Strategy::importance_pool
                       ? plan_importance_pool(layer_tokens, importance, config, rng)
                       : plan_topk_dst(layer_tokens, importance, config);
  return {std::move(plan), PlanMode::merge, config.strategy,
          std::move(importance), std::nullopt};
}

TokenMatrix wrap_attention(const TokenMatrix& tokens, const MergePlan& plan,
                           PlanMode mode, const AttentionFn& attend) {
  // A plan that merges nothing only permutes tokens, which attention is
  // equivariant to; skipping the permutation keeps the output bit-identical.
  if (plan.merges_nothing()) return attend(tokens);
  const TokenMatrix reduced =
      mode == PlanMode::prune ? apply_prune(tokens, plan) : apply_merge(tokens, plan);
  return apply_unmerge(attend(reduced), plan).with_grid(tokens.grid());
}

// ---------------------------------------------------------------------------
// Sampler

TokenMatrix sample(const ToyDenoiser& model, const NoiseSchedule& schedule,
                   const MergeConfig& config, const SampleRequest& request,
                   Rng& rng, const SampleObserver& observer) {
  config.validate();
  const std::size_t steps = schedule.steps();
  if (steps < 2) throw Error(Errc::invalid_argument, "sampling needs T >= 2");
  const std::size_t n = request.grid.size();
  const std::size_t c = model.channels();
  if (n == 0) throw Error(Errc::invalid_argument, "grid must be non-empty");

  std::vector<float> init(n * c);
  for (float& v : init) v = static_cast<float>(rng.normal());
  SamplerState state{TokenMatrix(n, c, std::move(init), request.grid), steps,
                     request.guidance_weight, request.label, std::nullopt};

  for (std::size_t step = 0; step < steps; ++step) {
    const std::size_t t = steps - step;
    state.t = t;
    const LayerWrapper wrapper = [&](const LayerContext& ctx,
                                     const TokenMatrix& tokens,
                                     const AttentionFn& attend) {
      Rng plan_rng(config.seed, Rng::plan_stream(t, ctx.layer));
      const ScheduledPlan sp = scheduled_plan(state, step, tokens, config, plan_rng);
      if (observer.on_layer) observer.on_layer(LayerEvent{step, state, ctx, tokens, sp});
      return wrap_attention(tokens, sp.plan, sp.mode, attend);
    };
    CfgPrediction pred = cfg_predict(state, model, wrapper);
    if (observer.on_step) observer.on_step(StepEvent{step, state, pred});

    const double beta = schedule.beta(t);
    const double abar = schedule.alpha_bar(t);
    const double eps_coef = beta / std::sqrt(1.0 - abar);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(schedule.alpha(t));
    const double sigma =
        t > 1 ? std::sqrt(beta * (1.0 - schedule.alpha_bar(t - 1)) / (1.0 - abar))
              : 0.0;
    const auto x = state.x_t.data();
    const auto eps = pred.eps_guided.data();
    std::vector<float> next(x.size());
    for (std::size_t i = 0; i < next.size(); ++i) {
      double mean = inv_sqrt_alpha * (x[i] - eps_coef * eps[i]);
      if (t > 1) mean += sigma * rng.normal();
      next[i] = static_cast<float>(mean);
    }
    state.x_t = TokenMatrix(n, c, std::move(next), request.grid);
    state.prev_guidance = std::move(pred.guidance);
  }
  return state.x_t;
}

}  // namespace tokmerge
