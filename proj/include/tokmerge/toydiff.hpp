// Copyright 2026 The tokmerge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tokmerge/core.hpp"
#include "tokmerge/rng.hpp"

namespace tokmerge {

/// Discrete DDPM noise schedule over timesteps 1..T.
class NoiseSchedule {
 public:
  // betas[0] is beta_1. Must be non-decreasing and inside (0, 1).
  explicit NoiseSchedule(std::vector<double> betas);

  static NoiseSchedule linear(std::size_t steps, double beta_start = 1e-4,
                              double beta_end = 2e-2);

  std::size_t steps() const noexcept { return betas_.size(); }
  double beta(std::size_t t) const { return betas_.at(t - 1); }
  double alpha(std::size_t t) const { return 1.0 - beta(t); }
  // alpha_bar(0) is 1.
  double alpha_bar(std::size_t t) const { return alpha_bar_.at(t); }

 private:
  std::vector<double> betas_;
  std::vector<double> alpha_bar_;
};

/// Closed-form q(x_t | x_0): sqrt(abar_t) x_0 + sqrt(1 - abar_t) eps. t = 0
/// returns x_0 unchanged.
TokenMatrix forward_noise(const TokenMatrix& x0, std::size_t t,
                          const NoiseSchedule& schedule, Rng& rng);

struct DenoiserConfig {
  std::size_t channels = 32;
  std::size_t heads = 4;
  std::size_t mlp_hidden = 128;
  std::size_t num_classes = 4;
  std::uint64_t weight_seed = 0x5eed;
};

using AttentionFn = std::function<TokenMatrix(const TokenMatrix&)>;

struct LayerContext {
  std::size_t layer;  // self-attention layer id, 0-based
  bool conditional;   // false for the unconditional CFG pass
};

// Sits between a self-attention layer and its input; must return a matrix
// with the input's shape. The default simply calls `attend`.
using LayerWrapper = std::function<TokenMatrix(
    const LayerContext&, const TokenMatrix&, const AttentionFn&)>;

/// Untrained two-block transformer noise predictor with seeded weights.
class ToyDenoiser {
 public:
  static constexpr std::size_t kBlocks = 2;

  explicit ToyDenoiser(const DenoiserConfig& config = {});

  const DenoiserConfig& config() const noexcept { return config_; }
  std::size_t channels() const noexcept { return config_.channels; }

  // Predicts eps for x_t. `label` empty selects the unconditional embedding.
  TokenMatrix forward(const TokenMatrix& x_t, std::size_t t,
                      std::optional<std::size_t> label,
                      const LayerWrapper& wrapper = {}) const;

  // The bare multi-head self-attention of block `layer`.
  TokenMatrix self_attention(std::size_t layer, const TokenMatrix& x) const;

 private:
  struct Block {
    std::vector<float> wq, wk, wv, wo;  // C x C
    std::vector<float> w1, b1;          // C x H, H
    std::vector<float> w2, b2;          // H x C, C
  };

  DenoiserConfig config_;
  std::vector<float> w_in_;       // C x C
  std::vector<float> class_emb_;  // (num_classes + 1) x C, last row = null
  std::vector<float> w_out_;      // C x C
  std::vector<Block> blocks_;
};

struct SamplerState {
  TokenMatrix x_t;
  std::size_t t;
  double guidance_weight;
  std::size_t label;
  std::optional<ImportanceMap> prev_guidance;
};

struct CfgPrediction {
  TokenMatrix eps_guided;
  ImportanceMap guidance;
  TokenMatrix eps_cond;
  TokenMatrix eps_uncond;
};

/// Classifier-free guidance: eps_uncond + w (eps_cond - eps_uncond).
TokenMatrix guided_noise(const TokenMatrix& eps_cond, const TokenMatrix& eps_uncond,
                         double w);

/// Runs both CFG passes and returns the guided noise plus the per-token guidance
/// magnitude tagged with state.t.
CfgPrediction cfg_predict(const SamplerState& state, const ToyDenoiser& model,
                          const LayerWrapper& wrapper = {});

enum class PlanMode { prune, merge };

struct ScheduledPlan {
  MergePlan plan;
  PlanMode mode;
  Strategy strategy;  // strategy actually used
  // Importance the plan was built from, at layer resolution.
  std::optional<ImportanceMap> importance;
  std::optional<std::string> diagnostic;
};

/// Grid selection with pruning for the first `prune_steps` steps, then the
/// configured strategy with merging. Importance strategies fall back to grid
/// selection (and note a diagnostic) when no previous guidance is cached.
ScheduledPlan scheduled_plan(const SamplerState& state, std::size_t step_index,
                             const TokenMatrix& layer_tokens,
                             const MergeConfig& config, Rng& rng);

/// Runs `attend` on the reduced token set and restores the input shape.
TokenMatrix wrap_attention(const TokenMatrix& tokens, const MergePlan& plan,
                           PlanMode mode, const AttentionFn& attend);

struct LayerEvent {
  std::size_t step_index;
  const SamplerState& state;
  const LayerContext& context;
  const TokenMatrix& tokens;
  const ScheduledPlan& plan;
};

struct StepEvent {
  std::size_t step_index;
  const SamplerState& state;
  const CfgPrediction& prediction;
};

struct SampleObserver {
  std::function<void(const LayerEvent&)> on_layer;
  std::function<void(const StepEvent&)> on_step;
};

struct SampleRequest {
  double guidance_weight = 7.5;
  std::size_t label = 0;
  Grid grid{8, 8};
};

/// DDPM ancestral sampling from x_T ~ N(0, I) with every self-attention
/// layer routed through the merge engine. Plans at (t, layer) use the stream
/// Rng(config.seed, Rng::plan_stream(t, layer)); `rng` supplies the
/// trajectory noise.
TokenMatrix sample(const ToyDenoiser& model, const NoiseSchedule& schedule,
                   const MergeConfig& config, const SampleRequest& request,
                   Rng& rng, const SampleObserver& observer = {});

}  // namespace tokmerge
