// Copyright 2026 The tokmerge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tokmerge/core.hpp"
#include "tokmerge/harness/fmap.hpp"
#include "tokmerge/rng.hpp"
#include "tokmerge/toydiff.hpp"

namespace tokmerge::harness {

struct HarnessOptions {
  std::vector<Strategy> strategies;
  std::vector<double> ratios;
  double dst_fraction = 0.25;
  double pool_factor = 0.4;
  std::size_t prune_steps = 6;
  std::size_t steps = 50;
  double cfg_scale = 7.5;
  std::size_t tokens = 64;  // must be s*s with s even
  std::size_t channels = 32;
  std::size_t seeds = 4;
  std::size_t conditions = 4;
  std::uint64_t base_seed = 0;
  std::size_t warmup_runs = 2;
  std::size_t timed_runs = 5;

  Grid grid() const;
  DenoiserConfig denoiser() const;
  MergeConfig merge_config(Strategy strategy, double ratio,
                           std::uint64_t seed) const;
};

// ---------------------------------------------------------------------------
// Diagnostics shared by compare and replay

/// Mean cosine similarity between each merged token and its dst; NaN when
/// the plan merges nothing.
double group_homogeneity(const TokenMatrix& tokens, const MergePlan& plan);

/// Control plan with the same dst/independent/merged sizes as `like`, but
/// every role and every assignment drawn uniformly at random.
MergePlan random_control_plan(const MergePlan& like, Rng& rng);

// Count of dst and independent indices outside the top-`pool_size` set.
std::size_t pool_violations(const MergePlan& plan, const ImportanceMap& importance,
                            std::size_t pool_size);

// ---------------------------------------------------------------------------
// bench

struct BenchRow {
  Strategy strategy;
  double ratio;
  std::string status;  // "ok" or "infeasible"
  std::uint64_t flops_per_step = 0;
  std::size_t attention_tokens = 0;
  double latency_ms_per_step = 0.0;
  std::uint64_t peak_bytes_estimate = 0;
  double mse_vs_baseline = 0.0;
};

inline constexpr const char* kBenchColumns =
    "strategy,ratio,status,attention_tokens,flops_per_step,"
    "latency_ms_per_step,peak_bytes_estimate,mse_vs_baseline";

std::vector<BenchRow> run_bench(const HarnessOptions& options);
void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows);

// ---------------------------------------------------------------------------
// compare

struct CompareRow {
  Strategy strategy;
  double ratio;
  std::size_t runs = 0;
  double mse_mean = 0.0;
  double mse_median = 0.0;
  double mse_p95 = 0.0;
  double homogeneity = 0.0;          // mean over runs of per-run mean
  double control_homogeneity = 0.0;  // same, for the random control
  std::size_t merge_layers = 0;      // merge-mode layer plans inspected
  std::size_t pool_violations = 0;
  std::size_t fallbacks = 0;
  std::vector<double> mse;  // per run, seed-major
};

inline constexpr const char* kCompareColumns =
    "strategy,ratio,runs,mse_mean,mse_median,mse_p95,homogeneity,"
    "control_homogeneity,merge_layers,pool_violations,fallbacks";

// Uses options.ratios.front(). Needs at least two strategies.
std::vector<CompareRow> run_compare(const HarnessOptions& options);
void write_compare_csv(std::ostream& out, const std::vector<CompareRow>& rows);

// ---------------------------------------------------------------------------
// capture / replay

/// Unmerged sampling run; one record per (step, self-attention layer) holding
/// the conditional pass's layer input and the guidance computed at that step.
std::vector<FmapRecord> capture_records(const HarnessOptions& options,
                                        std::uint64_t seed, std::size_t label);

struct ReplayRow {
  std::size_t record;
  std::uint32_t timestep;
  std::uint32_t layer;
  Strategy strategy;
  std::string status;  // "ok" or an error description
  std::string mode;    // "prune" | "merge"
  std::size_t n_in = 0;
  std::size_t n_out = 0;
  std::size_t expected_n_out = 0;
  bool count_ok = false;
  double homogeneity = 0.0;
  double control_homogeneity = 0.0;
  std::optional<MergePlan> plan;
};

inline constexpr const char* kReplayColumns =
    "record,timestep,layer,strategy,status,mode,n_in,n_out,expected_n_out,"
    "count_ok,homogeneity,control_homogeneity";

/// Applies each strategy to every record offline, mirroring the in-loop
/// scheduler: step index is the rank of the record's timestep (descending)
/// and importance comes from the same layer's record one step earlier.
std::vector<ReplayRow> run_replay(const std::vector<FmapRecord>& records,
                                  const HarnessOptions& options);
void write_replay_csv(std::ostream& out, const std::vector<ReplayRow>& rows);

}  // namespace tokmerge::harness
