// Copyright 2026 The tokmerge Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokmerge/harness/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>

#include "tokmerge/harness/flop_model.hpp"
#include "tokmerge/importance.hpp"
#include "tokmerge/matching.hpp"
#include "tokmerge/strategy.hpp"

namespace tokmerge::harness {

namespace {

constexpr std::uint64_t kControlStreamTag = 0x00c0'ffee'0000'0000ULL;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::optional<std::size_t> even_square_side(std::size_t n) {
  auto s = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
  if (s * s != n || s % 2 != 0 || s == 0) return std::nullopt;
  return s;
}

double mean_squared_difference(const TokenMatrix& a, const TokenMatrix& b) {
  const auto x = a.data();
  const auto y = b.data();
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
    sum += d * d;
  }
  return sum / static_cast<double>(x.size());
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// Nearest-rank percentile.
double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return kNaN;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::size_t attention_tokens(const MergeConfig& cfg, std::size_t n) {
  if (cfg.strategy == Strategy::none) return n;
  return counts_for(n, cfg).n_out;
}

Rng control_rng(std::uint64_t seed, std::uint64_t timestep, std::uint64_t layer) {
  return Rng(seed, Rng::plan_stream(timestep, layer) ^ kControlStreamTag);
}

TokenMatrix run_sample(const ToyDenoiser& model, const NoiseSchedule& schedule,
                       const MergeConfig& cfg, const HarnessOptions& options,
                       std::size_t label, const SampleObserver& observer = {}) {
  Rng rng(cfg.seed, Rng::noise_stream(1));
  SampleRequest request{options.cfg_scale, label, options.grid()};
  return sample(model, schedule, cfg, request, rng, observer);
}

// Rough live-float count at the widest point of one forward pass, in bytes.
std::uint64_t peak_bytes(const HarnessOptions& o, std::size_t n_attn) {
  const std::uint64_t c = o.channels;
  const std::uint64_t h = o.denoiser().mlp_hidden;
  const std::uint64_t n = o.tokens;
  const std::uint64_t weights =
      c * c * (2 + 4 * ToyDenoiser::kBlocks) + 2 * c * h * ToyDenoiser::kBlocks;
  const std::uint64_t activations = 3 * n * c + 5 * n_attn * c + n_attn + n * h;
  return 4 * (weights + activations);
}

}  // namespace

Grid HarnessOptions::grid() const {
  const auto side = even_square_side(tokens);
  if (!side) {
    throw Error(Errc::invalid_argument,
                "--tokens must be a square of an even number (got " +
                    std::to_string(tokens) + ")");
  }
  return {*side, *side};
}

DenoiserConfig HarnessOptions::denoiser() const {
  DenoiserConfig d;
  d.channels = channels;
  d.heads = channels % 4 == 0 ? 4 : 1;
  d.mlp_hidden = 4 * channels;
  d.num_classes = std::max<std::size_t>(conditions, 1);
  return d;
}

MergeConfig HarnessOptions::merge_config(Strategy strategy, double ratio,
                                         std::uint64_t seed) const {
  MergeConfig cfg;
  cfg.strategy = strategy;
  cfg.ratio = ratio;
  cfg.dst_fraction = dst_fraction;
  cfg.pool_factor = pool_factor;
  cfg.prune_steps = prune_steps;
  cfg.seed = seed;
  return cfg;
}

// ---------------------------------------------------------------------------

double group_homogeneity(const TokenMatrix& tokens, const MergePlan& plan) {
  if (plan.merges_nothing()) return kNaN;
  double sum = 0.0;
  for (const MergeEdge& e : plan.merged()) {
    sum += cosine_similarity(tokens.row(e.src), tokens.row(e.dst));
  }
  return sum / static_cast<double>(plan.merged().size());
}

MergePlan random_control_plan(const MergePlan& like, Rng& rng) {
  const std::size_t n = like.n_in();
  const std::size_t d = like.dst_indices().size();
  const std::size_t i = like.independent_indices().size();
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  for (std::size_t k = n; k > 1; --k) {
    std::swap(order[k - 1], order[rng.uniform_below(k)]);
  }
  std::vector<Index> dst(order.begin(), order.begin() + d);
  std::vector<Index> ind(order.begin() + d, order.begin() + d + i);
  std::vector<MergeEdge> merged;
  if (d > 0) {
    for (std::size_t k = d + i; k < n; ++k) {
      merged.push_back({order[k], dst[rng.uniform_below(d)]});
    }
  } else {
    ind.assign(order.begin() + d, order.end());
  }
  return MergePlan(n, std::move(dst), std::move(ind), std::move(merged));
}

std::size_t pool_violations(const MergePlan& plan, const ImportanceMap& importance,
                            std::size_t pool_size) {
  const auto pool = importance_pool(importance, pool_size);
  std::vector<bool> in_pool(importance.size(), false);
  for (Index p : pool) in_pool[p] = true;
  std::size_t bad = 0;
  for (Index d : plan.dst_indices()) bad += in_pool[d] ? 0 : 1;
  for (Index d : plan.independent_indices()) bad += in_pool[d] ? 0 : 1;
  return bad;
}

// ---------------------------------------------------------------------------
// bench

std::vector<BenchRow> run_bench(const HarnessOptions& options) {
  const Grid grid = options.grid();
  const std::size_t n = grid.size();
  const ToyDenoiser model(options.denoiser());
  const NoiseSchedule schedule = NoiseSchedule::linear(options.steps);
  const FlopModel flops{options.channels, model.config().mlp_hidden,
                        ToyDenoiser::kBlocks};

  std::map<std::uint64_t, TokenMatrix> baselines;
  auto baseline = [&](std::uint64_t seed, std::size_t label) -> const TokenMatrix& {
    auto it = baselines.find(seed);
    if (it == baselines.end()) {
      const MergeConfig none = options.merge_config(Strategy::none, 0.0, seed);
      it = baselines.emplace(seed, run_sample(model, schedule, none, options, label)).first;
    }
    return it->second;
  };

  std::vector<BenchRow> rows;
  for (Strategy strategy : options.strategies) {
    for (double ratio : options.ratios) {
      BenchRow row;
      row.strategy = strategy;
      row.ratio = ratio;
      row.status = "ok";
      MergeConfig cfg = options.merge_config(strategy, ratio, options.base_seed);
      try {
        cfg.validate();
        row.attention_tokens = attention_tokens(cfg, n);
      } catch (const Error&) {
        row.status = "infeasible";
        rows.push_back(row);
        continue;
      }
      row.flops_per_step = flops.step(n, row.attention_tokens);
      row.peak_bytes_estimate = peak_bytes(options, row.attention_tokens);

      std::vector<double> mse;
      for (std::size_t s = 0; s < options.seeds; ++s) {
        const std::uint64_t seed = options.base_seed + s;
        const std::size_t label = s % model.config().num_classes;
        cfg.seed = seed;
        const TokenMatrix out = run_sample(model, schedule, cfg, options, label);
        mse.push_back(mean_squared_difference(out, baseline(seed, label)));
      }
      row.mse_vs_baseline = mse.empty() ? 0.0 : mean_of(mse);

      cfg.seed = options.base_seed;
      std::vector<double> times;
      for (std::size_t run = 0; run < options.warmup_runs + options.timed_runs; ++run) {
        const auto start = std::chrono::steady_clock::now();
        (void)run_sample(model, schedule, cfg, options, 0);
        const std::chrono::duration<double, std::milli> dt =
            std::chrono::steady_clock::now() - start;
        if (run >= options.warmup_runs) times.push_back(dt.count());
      }
      row.latency_ms_per_step =
          times.empty() ? 0.0 : median_of(times) / static_cast<double>(options.steps);
      rows.push_back(row);
    }
  }
  return rows;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
  out << kBenchColumns << '\n';
  for (const BenchRow& r : rows) {
    out << to_string(r.strategy) << ',' << num(r.ratio) << ',' << r.status << ',';
    if (r.status == "ok") {
      out << r.attention_tokens << ',' << r.flops_per_step << ','
          << num(r.latency_ms_per_step) << ',' << r.peak_bytes_estimate << ','
          << num(r.mse_vs_baseline);
    } else {
      out << ",,,,";
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// compare

std::vector<CompareRow> run_compare(const HarnessOptions& options) {
  if (options.strategies.size() < 2) {
    throw Error(Errc::invalid_argument, "compare needs at least two strategies");
  }
  if (options.ratios.empty()) throw Error(Errc::invalid_argument, "no ratio given");
  const double ratio = options.ratios.front();
  const Grid grid = options.grid();
  const ToyDenoiser model(options.denoiser());
  const NoiseSchedule schedule = NoiseSchedule::linear(options.steps);
  for (Strategy s : options.strategies) {
    MergeConfig cfg = options.merge_config(s, ratio, options.base_seed);
    cfg.validate();
    if (s != Strategy::none) (void)counts_for(grid.size(), cfg);
  }

  struct Run {
    std::uint64_t seed;
    std::size_t label;
  };
  std::vector<Run> runs;
  for (std::size_t s = 0; s < options.seeds; ++s) {
    for (std::size_t y = 0; y < options.conditions; ++y) {
      runs.push_back({options.base_seed + s, y});
    }
  }

  std::vector<TokenMatrix> baselines;
  baselines.reserve(runs.size());
  for (const Run& run : runs) {
    const MergeConfig none = options.merge_config(Strategy::none, 0.0, run.seed);
    baselines.push_back(run_sample(model, schedule, none, options, run.label));
  }

  std::vector<CompareRow> rows;
  for (Strategy strategy : options.strategies) {
    CompareRow row;
    row.strategy = strategy;
    row.ratio = ratio;
    std::vector<double> run_homogeneity;
    std::vector<double> run_control;
    for (std::size_t k = 0; k < runs.size(); ++k) {
      const MergeConfig cfg = options.merge_config(strategy, ratio, runs[k].seed);
      double h_sum = 0.0;
      double c_sum = 0.0;
      std::size_t plans = 0;
      SampleObserver observer;
      observer.on_layer = [&](const LayerEvent& ev) {
        const ScheduledPlan& sp = ev.plan;
        if (sp.diagnostic) ++row.fallbacks;
        if (sp.strategy == Strategy::importance_pool && sp.importance) {
          const auto pool = counts_for(ev.tokens.n_tokens(), cfg).pool;
          row.pool_violations += pool_violations(sp.plan, *sp.importance, pool);
        }
        if (sp.mode != PlanMode::merge || sp.plan.merges_nothing()) return;
        Rng crng = control_rng(cfg.seed, ev.state.t, ev.context.layer);
        h_sum += group_homogeneity(ev.tokens, sp.plan);
        c_sum += group_homogeneity(ev.tokens, random_control_plan(sp.plan, crng));
        ++plans;
      };
      const TokenMatrix out =
          run_sample(model, schedule, cfg, options, runs[k].label, observer);
      row.mse.push_back(mean_squared_difference(out, baselines[k]));
      row.merge_layers += plans;
      if (plans > 0) {
        run_homogeneity.push_back(h_sum / static_cast<double>(plans));
        run_control.push_back(c_sum / static_cast<double>(plans));
      }
    }
    row.runs = runs.size();
    if (!row.mse.empty()) {
      row.mse_mean = mean_of(row.mse);
      row.mse_median = median_of(row.mse);
      row.mse_p95 = percentile(row.mse, 0.95);
    }
    row.homogeneity = mean_of(run_homogeneity);
    row.control_homogeneity = mean_of(run_control);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_compare_csv(std::ostream& out, const std::vector<CompareRow>& rows) {
  out << kCompareColumns << '\n';
  for (const CompareRow& r : rows) {
    out << to_string(r.strategy) << ',' << num(r.ratio) << ',' << r.runs << ','
        << num(r.mse_mean) << ',' << num(r.mse_median) << ',' << num(r.mse_p95)
        << ',' << num(r.homogeneity) << ',' << num(r.control_homogeneity) << ','
        << r.merge_layers << ',' << r.pool_violations << ',' << r.fallbacks << '\n';
  }
}

// ---------------------------------------------------------------------------
// capture / replay

std::vector<FmapRecord> capture_records(const HarnessOptions& options,
                                        std::uint64_t seed, std::size_t label) {
  const ToyDenoiser model(options.denoiser());
  const NoiseSchedule schedule = NoiseSchedule::linear(options.steps);
  const MergeConfig cfg = options.merge_config(Strategy::none, 0.0, seed);

  std::vector<FmapRecord> records;
  std::map<std::size_t, TokenMatrix> pending;
  SampleObserver observer;
  observer.on_layer = [&](const LayerEvent& ev) {
    if (ev.context.conditional) pending.insert_or_assign(ev.context.layer, ev.tokens);
  };
  observer.on_step = [&](const StepEvent& ev) {
    for (const auto& [layer, tokens] : pending) {
      ImportanceMap guidance = ev.prediction.guidance;
      if (guidance.size() != tokens.n_tokens()) {
        guidance = resample_importance(guidance, *ev.state.x_t.grid(), *tokens.grid());
      }
      FmapRecord r;
      r.timestep = static_cast<std::uint32_t>(ev.state.t);
      r.layer = static_cast<std::uint32_t>(layer);
      r.n = static_cast<std::uint32_t>(tokens.n_tokens());
      r.c = static_cast<std::uint32_t>(tokens.n_channels());
      r.features.assign(tokens.data().begin(), tokens.data().end());
      r.guidance.assign(guidance.scores().begin(), guidance.scores().end());
      records.push_back(std::move(r));
    }
    pending.clear();
  };
  (void)run_sample(model, schedule, cfg, options, label, observer);
  return records;
}

std::vector<ReplayRow> run_replay(const std::vector<FmapRecord>& records,
                                  const HarnessOptions& options) {
  const double ratio = options.ratios.empty() ? 0.0 : options.ratios.front();

  std::vector<std::uint32_t> timesteps;
  for (const FmapRecord& r : records) timesteps.push_back(r.timestep);
  std::sort(timesteps.begin(), timesteps.end(), std::greater<>());
  timesteps.erase(std::unique(timesteps.begin(), timesteps.end()), timesteps.end());

  // (layer, timestep) -> record index; later duplicates win.
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::size_t> by_key;
  for (std::size_t i = 0; i < records.size(); ++i) {
    by_key[{records[i].layer, records[i].timestep}] = i;
  }

  std::vector<ReplayRow> rows;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const FmapRecord& rec = records[i];
    const std::size_t step_index = static_cast<std::size_t>(
        std::find(timesteps.begin(), timesteps.end(), rec.timestep) -
        timesteps.begin());
    for (Strategy strategy : options.strategies) {
      ReplayRow row;
      row.record = i;
      row.timestep = rec.timestep;
      row.layer = rec.layer;
      row.strategy = strategy;
      row.status = "ok";
      row.n_in = rec.n;
      try {
        const auto side = even_square_side(rec.n);
        std::optional<Grid> grid;
        if (side) grid = Grid{*side, *side};
        const TokenMatrix tokens(rec.n, rec.c, rec.features, grid);

        std::optional<ImportanceMap> prev;
        auto it = by_key.upper_bound({rec.layer, rec.timestep});
        if (it != by_key.end() && it->first.first == rec.layer) {
          const FmapRecord& p = records[it->second];
          prev.emplace(p.guidance, static_cast<std::int64_t>(p.timestep));
        }
        const MergeConfig cfg = options.merge_config(strategy, ratio, options.base_seed);
        SamplerState state{tokens, rec.timestep, options.cfg_scale, 0, prev};
        Rng rng(cfg.seed, Rng::plan_stream(rec.timestep, rec.layer));
        ScheduledPlan sp = scheduled_plan(state, step_index, tokens, cfg, rng);

        row.mode = sp.mode == PlanMode::prune ? "prune" : "merge";
        row.n_out = sp.plan.n_out();
        row.expected_n_out = attention_tokens(cfg, rec.n);
        row.count_ok = row.n_out == row.expected_n_out && sp.plan.n_in() == rec.n;
        row.homogeneity = group_homogeneity(tokens, sp.plan);
        Rng crng = control_rng(cfg.seed, rec.timestep, rec.layer);
        row.control_homogeneity =
            sp.plan.merges_nothing()
                ? kNaN
                : group_homogeneity(tokens, random_control_plan(sp.plan, crng));
        if (sp.diagnostic) row.status = "ok (" + *sp.diagnostic + ")";
        row.plan = std::move(sp.plan);
      } catch (const Error& e) {
        row.status = std::string("error: ") + e.what();
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

void write_replay_csv(std::ostream& out, const std::vector<ReplayRow>& rows) {
  out << kReplayColumns << '\n';
  for (const ReplayRow& r : rows) {
    std::string status = r.status;
    std::replace(status.begin(), status.end(), ',', ';');
    std::replace(status.begin(), status.end(), '"', '\'');
    out << r.record << ',' << r.timestep << ',' << r.layer << ','
        << to_string(r.strategy) << ",\"" << status << "\"," << r.mode << ','
        << r.n_in << ',' << r.n_out << ',' << r.expected_n_out << ','
        << (r.count_ok ? 1 : 0) << ',' << num(r.homogeneity) << ','
        << num(r.control_homogeneity) << '\n';
  }
}

}  // namespace tokmerge::harness
