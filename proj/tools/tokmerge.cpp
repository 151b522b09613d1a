// Copyright 2026 The tokmerge Authors
// SPDX-License-Identifier: Apache-2.0

// tokmerge: benchmark, compare, capture and replay token-merging strategies
// on the toy diffusion sampler.
//
// Exit codes: 0 success, 1 configuration error, 2 I/O or format error.

#include <algorithm>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tokmerge/harness/commands.hpp"

namespace {

using tokmerge::Errc;
using tokmerge::Error;
using tokmerge::Strategy;
using tokmerge::harness::HarnessOptions;

constexpr int kExitConfig = 1;
constexpr int kExitIo = 2;

struct CliState {
  HarnessOptions options;
  std::vector<std::string> strategy_names;
  std::string out_path;
  std::string in_path;
  std::string format = "csv";
  std::uint64_t label = 0;
};

void add_common(CLI::App* cmd, CliState& s, bool ratio_list) {
  auto& o = s.options;
  cmd->add_option("--strategy", s.strategy_names,
                  "none|tome|importance|topk|random (repeatable)");
  if (ratio_list) {
    cmd->add_option("--ratio", o.ratios, "merge ratio r in [0, 1) (repeatable)");
  } else {
    cmd->add_option("--ratio", o.ratios, "merge ratio r in [0, 1)")->expected(1);
  }
  cmd->add_option("--dst-frac", o.dst_fraction, "dst fraction k")->capture_default_str();
  cmd->add_option("--pool-factor", o.pool_factor, "pool-size factor p")
      ->capture_default_str();
  cmd->add_option("--prune-steps", o.prune_steps, "leading steps that prune")
      ->capture_default_str();
  cmd->add_option("--steps", o.steps, "sampling steps T")->capture_default_str();
  cmd->add_option("--cfg-scale", o.cfg_scale, "guidance weight w")->capture_default_str();
  cmd->add_option("--tokens", o.tokens, "latent tokens N (an even square)")
      ->capture_default_str();
  cmd->add_option("--channels", o.channels, "channels C")->capture_default_str();
  cmd->add_option("--seed", o.base_seed, "first seed")->capture_default_str();
  cmd->add_option("--format", s.format, "output format")
      ->check(CLI::IsMember({"csv"}))
      ->capture_default_str();
  cmd->add_option("--out", s.out_path, "output path (default stdout)");
}

std::vector<Strategy> parse_strategies(const std::vector<std::string>& names,
                                       std::vector<Strategy> fallback) {
  if (names.empty()) return fallback;
  std::vector<Strategy> out;
  for (const auto& n : names) {
    const auto s = tokmerge::parse_strategy(n);
    if (!s) throw Error(Errc::invalid_argument, "unknown strategy '" + n + "'");
    out.push_back(*s);
  }
  return out;
}

template <typename Writer>
void emit(const std::string& path, Writer&& write) {
  if (path.empty() || path == "-") {
    write(std::cout);
    return;
  }
  std::ofstream out(path);
  if (!out) throw Error(Errc::io, "cannot open " + path + " for writing");
  write(out);
  if (!out) throw Error(Errc::io, "write failed for " + path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Token-merging engine benchmark harness"};
  app.require_subcommand(1);
  CliState s;

  auto* bench = app.add_subcommand("bench", "FLOPs, latency and deviation per (strategy, ratio)");
  add_common(bench, s, /*ratio_list=*/true);
  bench->add_option("--seeds", s.options.seeds, "seeds for the deviation average")
      ->capture_default_str();
  bench->footer(std::string("CSV columns: ") + tokmerge::harness::kBenchColumns);

  auto* compare = app.add_subcommand("compare", "matched-seed strategy comparison");
  add_common(compare, s, /*ratio_list=*/false);
  compare->add_option("--seeds", s.options.seeds, "seeds")->capture_default_str();
  compare->add_option("--conditions", s.options.conditions, "condition labels per seed")
      ->capture_default_str();
  compare->footer(std::string("CSV columns: ") + tokmerge::harness::kCompareColumns);

  auto* capture = app.add_subcommand("capture", "dump unmerged layer inputs to FMAP");
  add_common(capture, s, /*ratio_list=*/false);
  capture->add_option("--label", s.label, "condition label")->capture_default_str();
  capture->footer("Writes an FMAP file to --out (required).");

  auto* replay = app.add_subcommand("replay", "apply strategies to an FMAP capture");
  add_common(replay, s, /*ratio_list=*/false);
  replay->add_option("--in", s.in_path, "FMAP input")->required();
  replay->footer(std::string("CSV columns: ") + tokmerge::harness::kReplayColumns);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  auto& o = s.options;
  try {
    if (bench->parsed()) {
      o.strategies = parse_strategies(
          s.strategy_names, {Strategy::none, Strategy::tome_random_grid,
                             Strategy::importance_pool, Strategy::topk_dst});
      if (o.ratios.empty()) o.ratios = {0.0, 0.3, 0.5, 0.7};
      const auto rows = tokmerge::harness::run_bench(o);
      emit(s.out_path, [&](std::ostream& out) {
        tokmerge::harness::write_bench_csv(out, rows);
      });
    } else if (compare->parsed()) {
      o.strategies = parse_strategies(
          s.strategy_names, {Strategy::importance_pool, Strategy::topk_dst,
                             Strategy::tome_random_grid});
      if (o.ratios.empty()) o.ratios = {0.7};
      if (!compare->count("--seeds")) o.seeds = 32;
      const auto rows = tokmerge::harness::run_compare(o);
      emit(s.out_path, [&](std::ostream& out) {
        tokmerge::harness::write_compare_csv(out, rows);
      });
    } else if (capture->parsed()) {
      if (s.out_path.empty()) throw Error(Errc::invalid_argument, "capture needs --out");
      o.conditions = std::max<std::size_t>(o.conditions, s.label + 1);
      const auto records = tokmerge::harness::capture_records(o, o.base_seed, s.label);
      tokmerge::harness::write_fmap(s.out_path, records);
      std::cerr << "wrote " << records.size() << " records to " << s.out_path << '\n';
    } else if (replay->parsed()) {
      o.strategies = parse_strategies(
          s.strategy_names, {Strategy::importance_pool, Strategy::topk_dst,
                             Strategy::tome_random_grid});
      if (o.ratios.empty()) o.ratios = {0.5};
      o.merge_config(Strategy::none, o.ratios.front(), 0).validate();
      const auto records = tokmerge::harness::read_fmap(s.in_path);
      const auto rows = tokmerge::harness::run_replay(records, o);
      emit(s.out_path, [&](std::ostream& out) {
        tokmerge::harness::write_replay_csv(out, rows);
      });
    }
  } catch (const Error& e) {
    std::cerr << "tokmerge: " << tokmerge::to_string(e.code()) << ": " << e.what() << '\n';
    return e.code() == Errc::io || e.code() == Errc::format ? kExitIo : kExitConfig;
  }
  return 0;
}
