// Copyright 2026 The tokmerge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "tokmerge/core.hpp"

namespace tokmerge {

/// Per-token classifier-free guidance magnitude: the mean over channels of
/// |eps_cond - eps_uncond|.
ImportanceMap guidance_magnitude(const TokenMatrix& eps_cond,
                                 const TokenMatrix& eps_uncond,
                                 std::int64_t source_timestep = -1);

/// Mean-pools a map laid out on `from` down to `to`. Both target dimensions
/// must divide the source dimensions.
ImportanceMap resample_importance(const ImportanceMap& map, Grid from, Grid to);

/// Token indices by descending score; equal scores keep ascending index.
std::vector<Index> rank_tokens(const ImportanceMap& map);

}  // namespace tokmerge
