// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include "graphormer/pipeline/model.hpp"

namespace graphormer {

/// Draws r ~ U[0, ratio_max] (or uses `forced_ratio`), then floor(r * queries)
/// distinct query indices uniformly, returned sorted.
inline MaskPlan sample_mask_plan(double ratio_max, std::size_t queries, Rng& rng,
                                 std::optional<double> forced_ratio = std::nullopt) {
  if (ratio_max < 0.0 || ratio_max > 1.0) throw ConfigError("mask ratio_max must be in [0, 1]");
  MaskPlan plan;
  if (ratio_max == 0.0 && !forced_ratio) return plan;
  const double r = forced_ratio ? *forced_ratio : rng.uniform(0.0, ratio_max);
  const auto k = std::min(queries, static_cast<std::size_t>(std::floor(r * static_cast<double>(queries))));
  std::vector<std::size_t> idx(queries);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(queries - i)]);
  plan.query_indices.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(plan.query_indices.begin(), plan.query_indices.end());
  return plan;
}

}  // namespace graphormer
