#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "detcal/features.hpp"

namespace detcal {

struct ScoredOutcome {
  double confidence = 0.0;
  bool outcome = false;
};

std::vector<ScoredOutcome> scored_outcomes(const Dataset& samples);

/// Mean squared error between confidence and outcome. Throws on empty input.
double brier(std::span<const ScoredOutcome> samples);

/// Mean binary cross-entropy with confidences clipped to [eps, 1 - eps].
double nll(std::span<const ScoredOutcome> samples, double clip_eps = 1e-12);

/// Area under the precision/recall curve swept by descending confidence.
/// Tied confidences enter as one group; area uses the right-continuous step
/// rule sum_k (R_k - R_{k-1}) * P_k. Throws ValidationError with no positives.
double auprc(std::span<const ScoredOutcome> samples);

/// sum(value * count) / sum(count). Throws on an empty map or zero counts.
double weighted_classwise(const std::map<int, std::pair<double, std::size_t>>& per_class);

}  // namespace detcal
