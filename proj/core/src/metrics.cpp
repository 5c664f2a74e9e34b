#include "detcal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "detcal/binning.hpp"
#include "detcal/error.hpp"

namespace detcal {

std::vector<ScoredOutcome> scored_outcomes(const Dataset& samples) {
  std::vector<ScoredOutcome> out(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out[i] = {samples.confidence(i), samples.outcome(i)};
  }
  return out;
}

double brier(std::span<const ScoredOutcome> samples) {
  if (samples.empty()) throw ValidationError("Brier score of an empty sample");
  CompensatedSum sum;
  for (const auto& s : samples) {
    const double e = s.confidence - (s.outcome ? 1.0 : 0.0);
    sum.add(e * e);
  }
  return sum.value() / static_cast<double>(samples.size());
}

double nll(std::span<const ScoredOutcome> samples, double clip_eps) {
  if (samples.empty()) throw ValidationError("NLL of an empty sample");
  if (!(clip_eps > 0.0 && clip_eps < 0.5)) throw ValidationError("clip_eps must lie in (0, 0.5)");
  CompensatedSum sum;
  for (const auto& s : samples) {
    const double p = std::clamp(s.confidence, clip_eps, 1.0 - clip_eps);
    sum.add(s.outcome ? -std::log(p) : -std::log1p(-p));
  }
  return sum.value() / static_cast<double>(samples.size());
}

double auprc(std::span<const ScoredOutcome> samples) {
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return samples[a].confidence > samples[b].confidence;
  });
  std::size_t total_pos = 0;
  for (const auto& s : samples) total_pos += s.outcome ? 1 : 0;
  if (total_pos == 0) throw ValidationError("AUPRC needs at least one positive sample");

  const auto pos_total = static_cast<double>(total_pos);
  double area = 0.0;
  double prev_recall = 0.0;
  std::size_t tp = 0;
  std::size_t seen = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double c = samples[order[i]].confidence;
    while (i < order.size() && samples[order[i]].confidence == c) {
      tp += samples[order[i]].outcome ? 1 : 0;
      ++seen;
      ++i;
    }
    const double recall = static_cast<double>(tp) / pos_total;
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return std::clamp(area, 0.0, 1.0);
}

double weighted_classwise(const std::map<int, std::pair<double, std::size_t>>& per_class) {
  if (per_class.empty()) throw ValidationError("no classes to average");
  CompensatedSum num;
  std::size_t den = 0;
  for (const auto& [cls, vc] : per_class) {
    if (vc.second == 0) {
      throw ValidationError("class " + std::to_string(cls) + " has zero samples");
    }
    num.add(vc.first * static_cast<double>(vc.second));
    den += vc.second;
  }
  return num.value() / static_cast<double>(den);
}

}  // namespace detcal
