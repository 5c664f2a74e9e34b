#pragma once

#include <cstdint>
#include <map>

#include <nlohmann/json_fwd.hpp>

#include "detcal/binning.hpp"

namespace detcal {

/// Per-bin calibrated estimates over a multidimensional grid. Only occupied bins
/// are stored; everything else maps to the global positive rate.
struct HistogramBinningModel {
  BinningScheme scheme;
  std::map<std::uint64_t, double> theta;  // keyed by linear bin index
  double fallback = 0.0;
  int class_id = 0;

  const FeatureSet& features() const noexcept { return scheme.features(); }
  double apply(std::span<const double> values) const;
};

struct HistogramBinningOptions {
  /// Additive smoothing: theta = (positives + a) / (count + 2a). Off by default.
  double laplace = 0.0;
};

/// Each occupied bin gets the minimiser of its squared loss, the fraction of
/// positives. Throws ValidationError for an empty sample set.
HistogramBinningModel fit_hb(const Dataset& samples, const BinningScheme& scheme,
                             const HistogramBinningOptions& opts = {});

/// Throws ValidationError when the vector's features differ from the model's.
double apply_hb(const HistogramBinningModel& model, const FeatureVector& v);

nlohmann::json to_json(const HistogramBinningModel& model);
HistogramBinningModel histogram_binning_from_json(const nlohmann::json& j);

}  // namespace detcal
