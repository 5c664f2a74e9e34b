#include "detcal/histogram_binning.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "detcal/error.hpp"

namespace detcal {

double HistogramBinningModel::apply(std::span<const double> values) const {
  const auto it = theta.find(scheme.linear_index(values));
  return it == theta.end() ? fallback : it->second;
}

HistogramBinningModel fit_hb(const Dataset& samples, const BinningScheme& scheme,
                             const HistogramBinningOptions& opts) {
  if (samples.empty()) throw ValidationError("histogram binning needs at least one sample");
  if (!(opts.laplace >= 0.0)) throw ValidationError("laplace smoothing must be non-negative");
  const BinStats stats = accumulate(samples, scheme);

  HistogramBinningModel model{scheme, {}, 0.0, 0};
  const double a = opts.laplace;
  for (const auto& [lin, cell] : stats.cells()) {
    const double n = static_cast<double>(cell.count);
    model.theta.emplace(lin, std::clamp((cell.outcome_sum.value() + a) / (n + 2.0 * a), 0.0, 1.0));
  }
  model.fallback = static_cast<double>(samples.positives()) / static_cast<double>(samples.size());
  return model;
}

double apply_hb(const HistogramBinningModel& model, const FeatureVector& v) {
  if (!(v.features == model.features())) {
    throw ValidationError("feature vector (" + v.features.to_csv() + ") does not match model (" +
                          model.features().to_csv() + ")");
  }
  return model.apply(v.values);
}

nlohmann::json to_json(const HistogramBinningModel& model) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& [lin, theta] : model.theta) {
    entries.push_back({{"index", model.scheme.unravel(lin)}, {"theta", theta}});
  }
  return {{"type", "histogram_binning"},
          {"class_id", model.class_id},
          {"feature_names", model.features().names()},
          {"bins_per_dim", model.scheme.bins_per_dim()},
          {"entries", std::move(entries)},
          {"fallback", model.fallback}};
}

HistogramBinningModel histogram_binning_from_json(const nlohmann::json& j) {
  if (j.at("type").get<std::string>() != "histogram_binning") {
    throw ParseError("not a histogram_binning model");
  }
  const auto names = j.at("feature_names").get<std::vector<std::string>>();
  HistogramBinningModel model{
      BinningScheme(FeatureSet::from_names(names), j.at("bins_per_dim").get<std::vector<int>>()),
      {},
      j.at("fallback").get<double>(),
      j.at("class_id").get<int>()};
  if (!(model.fallback >= 0.0 && model.fallback <= 1.0)) {
    throw ValidationError("fallback outside [0,1]");
  }
  for (const auto& e : j.at("entries")) {
    const auto idx = e.at("index").get<std::vector<int>>();
    if (idx.size() != model.scheme.dim()) throw ValidationError("bin index has wrong dimension");
    for (std::size_t q = 0; q < idx.size(); ++q) {
      if (idx[q] < 0 || idx[q] >= model.scheme.bins(q)) {
        throw ValidationError("bin index out of range");
      }
    }
    const double theta = e.at("theta").get<double>();
    if (!(theta >= 0.0 && theta <= 1.0)) throw ValidationError("theta outside [0,1]");
    model.theta[model.scheme.linearize(idx)] = theta;
  }
  return model;
}

}  // namespace detcal
