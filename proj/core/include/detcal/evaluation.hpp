#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "detcal/binning.hpp"
#include "detcal/features.hpp"

namespace detcal {

struct EvaluationConfig {
  FeatureSet features;
  /// Empty selects the protocol defaults for the task.
  std::vector<int> bins;
  int min_samples_per_bin = 8;
  Task task = Task::detection;
  double nll_clip_eps = 1e-12;

  MeasureConfig measure_config() const;
};

struct ClassReport {
  std::size_t n = 0;
  DeceResult d_ece;
  double brier = 0.0;
  double nll = 0.0;
  std::optional<double> auprc;        // undefined without positives
  std::optional<double> oracle_d_ece;  // when true posteriors are known
};

/// Per-class metrics plus their sample-weighted averages.
struct Report {
  std::map<int, ClassReport> classes;
  std::size_t n = 0;
  double d_ece = 0.0;
  double brier = 0.0;
  double nll = 0.0;
  std::optional<double> auprc;
  std::optional<double> oracle_d_ece;

  /// {"<class_id>": {d_ece, brier, nll, auprc, n, ...}, ..., "weighted": {...}}
  nlohmann::json to_json() const;
};

/// `posteriors`, when given, map class id to per-sample true posteriors
/// aligned with that class's dataset.
Report evaluate(const std::map<int, Dataset>& per_class, const EvaluationConfig& cfg,
                const std::map<int, std::vector<double>>* posteriors = nullptr);

template <class Record>
Report evaluate(std::span<const Record> records, const EvaluationConfig& cfg,
                std::span<const double> posteriors = {}) {
  std::map<int, Dataset> per_class;
  std::map<int, std::vector<double>> post;
  for (const auto& [cls, idx] : indices_by_class(records)) {
    per_class.emplace(cls, make_dataset(records, cfg.features, std::span<const std::size_t>(idx)));
    if (!posteriors.empty()) {
      auto& p = post[cls];
      for (const std::size_t i : idx) p.push_back(posteriors[i]);
    }
  }
  return evaluate(per_class, cfg, posteriors.empty() ? nullptr : &post);
}

}  // namespace detcal
