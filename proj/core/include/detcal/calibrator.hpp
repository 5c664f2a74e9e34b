#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "detcal/features.hpp"
#include "detcal/histogram_binning.hpp"
#include "detcal/scaling.hpp"

namespace detcal {

enum class Method { histogram_binning, logistic, beta };

/// Accepts the short forms hb, lc, bc as well as the long names.
Method parse_method(std::string_view name);
std::string_view to_string(Method m) noexcept;

/// Leaves confidences untouched.
struct IdentityModel {
  int class_id = 0;
};

using CalibrationModel = std::variant<IdentityModel, HistogramBinningModel, LogisticModel, BetaModel>;

int class_id_of(const CalibrationModel& model);
/// Features the model consumes; identity consumes the confidence only.
FeatureSet features_of(const CalibrationModel& model);
/// `row` follows features_of(model).
double calibrate(const CalibrationModel& model, std::span<const double> row);

nlohmann::json to_json(const CalibrationModel& model);
CalibrationModel model_from_json(const nlohmann::json& j);

struct CalibratorOptions {
  Method method = Method::logistic;
  FeatureSet features;
  /// Histogram binning grid; empty means 20 bins confidence-only, 5 otherwise.
  std::vector<int> bins;  // histogram binning only; empty means the task default
  Task task = Task::detection;
  HistogramBinningOptions histogram;
  ScalingFitOptions scaling;
  /// Scaling fits use the requested features only when both outcome classes
  /// have at least this many samples...
  std::size_t min_class_samples = 32;
  /// ...fall back to a confidence-only fit at this many, and to identity below.
  std::size_t min_fallback_samples = 8;
  /// Worker threads for per-class fitting; 0 picks hardware concurrency.
  unsigned threads = 0;
};

/// One calibration model per class id.
class CalibratorSet {
 public:
  CalibratorSet() = default;
  CalibratorSet(Method method, FeatureSet features) : method_(method), features_(std::move(features)) {}

  Method method() const noexcept { return method_; }
  const FeatureSet& features() const noexcept { return features_; }
  const std::map<int, CalibrationModel>& models() const noexcept { return models_; }
  void set(int class_id, CalibrationModel model) { models_.insert_or_assign(class_id, std::move(model)); }
  const CalibrationModel* find(int class_id) const;

  /// Fits every class present in `per_class`; datasets must carry opts.features.
  static CalibratorSet fit(const std::map<int, Dataset>& per_class, const CalibratorOptions& opts);

  template <class Record>
  static CalibratorSet fit(std::span<const Record> records, const CalibratorOptions& opts) {
    std::map<int, Dataset> per_class;
    for (const auto& [cls, idx] : indices_by_class(records)) {
      per_class.emplace(cls, make_dataset(records, opts.features, std::span<const std::size_t>(idx)));
    }
    return fit(per_class, opts);
  }

  /// Calibrated confidence for one record; classes without a model pass through.
  template <class Record>
  double calibrate_record(const Record& r) const {
    const CalibrationModel* model = find(class_of(r));
    if (!model) return r.confidence;
    const FeatureSet fs = features_of(*model);
    std::vector<double> row(fs.size());
    fill_row(r, fs, row);
    return calibrate(*model, row);
  }

  /// Copies of the records with calibrated confidences, order preserved.
  template <class Record>
  std::vector<Record> apply(std::span<const Record> records) const {
    std::vector<Record> out(records.begin(), records.end());
    for (auto& r : out) r.confidence = calibrate_record(r);
    return out;
  }

  nlohmann::json to_json() const;
  static CalibratorSet from_json(const nlohmann::json& j);

 private:
  Method method_ = Method::logistic;
  FeatureSet features_;
  std::map<int, CalibrationModel> models_;
};

}  // namespace detcal
