#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "detcal/records.hpp"

namespace detcal {

enum class Feature : std::uint8_t { confidence, cx, cy, w, h, x, y, d };

std::string_view to_string(Feature f) noexcept;
/// Throws ValidationError for unknown names.
Feature parse_feature(std::string_view name);

/// Ordered, duplicate-free list of calibration inputs; confidence comes first.
class FeatureSet {
 public:
  FeatureSet() : features_{Feature::confidence} {}
  explicit FeatureSet(std::vector<Feature> features);

  /// Comma separated names, e.g. "confidence,cx,cy".
  static FeatureSet parse(std::string_view csv);
  static FeatureSet from_names(std::span<const std::string> names);

  std::size_t size() const noexcept { return features_.size(); }
  Feature operator[](std::size_t i) const noexcept { return features_[i]; }
  auto begin() const noexcept { return features_.begin(); }
  auto end() const noexcept { return features_.end(); }

  std::optional<std::size_t> index_of(Feature f) const noexcept;
  bool confidence_only() const noexcept { return features_.size() == 1; }
  /// Any of x, y, d: the set describes pixel records.
  bool pixel_features() const noexcept;
  std::vector<std::string> names() const;
  std::string to_csv() const;

  friend bool operator==(const FeatureSet&, const FeatureSet&) = default;

 private:
  std::vector<Feature> features_;
};

/// The calibrator input s = (confidence, position/shape features).
struct FeatureVector {
  FeatureSet features;
  std::vector<double> values;

  /// Sizes agree and every value lies in [0,1].
  void validate() const;
};

/// Samples with binary outcomes, stored row-major (n x Q).
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(FeatureSet features) : features_(std::move(features)) {}

  const FeatureSet& features() const noexcept { return features_; }
  std::size_t dim() const noexcept { return features_.size(); }
  std::size_t size() const noexcept { return outcomes_.size(); }
  bool empty() const noexcept { return outcomes_.empty(); }

  /// Throws ValidationError if the row has the wrong size or leaves [0,1].
  void add(std::span<const double> row, bool outcome);

  std::span<const double> row(std::size_t i) const noexcept {
    return {values_.data() + i * dim(), dim()};
  }
  double confidence(std::size_t i) const noexcept { return values_[i * dim()]; }
  bool outcome(std::size_t i) const noexcept { return outcomes_[i] != 0; }
  FeatureVector vector(std::size_t i) const;

  std::size_t positives() const noexcept;
  const std::vector<double>& values() const noexcept { return values_; }
  const std::vector<std::uint8_t>& outcomes() const noexcept { return outcomes_; }

  /// Same samples restricted to (and reordered by) `subset`.
  Dataset project(const FeatureSet& subset) const;

 private:
  FeatureSet features_;
  std::vector<double> values_;
  std::vector<std::uint8_t> outcomes_;
};

double feature_value(const DetectionRecord& r, Feature f);
double feature_value(const PixelRecord& r, Feature f);

/// Correctness label; detections must carry `matched`.
bool outcome_of(const DetectionRecord& r);
inline bool outcome_of(const PixelRecord& r) { return r.correct; }

inline int class_of(const DetectionRecord& r) { return r.class_id; }
inline int class_of(const PixelRecord& r) { return r.class_id; }

/// Record indices grouped by class id, ascending class order, file order within.
template <class Record>
std::map<int, std::vector<std::size_t>> indices_by_class(std::span<const Record> records) {
  std::map<int, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < records.size(); ++i) out[class_of(records[i])].push_back(i);
  return out;
}

template <class Record>
void fill_row(const Record& r, const FeatureSet& features, std::span<double> row) {
  for (std::size_t q = 0; q < features.size(); ++q) row[q] = feature_value(r, features[q]);
}

template <class Record>
Dataset make_dataset(std::span<const Record> records, const FeatureSet& features,
                     std::span<const std::size_t> indices) {
  Dataset ds(features);
  std::vector<double> row(features.size());
  for (const std::size_t i : indices) {
    fill_row(records[i], features, row);
    ds.add(row, outcome_of(records[i]));
  }
  return ds;
}

template <class Record>
Dataset make_dataset(std::span<const Record> records, const FeatureSet& features) {
  Dataset ds(features);
  std::vector<double> row(features.size());
  for (const auto& r : records) {
    fill_row(r, features, row);
    ds.add(row, outcome_of(r));
  }
  return ds;
}

}  // namespace detcal
