#include "detcal/features.hpp"

#include <algorithm>
#include <array>

#include "detcal/error.hpp"

namespace detcal {

namespace {

constexpr std::array<std::string_view, 8> kNames = {"confidence", "cx", "cy", "w",
                                                    "h",          "x",  "y",  "d"};

}  // namespace

std::string_view to_string(Feature f) noexcept { return kNames[static_cast<std::size_t>(f)]; }

Feature parse_feature(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (kNames[i] == name) return static_cast<Feature>(i);
  }
  throw ValidationError("unknown feature '" + std::string(name) + "'");
}

FeatureSet::FeatureSet(std::vector<Feature> features) : features_(std::move(features)) {
  if (features_.empty() || features_.front() != Feature::confidence) {
    throw ValidationError("feature list must start with 'confidence'");
  }
  for (std::size_t i = 0; i < features_.size(); ++i) {
    for (std::size_t j = i + 1; j < features_.size(); ++j) {
      if (features_[i] == features_[j]) {
        throw ValidationError("duplicate feature '" + std::string(to_string(features_[i])) + "'");
      }
    }
  }
  const bool has_box = std::any_of(features_.begin(), features_.end(), [](Feature f) {
    return f == Feature::cx || f == Feature::cy || f == Feature::w || f == Feature::h;
  });
  if (has_box && pixel_features()) {
    throw ValidationError("box features and pixel features cannot be mixed");
  }
}

FeatureSet FeatureSet::parse(std::string_view csv) {
  std::vector<Feature> out;
  std::size_t pos = 0;
  while (pos <= csv.size()) {
    std::size_t end = csv.find(',', pos);
    if (end == std::string_view::npos) end = csv.size();
    std::string_view tok = csv.substr(pos, end - pos);
    while (!tok.empty() && tok.front() == ' ') tok.remove_prefix(1);
    while (!tok.empty() && tok.back() == ' ') tok.remove_suffix(1);
    if (!tok.empty()) out.push_back(parse_feature(tok));
    pos = end + 1;
  }
  return FeatureSet(std::move(out));
}

FeatureSet FeatureSet::from_names(std::span<const std::string> names) {
  std::vector<Feature> out;
  out.reserve(names.size());
  for (const auto& n : names) out.push_back(parse_feature(n));
  return FeatureSet(std::move(out));
}

std::optional<std::size_t> FeatureSet::index_of(Feature f) const noexcept {
  const auto it = std::find(features_.begin(), features_.end(), f);
  if (it == features_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - features_.begin());
}

bool FeatureSet::pixel_features() const noexcept {
  return std::any_of(features_.begin(), features_.end(), [](Feature f) {
    return f == Feature::x || f == Feature::y || f == Feature::d;
  });
}

std::vector<std::string> FeatureSet::names() const {
  std::vector<std::string> out;
  out.reserve(features_.size());
  for (const Feature f : features_) out.emplace_back(to_string(f));
  return out;
}

std::string FeatureSet::to_csv() const {
  std::string out;
  for (const Feature f : features_) {
    if (!out.empty()) out += ',';
    out += to_string(f);
  }
  return out;
}

void FeatureVector::validate() const {
  if (values.size() != features.size()) {
    throw ValidationError("feature vector has " + std::to_string(values.size()) +
                          " values for " + std::to_string(features.size()) + " features");
  }
  for (std::size_t q = 0; q < values.size(); ++q) {
    if (!(values[q] >= 0.0 && values[q] <= 1.0)) {
      throw ValidationError("feature '" + std::string(to_string(features[q])) +
                            "' outside [0,1]");
    }
  }
}

void Dataset::add(std::span<const double> row, bool outcome) {
  if (row.size() != dim()) {
    throw ValidationError("sample has " + std::to_string(row.size()) + " features, expected " +
                          std::to_string(dim()));
  }
  for (std::size_t q = 0; q < row.size(); ++q) {
    if (!(row[q] >= 0.0 && row[q] <= 1.0)) {
      throw ValidationError("feature '" + std::string(to_string(features_[q])) +
                            "' outside [0,1]");
    }
  }
  values_.insert(values_.end(), row.begin(), row.end());
  outcomes_.push_back(outcome ? 1 : 0);
}

FeatureVector Dataset::vector(std::size_t i) const {
  const auto r = row(i);
  return {features_, std::vector<double>(r.begin(), r.end())};
}

std::size_t Dataset::positives() const noexcept {
  return static_cast<std::size_t>(std::count(outcomes_.begin(), outcomes_.end(), std::uint8_t{1}));
}

Dataset Dataset::project(const FeatureSet& subset) const {
  std::vector<std::size_t> cols;
  for (const Feature f : subset) {
    const auto idx = features_.index_of(f);
    if (!idx) {
      throw ValidationError("feature '" + std::string(to_string(f)) + "' not in dataset");
    }
    cols.push_back(*idx);
  }
  Dataset out(subset);
  out.values_.reserve(size() * subset.size());
  for (std::size_t i = 0; i < size(); ++i) {
    const auto r = row(i);
    for (const std::size_t c : cols) out.values_.push_back(r[c]);
  }
  out.outcomes_ = outcomes_;
  return out;
}

double feature_value(const DetectionRecord& r, Feature f) {
  switch (f) {
    case Feature::confidence: return r.confidence;
    case Feature::cx: return r.box.cx;
    case Feature::cy: return r.box.cy;
    case Feature::w: return r.box.w;
    case Feature::h: return r.box.h;
    default:
      throw ValidationError("feature '" + std::string(to_string(f)) +
                            "' is not defined for detections");
  }
}

double feature_value(const PixelRecord& r, Feature f) {
  switch (f) {
    case Feature::confidence: return r.confidence;
    case Feature::x: return r.x;
    case Feature::y: return r.y;
    case Feature::d: return r.d;
    default:
      throw ValidationError("feature '" + std::string(to_string(f)) +
                            "' is not defined for pixel records");
  }
}

bool outcome_of(const DetectionRecord& r) {
  if (!r.matched) {
    throw ValidationError("detection of image '" + r.image_id + "' has no 'matched' label");
  }
  return *r.matched;
}

}  // namespace detcal
