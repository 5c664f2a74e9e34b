#include "detcal/binning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include <nlohmann/json.hpp>

#include "detcal/error.hpp"

namespace detcal {

BinningScheme::BinningScheme(FeatureSet features, std::vector<int> bins_per_dim)
    : features_(std::move(features)), bins_(std::move(bins_per_dim)) {
  if (bins_.size() != features_.size()) {
    throw ValidationError("scheme has " + std::to_string(bins_.size()) + " bin counts for " +
                          std::to_string(features_.size()) + " features");
  }
  for (const int b : bins_) {
    if (b < 1) throw ValidationError("bin counts must be positive");
    if (total_ > std::numeric_limits<std::uint64_t>::max() / static_cast<std::uint64_t>(b)) {
      throw ValidationError("binning scheme too large");
    }
    total_ *= static_cast<std::uint64_t>(b);
  }
}

BinningScheme BinningScheme::uniform(FeatureSet features, int bins) {
  std::vector<int> b(features.size(), bins);
  return BinningScheme(std::move(features), std::move(b));
}

int BinningScheme::assign(std::size_t q, double v) const noexcept {
  const int b = bins_[q];
  if (!(v > 0.0)) return 0;
  if (v >= 1.0) return b - 1;
  int m = static_cast<int>(std::floor(v * static_cast<double>(b)));
  m = std::clamp(m, 0, b - 1);
  // Agree exactly with the edge comparison a_m <= v < a_{m+1}.
  while (m > 0 && v < edge(q, m)) --m;
  while (m + 1 < b && v >= edge(q, m + 1)) ++m;
  return m;
}

BinIndex BinningScheme::assign(std::span<const double> values) const {
  if (values.size() != dim()) {
    throw ValidationError("value has " + std::to_string(values.size()) +
                          " dimensions, scheme has " + std::to_string(dim()));
  }
  BinIndex idx(dim());
  for (std::size_t q = 0; q < dim(); ++q) idx[q] = assign(q, values[q]);
  return idx;
}

std::uint64_t BinningScheme::linear_index(std::span<const double> values) const {
  if (values.size() != dim()) {
    throw ValidationError("value has " + std::to_string(values.size()) +
                          " dimensions, scheme has " + std::to_string(dim()));
  }
  std::uint64_t lin = 0;
  for (std::size_t q = 0; q < dim(); ++q) {
    lin = lin * static_cast<std::uint64_t>(bins_[q]) + static_cast<std::uint64_t>(assign(q, values[q]));
  }
  return lin;
}

std::uint64_t BinningScheme::linearize(std::span<const int> index) const noexcept {
  std::uint64_t lin = 0;
  for (std::size_t q = 0; q < dim(); ++q) {
    lin = lin * static_cast<std::uint64_t>(bins_[q]) + static_cast<std::uint64_t>(index[q]);
  }
  return lin;
}

BinIndex BinningScheme::unravel(std::uint64_t linear) const {
  BinIndex idx(dim());
  for (std::size_t q = dim(); q-- > 0;) {
    const auto b = static_cast<std::uint64_t>(bins_[q]);
    idx[q] = static_cast<int>(linear % b);
    linear /= b;
  }
  return idx;
}

BinIndex assign_bin(const FeatureVector& v, const BinningScheme& scheme) {
  if (!(v.features == scheme.features())) {
    throw ValidationError("feature vector (" + v.features.to_csv() + ") does not match scheme (" +
                          scheme.features().to_csv() + ")");
  }
  return scheme.assign(v.values);
}

void CompensatedSum::add(double x) noexcept {
  const double t = sum_ + x;
  if (std::abs(sum_) >= std::abs(x)) {
    comp_ += (sum_ - t) + x;
  } else {
    comp_ += (x - t) + sum_;
  }
  sum_ = t;
}

std::vector<double> BinCell::mean_features() const {
  std::vector<double> out(feature_sums.size(), 0.0);
  if (count == 0) return out;
  for (std::size_t q = 0; q < out.size(); ++q) {
    out[q] = feature_sums[q].value() / static_cast<double>(count);
  }
  return out;
}

void BinStats::add(std::span<const double> values, double target) {
  auto& cell = cells_[scheme_.linear_index(values)];
  if (cell.feature_sums.empty()) cell.feature_sums.resize(scheme_.dim());
  ++cell.count;
  cell.outcome_sum.add(target);
  for (std::size_t q = 0; q < values.size(); ++q) cell.feature_sums[q].add(values[q]);
  ++total_;
}

void BinStats::merge(const BinStats& other) {
  if (!(other.scheme_ == scheme_)) throw ValidationError("cannot merge statistics of different schemes");
  for (const auto& [lin, src] : other.cells_) {
    auto& dst = cells_[lin];
    if (dst.feature_sums.empty()) dst.feature_sums.resize(scheme_.dim());
    dst.count += src.count;
    dst.outcome_sum.merge(src.outcome_sum);
    for (std::size_t q = 0; q < src.feature_sums.size(); ++q) {
      dst.feature_sums[q].merge(src.feature_sums[q]);
    }
  }
  total_ += other.total_;
}

const BinCell* BinStats::find(const BinIndex& index) const {
  if (index.size() != scheme_.dim()) throw ValidationError("bin index has wrong dimension");
  for (std::size_t q = 0; q < index.size(); ++q) {
    if (index[q] < 0 || index[q] >= scheme_.bins(q)) return nullptr;
  }
  const auto it = cells_.find(scheme_.linearize(index));
  return it == cells_.end() ? nullptr : &it->second;
}

std::size_t BinStats::count(const BinIndex& index) const {
  const auto* cell = find(index);
  return cell ? cell->count : 0;
}

namespace {

void check_features(const Dataset& samples, const BinningScheme& scheme) {
  if (!(samples.features() == scheme.features())) {
    throw ValidationError("dataset features (" + samples.features().to_csv() +
                          ") do not match scheme (" + scheme.features().to_csv() + ")");
  }
}

}  // namespace

BinStats accumulate(const Dataset& samples, const BinningScheme& scheme) {
  check_features(samples, scheme);
  BinStats stats(scheme);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    stats.add(samples.row(i), samples.outcome(i) ? 1.0 : 0.0);
  }
  return stats;
}

BinStats accumulate(const Dataset& samples, std::span<const double> targets,
                    const BinningScheme& scheme) {
  check_features(samples, scheme);
  if (targets.size() != samples.size()) {
    throw ValidationError("need one target per sample");
  }
  BinStats stats(scheme);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!(targets[i] >= 0.0 && targets[i] <= 1.0)) throw ValidationError("target outside [0,1]");
    stats.add(samples.row(i), targets[i]);
  }
  return stats;
}

std::string_view to_string(Task t) noexcept {
  switch (t) {
    case Task::detection: return "detection";
    case Task::instance_seg: return "instance_seg";
    case Task::semantic_seg: return "semantic_seg";
  }
  return "detection";
}

Task parse_task(std::string_view name) {
  if (name == "detection") return Task::detection;
  if (name == "instance_seg" || name == "instance") return Task::instance_seg;
  if (name == "semantic_seg" || name == "semantic") return Task::semantic_seg;
  throw ValidationError("unknown task '" + std::string(name) + "'");
}

void MeasureConfig::validate() const {
  if (min_samples_per_bin < 1) throw ValidationError("min_samples_per_bin must be at least 1");
}

DeceResult dece(const BinStats& stats, const MeasureConfig& cfg) {
  cfg.validate();
  if (!(stats.scheme() == cfg.scheme)) {
    throw ValidationError("statistics were accumulated with a different scheme");
  }
  DeceResult res;
  res.total_samples = stats.total();
  CompensatedSum weighted_gap;
  for (const auto& [lin, cell] : stats.cells()) {
    if (cell.count < static_cast<std::size_t>(cfg.min_samples_per_bin)) continue;
    ++res.kept_bins;
    res.kept_samples += cell.count;
    weighted_gap.add(static_cast<double>(cell.count) *
                     std::abs(cell.rate() - cell.mean_confidence()));
  }
  if (res.kept_samples == 0) {
    res.degenerate = true;
    return res;
  }
  res.value = std::clamp(weighted_gap.value() / static_cast<double>(res.kept_samples), 0.0, 1.0);
  return res;
}

ReliabilityTable reliability_export(const BinStats& stats, const MeasureConfig& cfg,
                                    std::span<const Feature> axes) {
  cfg.validate();
  const auto& scheme = stats.scheme();
  if (axes.empty() || axes.size() > 2) {
    throw ValidationError("reliability export takes one or two axes");
  }
  std::vector<std::size_t> dims;
  for (const Feature f : axes) {
    const auto q = scheme.features().index_of(f);
    if (!q) {
      throw ValidationError("axis '" + std::string(to_string(f)) + "' is not in the scheme");
    }
    if (std::find(dims.begin(), dims.end(), *q) != dims.end()) {
      throw ValidationError("duplicate reliability axis");
    }
    dims.push_back(*q);
  }

  struct Acc {
    std::size_t count = 0;
    CompensatedSum conf;
    CompensatedSum outcome;
    CompensatedSum gap;
  };
  std::map<std::vector<int>, Acc> marginal;
  for (const auto& [lin, cell] : stats.cells()) {
    if (cell.count < static_cast<std::size_t>(cfg.min_samples_per_bin)) continue;
    const BinIndex idx = scheme.unravel(lin);
    std::vector<int> key;
    for (const std::size_t q : dims) key.push_back(idx[q]);
    auto& acc = marginal[key];
    acc.count += cell.count;
    acc.conf.merge(cell.feature_sums.front());
    acc.outcome.merge(cell.outcome_sum);
    acc.gap.add(static_cast<double>(cell.count) * std::abs(cell.rate() - cell.mean_confidence()));
  }

  ReliabilityTable table;
  table.axes.assign(axes.begin(), axes.end());
  for (const auto& [key, acc] : marginal) {
    ReliabilityRow row;
    for (std::size_t a = 0; a < dims.size(); ++a) {
      row.edges.emplace_back(scheme.edge(dims[a], key[a]), scheme.edge(dims[a], key[a] + 1));
    }
    const auto n = static_cast<double>(acc.count);
    row.count = acc.count;
    row.mean_confidence = acc.conf.value() / n;
    row.rate = acc.outcome.value() / n;
    row.gap = acc.gap.value() / n;
    table.rows.push_back(std::move(row));
  }
  return table;
}

void ReliabilityTable::write_csv(std::ostream& out) const {
  const auto old_precision = out.precision(17);
  out << "axis1_lo,axis1_hi";
  if (axes.size() == 2) out << ",axis2_lo,axis2_hi";
  out << ",count,mean_conf,rate,gap\n";
  for (const auto& row : rows) {
    for (const auto& [lo, hi] : row.edges) out << lo << ',' << hi << ',';
    out << row.count << ',' << row.mean_confidence << ',' << row.rate << ',' << row.gap << '\n';
  }
  out.precision(old_precision);
}

nlohmann::json reliability_metadata(const ReliabilityTable& table, const BinStats& stats,
                                    const MeasureConfig& cfg) {
  std::vector<std::string> axes;
  for (const Feature f : table.axes) axes.emplace_back(to_string(f));
  const auto res = dece(stats, cfg);
  return {{"axes", axes},
          {"feature_names", cfg.scheme.features().names()},
          {"bins_per_dim", cfg.scheme.bins_per_dim()},
          {"min_samples_per_bin", cfg.min_samples_per_bin},
          {"task", std::string(to_string(cfg.task))},
          {"total_samples", res.total_samples},
          {"kept_samples", res.kept_samples},
          {"kept_bins", res.kept_bins},
          {"d_ece", res.value},
          {"rows", table.rows.size()}};
}

std::vector<int> default_bins(Task task, const FeatureSet& features) {
  if (task != Task::detection) return std::vector<int>(features.size(), 15);
  if (features.confidence_only()) return {20};
  return std::vector<int>(features.size(), 5);
}

}  // namespace detcal
