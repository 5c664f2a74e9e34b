#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "detcal/features.hpp"

namespace detcal {

/// Zero-based multi-index (m_1, ..., m_Q) of a bin.
using BinIndex = std::vector<int>;

/// Equidistant grid over [0,1]^Q: dimension q has B_q bins with edges m / B_q.
class BinningScheme {
 public:
  BinningScheme(FeatureSet features, std::vector<int> bins_per_dim);
  static BinningScheme uniform(FeatureSet features, int bins);

  const FeatureSet& features() const noexcept { return features_; }
  std::size_t dim() const noexcept { return bins_.size(); }
  const std::vector<int>& bins_per_dim() const noexcept { return bins_; }
  int bins(std::size_t q) const noexcept { return bins_[q]; }
  std::uint64_t total_bins() const noexcept { return total_; }

  /// Lower edge of bin m in dimension q; edge(q, B_q) == 1.
  double edge(std::size_t q, int m) const noexcept {
    return static_cast<double>(m) / static_cast<double>(bins_[q]);
  }

  /// Half-open intervals [a_m, a_{m+1}); the value 1.0 falls in the last bin.
  /// Values are expected in [0,1]; anything outside is clamped to the grid.
  int assign(std::size_t q, double v) const noexcept;
  BinIndex assign(std::span<const double> values) const;
  std::uint64_t linear_index(std::span<const double> values) const;

  std::uint64_t linearize(std::span<const int> index) const noexcept;
  BinIndex unravel(std::uint64_t linear) const;

  friend bool operator==(const BinningScheme&, const BinningScheme&) = default;

 private:
  FeatureSet features_;
  std::vector<int> bins_;
  std::uint64_t total_ = 1;
};

/// Throws ValidationError when the vector and scheme disagree on features.
BinIndex assign_bin(const FeatureVector& v, const BinningScheme& scheme);

/// Neumaier-compensated running sum; the result is insensitive to summation order
/// up to a few ulps.
class CompensatedSum {
 public:
  void add(double x) noexcept;
  void merge(const CompensatedSum& other) noexcept {
    add(other.sum_);
    add(other.comp_);
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

struct BinCell {
  std::size_t count = 0;
  CompensatedSum outcome_sum;
  std::vector<CompensatedSum> feature_sums;  // one per feature; [0] is confidence

  double mean_confidence() const noexcept {
    return count == 0 ? 0.0 : feature_sums.front().value() / static_cast<double>(count);
  }
  /// Precision, frequency or accuracy depending on the task.
  double rate() const noexcept {
    return count == 0 ? 0.0 : outcome_sum.value() / static_cast<double>(count);
  }
  std::vector<double> mean_features() const;
};

/// Sparse per-bin statistics; bins never hit have N_m = 0.
class BinStats {
 public:
  explicit BinStats(BinningScheme scheme) : scheme_(std::move(scheme)) {}

  const BinningScheme& scheme() const noexcept { return scheme_; }
  std::size_t total() const noexcept { return total_; }
  std::size_t occupied() const noexcept { return cells_.size(); }

  /// `target` is the binary outcome, or a probability for soft targets.
  void add(std::span<const double> values, double target);
  /// Associative and commutative; schemes must match.
  void merge(const BinStats& other);

  const BinCell* find(const BinIndex& index) const;
  std::size_t count(const BinIndex& index) const;
  /// Occupied cells keyed by linear index, ascending.
  const std::map<std::uint64_t, BinCell>& cells() const noexcept { return cells_; }

 private:
  BinningScheme scheme_;
  std::map<std::uint64_t, BinCell> cells_;
  std::size_t total_ = 0;
};

BinStats accumulate(const Dataset& samples, const BinningScheme& scheme);
/// Per-sample soft targets in [0,1] replace the binary outcomes.
BinStats accumulate(const Dataset& samples, std::span<const double> targets,
                    const BinningScheme& scheme);

enum class Task { detection, instance_seg, semantic_seg };

std::string_view to_string(Task t) noexcept;
Task parse_task(std::string_view name);

struct MeasureConfig {
  BinningScheme scheme;
  int min_samples_per_bin = 8;
  Task task = Task::detection;

  void validate() const;
};

struct DeceResult {
  double value = 0.0;
  std::size_t kept_bins = 0;
  std::size_t kept_samples = 0;
  std::size_t total_samples = 0;
  /// No bin reached the sample minimum; value is 0.
  bool degenerate = false;
};

/// Sum over bins with N_m >= min of (N_m / N_kept) * |rate(m) - conf(m)|.
DeceResult dece(const BinStats& stats, const MeasureConfig& cfg);

/// Reliability data marginalised onto one or two features.
struct ReliabilityRow {
  std::vector<std::pair<double, double>> edges;  // per axis (lo, hi)
  std::size_t count = 0;
  double mean_confidence = 0.0;
  double rate = 0.0;
  /// Sample-weighted mean of the per-bin |rate - conf| of the collapsed bins,
  /// i.e. the local calibration error of this cell. Equals |rate - conf| when
  /// nothing is collapsed.
  double gap = 0.0;
};

struct ReliabilityTable {
  std::vector<Feature> axes;
  std::vector<ReliabilityRow> rows;

  void write_csv(std::ostream& out) const;
};

/// Rows only for occupied marginal cells, built from bins that meet the
/// sample minimum. Throws ValidationError for axes outside the scheme.
ReliabilityTable reliability_export(const BinStats& stats, const MeasureConfig& cfg,
                                    std::span<const Feature> axes);

/// Scheme metadata written next to the CSV.
nlohmann::json reliability_metadata(const ReliabilityTable& table, const BinStats& stats,
                                    const MeasureConfig& cfg);

/// Protocol defaults: 20 bins confidence-only detection, 5 per dimension
/// otherwise, 15 per dimension for segmentation.
std::vector<int> default_bins(Task task, const FeatureSet& features);

}  // namespace detcal
