#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "detcal/binning.hpp"
#include "detcal/features.hpp"
#include "detcal/records.hpp"

namespace detcal {

struct ConfidenceDistribution {
  enum class Kind { uniform, beta };
  Kind kind = Kind::uniform;
  double a = 1.0;  // beta shape parameters
  double b = 1.0;
  double low = 0.0;  // uniform range
  double high = 1.0;
};

/// Outcome ~ Bernoulli(confidence): a perfectly calibrated source.
struct IdentityPosterior {};

/// logit P(+) = logit_weight * logit(conf) + sum_f weight_f * f + radial * r^2 + bias,
/// where r^2 = ((u - 0.5)^2 + (v - 0.5)^2) / 0.5 over the record's position
/// (cx, cy for boxes, x, y for pixels). A negative radial term makes the source
/// increasingly overconfident toward the image border.
struct LogisticPosterior {
  double logit_weight = 1.0;
  std::map<Feature, double> weights;
  double radial = 0.0;
  double bias = 0.0;
};

/// Features drawn from one of two Gaussians (truncated to [0,1]^Q).
struct GaussianPairPosterior {
  std::vector<double> mu_pos, mu_neg;
  std::vector<double> sigma_pos, sigma_neg;  // row-major Q x Q
  double positive_fraction = 0.5;
};

/// Features drawn from one of two Libby-Novick multivariate betas.
struct BetaPairPosterior {
  std::vector<double> alpha_pos, lambda_pos;
  std::vector<double> alpha_neg, lambda_neg;
  double positive_fraction = 0.5;
};

using TruePosterior =
    std::variant<IdentityPosterior, LogisticPosterior, GaussianPairPosterior, BetaPairPosterior>;

struct SynthSpec {
  std::size_t n_samples = 10000;
  std::uint64_t seed = 0;
  /// Posterior inputs for the pair families; also selects box vs pixel records.
  FeatureSet features;
  int n_classes = 1;
  std::size_t samples_per_image = 10;
  ConfidenceDistribution confidence;
  TruePosterior posterior;

  void validate() const;
};

SynthSpec synth_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SynthSpec& spec);

struct SynthOutput {
  bool pixel = false;
  std::vector<DetectionRecord> detections;  // matched carries the outcome
  std::vector<PixelRecord> pixels;
  std::vector<double> posteriors;  // true P(+ | record), aligned with the records

  std::size_t size() const noexcept { return posteriors.size(); }
  Dataset dataset(const FeatureSet& features) const;
};

/// Deterministic given spec.seed (std::mt19937_64 with the standard library's
/// distributions).
SynthOutput generate(const SynthSpec& spec);

/// True posterior of `spec.posterior` at a point given in `features` order
/// (confidence first). Position-dependent families read cx/cy or x/y from
/// `features`; missing ones are taken at the image centre.
double true_posterior(const SynthSpec& spec, const FeatureSet& features,
                      std::span<const double> row);

/// D-ECE with each bin's empirical rate replaced by the mean true posterior.
DeceResult true_dece(const Dataset& samples, std::span<const double> posteriors,
                     const MeasureConfig& cfg);

}  // namespace detcal
