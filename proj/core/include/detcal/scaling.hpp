#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "detcal/features.hpp"
#include "detcal/optimizer.hpp"

namespace detcal {

inline constexpr double kDefaultClipEps = 1e-6;

/// Clamp every feature into [eps, 1 - eps].
void clip_features(std::span<double> values, double eps);

/// sigmoid(log_lr + prior_log_odds) without overflow.
double posterior(double log_lr, double prior_log_odds) noexcept;

/// Position-dependent logistic calibration: Gaussian class-conditional
/// densities N(mu+, Sigma+) and N(mu-, Sigma-) over the feature vector. The log
/// likelihood ratio is the difference of the two Gaussian log densities, so the
/// determinant term carries a factor 1/2.
class LogisticModel {
 public:
  /// Covariances are row-major Q x Q. Throws ValidationError unless both are
  /// symmetric (1e-10) and positive definite.
  LogisticModel(FeatureSet features, std::vector<double> mu_pos, std::vector<double> sigma_pos,
                std::vector<double> mu_neg, std::vector<double> sigma_neg,
                double prior_log_odds = 0.0, int class_id = 0,
                double clip_eps = kDefaultClipEps);

  const FeatureSet& features() const noexcept { return features_; }
  std::size_t dim() const noexcept { return features_.size(); }
  const std::vector<double>& mu_pos() const noexcept { return mu_pos_; }
  const std::vector<double>& mu_neg() const noexcept { return mu_neg_; }
  const std::vector<double>& sigma_pos() const noexcept { return sigma_pos_; }
  const std::vector<double>& sigma_neg() const noexcept { return sigma_neg_; }
  double prior_log_odds() const noexcept { return prior_log_odds_; }
  int class_id() const noexcept { return class_id_; }
  double clip_eps() const noexcept { return clip_eps_; }

  void set_class_id(int id) noexcept { class_id_ = id; }
  void set_prior_log_odds(double b) noexcept { prior_log_odds_ = b; }

  /// log N(s; mu+, Sigma+) - log N(s; mu-, Sigma-), no clipping.
  double log_lr(std::span<const double> s) const;
  /// posterior(log_lr(clip(s)), prior_log_odds).
  double apply(std::span<const double> s) const;

 private:
  FeatureSet features_;
  std::vector<double> mu_pos_, sigma_pos_, mu_neg_, sigma_neg_;
  double prior_log_odds_;
  int class_id_;
  double clip_eps_;
  // Cholesky factors (row-major lower triangles) and sum(log diag).
  std::vector<double> chol_pos_, chol_neg_;
  double half_logdet_pos_ = 0.0;
  double half_logdet_neg_ = 0.0;
};

/// Multivariate beta calibration with Libby-Novick class-conditional densities
/// over s*_q = s_q / (1 - s_q).
class BetaModel {
 public:
  /// alpha vectors hold (alpha_0, ..., alpha_Q); lambda vectors hold
  /// (lambda_1, ..., lambda_Q) = beta_q / beta_0. All must be positive.
  BetaModel(FeatureSet features, std::vector<double> alpha_pos, std::vector<double> lambda_pos,
            std::vector<double> alpha_neg, std::vector<double> lambda_neg,
            double prior_log_odds = 0.0, int class_id = 0, double clip_eps = kDefaultClipEps);

  const FeatureSet& features() const noexcept { return features_; }
  std::size_t dim() const noexcept { return features_.size(); }
  const std::vector<double>& alpha_pos() const noexcept { return alpha_pos_; }
  const std::vector<double>& alpha_neg() const noexcept { return alpha_neg_; }
  const std::vector<double>& lambda_pos() const noexcept { return lambda_pos_; }
  const std::vector<double>& lambda_neg() const noexcept { return lambda_neg_; }
  double prior_log_odds() const noexcept { return prior_log_odds_; }
  int class_id() const noexcept { return class_id_; }
  double clip_eps() const noexcept { return clip_eps_; }

  void set_class_id(int id) noexcept { class_id_ = id; }

  /// Log likelihood ratio of the two Libby-Novick densities. Throws
  /// ValidationError if a component is not in (0,1).
  double log_lr(std::span<const double> s) const;
  double apply(std::span<const double> s) const;

 private:
  FeatureSet features_;
  std::vector<double> alpha_pos_, lambda_pos_, alpha_neg_, lambda_neg_;
  double prior_log_odds_;
  int class_id_;
  double clip_eps_;
  double log_beta_pos_ = 0.0;
  double log_beta_neg_ = 0.0;
};

/// log B(alpha) = sum log Gamma(alpha_q) - log Gamma(sum alpha_q).
double log_multivariate_beta(std::span<const double> alpha);

double logistic_lr(const LogisticModel& model, const FeatureVector& v);
double beta_lr(const BetaModel& model, const FeatureVector& v);

struct ScalingFitOptions {
  OptimizerOptions optimizer;
  /// Fix the prior log odds at 0 (equal class priors) instead of learning it.
  bool uniform_prior = false;
  double clip_eps = kDefaultClipEps;
  /// Added to the diagonal of the moment covariances.
  double covariance_ridge = 1e-6;
  /// Share one covariance between both classes. Defaults to true for a single
  /// feature (the classic monotone logistic map) and false otherwise.
  std::optional<bool> tied_covariance;
};

/// Mean negative log likelihood of the logistic posterior as a function of the
/// packed parameter vector, with its analytic gradient.
///
/// Layout: mu+ (Q), log diag L+ (Q), strict lower L+ (Q(Q-1)/2), mu- (Q),
/// [log diag L-, strict lower L-] unless tied, [prior log odds] unless uniform.
class LogisticNll {
 public:
  LogisticNll(const Dataset& samples, bool tied, bool uniform_prior,
              double clip_eps = kDefaultClipEps);

  std::size_t num_params() const noexcept;
  double operator()(std::span<const double> x, std::span<double> grad) const;
  double value(std::span<const double> x) const;

  /// Packs a model's parameters; throws ValidationError if tied but the model's
  /// covariances differ.
  std::vector<double> pack(const LogisticModel& model) const;
  LogisticModel unpack(std::span<const double> x, int class_id = 0) const;

 private:
  FeatureSet features_;
  std::size_t q_;
  bool tied_;
  bool uniform_prior_;
  double clip_eps_;
  std::vector<double> values_;  // clipped, row-major
  std::vector<double> outcomes_;
};

/// Mean negative log likelihood of the beta posterior.
///
/// Layout: log alpha+ (Q+1), log lambda+ (Q), log alpha- (Q+1), log lambda- (Q),
/// [prior log odds] unless uniform.
class BetaNll {
 public:
  BetaNll(const Dataset& samples, bool uniform_prior, double clip_eps = kDefaultClipEps);

  std::size_t num_params() const noexcept;
  double operator()(std::span<const double> x, std::span<double> grad) const;
  double value(std::span<const double> x) const;

  std::vector<double> pack(const BetaModel& model) const;
  BetaModel unpack(std::span<const double> x, int class_id = 0) const;

 private:
  FeatureSet features_;
  std::size_t q_;
  bool uniform_prior_;
  double clip_eps_;
  std::vector<double> log_odds_;  // log s*, row-major
  std::vector<double> odds_;      // s*, row-major
  std::vector<double> outcomes_;
};

/// Moment initialisation followed by L-BFGS on the NLL; returns whichever of
/// the two points has the lower NLL. Throws FitError if a class has fewer than
/// Q + 1 samples or its covariance is singular.
LogisticModel fit_logistic(const Dataset& samples, const ScalingFitOptions& opts = {});

/// Starts from alpha = lambda = 1 and the empirical log odds, then L-BFGS on
/// the NLL. The result never has a higher NLL than the start. Throws FitError
/// if a class is absent.
BetaModel fit_beta(const Dataset& samples, const ScalingFitOptions& opts = {});

double apply_scaling(const LogisticModel& model, const FeatureVector& v);
double apply_scaling(const BetaModel& model, const FeatureVector& v);

nlohmann::json to_json(const LogisticModel& model);
nlohmann::json to_json(const BetaModel& model);
LogisticModel logistic_from_json(const nlohmann::json& j);
BetaModel beta_from_json(const nlohmann::json& j);

}  // namespace detcal
