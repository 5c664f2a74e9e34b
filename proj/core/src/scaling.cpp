#include "detcal/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <boost/math/special_functions/digamma.hpp>
#include <nlohmann/json.hpp>

#include "detcal/error.hpp"

namespace detcal {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

double softplus(double x) noexcept {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

// Solves L u = r in place for a row-major lower-triangular L.
void forward_solve(const double* L, std::size_t q, double* r) noexcept {
  for (std::size_t i = 0; i < q; ++i) {
    double acc = r[i];
    for (std::size_t j = 0; j < i; ++j) acc -= L[i * q + j] * r[j];
    r[i] = acc / L[i * q + i];
  }
}

// Solves L^T w = u in place.
void backward_solve(const double* L, std::size_t q, double* u) noexcept {
  for (std::size_t i = q; i-- > 0;) {
    double acc = u[i];
    for (std::size_t j = i + 1; j < q; ++j) acc -= L[j * q + i] * u[j];
    u[i] = acc / L[i * q + i];
  }
}

double mahalanobis(const std::vector<double>& chol, const std::vector<double>& mu,
                   std::span<const double> s, std::vector<double>& scratch) noexcept {
  const std::size_t q = mu.size();
  scratch.resize(q);
  for (std::size_t i = 0; i < q; ++i) scratch[i] = s[i] - mu[i];
  forward_solve(chol.data(), q, scratch.data());
  double acc = 0.0;
  for (std::size_t i = 0; i < q; ++i) acc += scratch[i] * scratch[i];
  return acc;
}

void check_finite(const std::vector<double>& v, const char* what) {
  for (const double x : v) {
    if (!std::isfinite(x)) throw ValidationError(std::string(what) + " has non-finite entries");
  }
}

// Cholesky factor of a symmetric positive-definite row-major matrix.
std::vector<double> cholesky(const std::vector<double>& sigma, std::size_t q, const char* name) {
  if (sigma.size() != q * q) {
    throw ValidationError(std::string(name) + " must be " + std::to_string(q) + "x" +
                          std::to_string(q));
  }
  check_finite(sigma, name);
  for (std::size_t i = 0; i < q; ++i) {
    for (std::size_t j = i + 1; j < q; ++j) {
      if (std::abs(sigma[i * q + j] - sigma[j * q + i]) > 1e-10) {
        throw ValidationError(std::string(name) + " is not symmetric");
      }
    }
  }
  const Eigen::Map<const RowMatrix> m(sigma.data(), static_cast<Eigen::Index>(q),
                                      static_cast<Eigen::Index>(q));
  const Eigen::LLT<RowMatrix> llt(m);
  if (llt.info() != Eigen::Success) {
    throw ValidationError(std::string(name) + " is not positive definite");
  }
  RowMatrix L = llt.matrixL();
  for (std::size_t i = 0; i < q; ++i) {
    if (!(L(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) > 0.0)) {
      throw ValidationError(std::string(name) + " is not positive definite");
    }
  }
  return {L.data(), L.data() + L.size()};
}

double half_logdet(const std::vector<double>& chol, std::size_t q) noexcept {
  double acc = 0.0;
  for (std::size_t i = 0; i < q; ++i) acc += std::log(chol[i * q + i]);
  return acc;
}

std::vector<std::vector<double>> to_rows(const std::vector<double>& m, std::size_t q) {
  std::vector<std::vector<double>> rows(q);
  for (std::size_t i = 0; i < q; ++i) rows[i].assign(m.begin() + i * q, m.begin() + (i + 1) * q);
  return rows;
}

std::vector<double> from_rows(const nlohmann::json& j, std::size_t q) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  if (rows.size() != q) throw ValidationError("covariance has the wrong number of rows");
  std::vector<double> out;
  for (const auto& r : rows) {
    if (r.size() != q) throw ValidationError("covariance has the wrong number of columns");
    out.insert(out.end(), r.begin(), r.end());
  }
  return out;
}

void check_clip_eps(double eps) {
  if (!(eps > 0.0 && eps < 0.5)) throw ValidationError("clip_eps must lie in (0, 0.5)");
}

}  // namespace

void clip_features(std::span<double> values, double eps) {
  for (auto& v : values) v = std::clamp(v, eps, 1.0 - eps);
}

double posterior(double log_lr, double prior_log_odds) noexcept {
  const double z = log_lr + prior_log_odds;
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// --- LogisticModel -----------------------------------------------------------

LogisticModel::LogisticModel(FeatureSet features, std::vector<double> mu_pos,
                             std::vector<double> sigma_pos, std::vector<double> mu_neg,
                             std::vector<double> sigma_neg, double prior_log_odds, int class_id,
                             double clip_eps)
    : features_(std::move(features)),
      mu_pos_(std::move(mu_pos)),
      sigma_pos_(std::move(sigma_pos)),
      mu_neg_(std::move(mu_neg)),
      sigma_neg_(std::move(sigma_neg)),
      prior_log_odds_(prior_log_odds),
      class_id_(class_id),
      clip_eps_(clip_eps) {
  const std::size_t q = features_.size();
  if (mu_pos_.size() != q || mu_neg_.size() != q) {
    throw ValidationError("mean vectors must have one entry per feature");
  }
  check_finite(mu_pos_, "positive mean");
  check_finite(mu_neg_, "negative mean");
  if (!std::isfinite(prior_log_odds_)) throw ValidationError("prior log odds must be finite");
  check_clip_eps(clip_eps_);
  chol_pos_ = cholesky(sigma_pos_, q, "positive covariance");
  chol_neg_ = cholesky(sigma_neg_, q, "negative covariance");
  half_logdet_pos_ = half_logdet(chol_pos_, q);
  half_logdet_neg_ = half_logdet(chol_neg_, q);
}

double LogisticModel::log_lr(std::span<const double> s) const {
  if (s.size() != dim()) throw ValidationError("feature vector has the wrong dimension");
  thread_local std::vector<double> scratch;
  const double m_pos = mahalanobis(chol_pos_, mu_pos_, s, scratch);
  const double m_neg = mahalanobis(chol_neg_, mu_neg_, s, scratch);
  return 0.5 * (m_neg - m_pos) + (half_logdet_neg_ - half_logdet_pos_);
}

double LogisticModel::apply(std::span<const double> s) const {
  thread_local std::vector<double> v;
  v.assign(s.begin(), s.end());
  clip_features(v, clip_eps_);
  return posterior(log_lr(v), prior_log_odds_);
}

// --- BetaModel ---------------------------------------------------------------

double log_multivariate_beta(std::span<const double> alpha) {
  double sum = 0.0;
  double acc = 0.0;
  for (const double a : alpha) {
    acc += std::lgamma(a);
    sum += a;
  }
  return acc - std::lgamma(sum);
}

BetaModel::BetaModel(FeatureSet features, std::vector<double> alpha_pos,
                     std::vector<double> lambda_pos, std::vector<double> alpha_neg,
                     std::vector<double> lambda_neg, double prior_log_odds, int class_id,
                     double clip_eps)
    : features_(std::move(features)),
      alpha_pos_(std::move(alpha_pos)),
      lambda_pos_(std::move(lambda_pos)),
      alpha_neg_(std::move(alpha_neg)),
      lambda_neg_(std::move(lambda_neg)),
      prior_log_odds_(prior_log_odds),
      class_id_(class_id),
      clip_eps_(clip_eps) {
  const std::size_t q = features_.size();
  if (alpha_pos_.size() != q + 1 || alpha_neg_.size() != q + 1) {
    throw ValidationError("alpha vectors must have Q + 1 entries");
  }
  if (lambda_pos_.size() != q || lambda_neg_.size() != q) {
    throw ValidationError("lambda vectors must have Q entries");
  }
  for (const auto* v : {&alpha_pos_, &alpha_neg_, &lambda_pos_, &lambda_neg_}) {
    for (const double x : *v) {
      if (!std::isfinite(x) || !(x > 0.0)) {
        throw ValidationError("beta shape parameters must be positive and finite");
      }
    }
  }
  if (!std::isfinite(prior_log_odds_)) throw ValidationError("prior log odds must be finite");
  check_clip_eps(clip_eps_);
  log_beta_pos_ = log_multivariate_beta(alpha_pos_);
  log_beta_neg_ = log_multivariate_beta(alpha_neg_);
}

double BetaModel::log_lr(std::span<const double> s) const {
  const std::size_t q = dim();
  if (s.size() != q) throw ValidationError("feature vector has the wrong dimension");
  double linear = 0.0;
  double sum_pos = 0.0;
  double sum_neg = 0.0;
  for (std::size_t i = 0; i < q; ++i) {
    if (!(s[i] > 0.0 && s[i] < 1.0)) {
      throw ValidationError("beta calibration needs features strictly inside (0,1)");
    }
    const double log_odds = std::log(s[i]) - std::log1p(-s[i]);
    const double odds = s[i] / (1.0 - s[i]);
    const double ap = alpha_pos_[i + 1];
    const double an = alpha_neg_[i + 1];
    linear += ap * std::log(lambda_pos_[i]) - an * std::log(lambda_neg_[i]) + (ap - an) * log_odds;
    sum_pos += lambda_pos_[i] * odds;
    sum_neg += lambda_neg_[i] * odds;
  }
  double total_pos = 0.0;
  double total_neg = 0.0;
  for (std::size_t i = 0; i <= q; ++i) {
    total_pos += alpha_pos_[i];
    total_neg += alpha_neg_[i];
  }
  return linear + total_neg * std::log1p(sum_neg) - total_pos * std::log1p(sum_pos) +
         (log_beta_neg_ - log_beta_pos_);
}

double BetaModel::apply(std::span<const double> s) const {
  thread_local std::vector<double> v;
  v.assign(s.begin(), s.end());
  for (const double x : v) {
    if (std::isnan(x)) throw ValidationError("feature is NaN");
  }
  clip_features(v, clip_eps_);
  return posterior(log_lr(v), prior_log_odds_);
}

double logistic_lr(const LogisticModel& model, const FeatureVector& v) {
  if (!(v.features == model.features())) throw ValidationError("feature vector does not match model");
  return model.log_lr(v.values);
}

double beta_lr(const BetaModel& model, const FeatureVector& v) {
  if (!(v.features == model.features())) throw ValidationError("feature vector does not match model");
  return model.log_lr(v.values);
}

double apply_scaling(const LogisticModel& model, const FeatureVector& v) {
  if (!(v.features == model.features())) throw ValidationError("feature vector does not match model");
  return model.apply(v.values);
}

double apply_scaling(const BetaModel& model, const FeatureVector& v) {
  if (!(v.features == model.features())) throw ValidationError("feature vector does not match model");
  return model.apply(v.values);
}

// --- LogisticNll -------------------------------------------------------------

namespace {

std::size_t tri(std::size_t q) { return q * (q + 1) / 2; }

// Expands (log diag, strict lower) into a row-major lower-triangular factor.
void build_factor(const double* p, std::size_t q, std::vector<double>& L) {
  L.assign(q * q, 0.0);
  for (std::size_t i = 0; i < q; ++i) L[i * q + i] = std::exp(p[i]);
  std::size_t k = q;
  for (std::size_t i = 1; i < q; ++i) {
    for (std::size_t j = 0; j < i; ++j) L[i * q + j] = p[k++];
  }
}

void pack_factor(const std::vector<double>& sigma, std::size_t q, std::vector<double>& out) {
  const auto L = cholesky(sigma, q, "covariance");
  for (std::size_t i = 0; i < q; ++i) out.push_back(std::log(L[i * q + i]));
  for (std::size_t i = 1; i < q; ++i) {
    for (std::size_t j = 0; j < i; ++j) out.push_back(L[i * q + j]);
  }
}

std::vector<double> gram(const std::vector<double>& L, std::size_t q) {
  std::vector<double> s(q * q, 0.0);
  for (std::size_t i = 0; i < q; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k <= j; ++k) acc += L[i * q + k] * L[j * q + k];
      s[i * q + j] = acc;
      s[j * q + i] = acc;
    }
  }
  return s;
}

}  // namespace

LogisticNll::LogisticNll(const Dataset& samples, bool tied, bool uniform_prior, double clip_eps)
    : features_(samples.features()),
      q_(samples.dim()),
      tied_(tied),
      uniform_prior_(uniform_prior),
      clip_eps_(clip_eps) {
  check_clip_eps(clip_eps_);
  values_ = samples.values();
  clip_features(values_, clip_eps_);
  outcomes_.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) outcomes_.push_back(samples.outcome(i) ? 1.0 : 0.0);
}

std::size_t LogisticNll::num_params() const noexcept {
  const std::size_t cov = tri(q_);
  return (tied_ ? 2 * q_ + cov : 2 * (q_ + cov)) + (uniform_prior_ ? 0 : 1);
}

double LogisticNll::value(std::span<const double> x) const {
  std::vector<double> grad(num_params());
  return (*this)(x, grad);
}

double LogisticNll::operator()(std::span<const double> x, std::span<double> grad) const {
  const std::size_t q = q_;
  const std::size_t cov = tri(q);
  const double* mu_pos = x.data();
  const double* fac_pos = mu_pos + q;
  const double* mu_neg = fac_pos + cov;
  const double* fac_neg = tied_ ? fac_pos : mu_neg + q;
  const double prior = uniform_prior_ ? 0.0 : x[num_params() - 1];

  std::vector<double> L_pos, L_neg;
  build_factor(fac_pos, q, L_pos);
  build_factor(fac_neg, q, L_neg);
  const double hld_pos = half_logdet(L_pos, q);
  const double hld_neg = half_logdet(L_neg, q);

  std::fill(grad.begin(), grad.end(), 0.0);
  double* g_mu_pos = grad.data();
  double* g_fac_pos = g_mu_pos + q;
  double* g_mu_neg = g_fac_pos + cov;
  double* g_fac_neg = tied_ ? g_fac_pos : g_mu_neg + q;

  // dz/dL_ij = w_i u_j for the positive class (sign flipped for the negative);
  // accumulated as full matrices and folded into the packed layout at the end.
  std::vector<double> gL_pos(q * q, 0.0), gL_neg(q * q, 0.0);
  std::vector<double> u_pos(q), w_pos(q), u_neg(q), w_neg(q);
  const std::size_t n = outcomes_.size();
  const double inv_n = n == 0 ? 0.0 : 1.0 / static_cast<double>(n);
  double loss = 0.0;
  double g_total = 0.0;

  for (std::size_t i = 0; i < n; ++i) {
    const double* s = values_.data() + i * q;
    for (std::size_t k = 0; k < q; ++k) {
      u_pos[k] = s[k] - mu_pos[k];
      u_neg[k] = s[k] - mu_neg[k];
    }
    forward_solve(L_pos.data(), q, u_pos.data());
    forward_solve(L_neg.data(), q, u_neg.data());
    double m_pos = 0.0, m_neg = 0.0;
    for (std::size_t k = 0; k < q; ++k) {
      m_pos += u_pos[k] * u_pos[k];
      m_neg += u_neg[k] * u_neg[k];
    }
    const double z = 0.5 * (m_neg - m_pos) + (hld_neg - hld_pos) + prior;
    const double y = outcomes_[i];
    loss += y > 0.5 ? softplus(-z) : softplus(z);
    const double g = (posterior(z, 0.0) - y) * inv_n;
    g_total += g;

    w_pos = u_pos;
    w_neg = u_neg;
    backward_solve(L_pos.data(), q, w_pos.data());
    backward_solve(L_neg.data(), q, w_neg.data());
    for (std::size_t r = 0; r < q; ++r) {
      g_mu_pos[r] += g * w_pos[r];
      g_mu_neg[r] -= g * w_neg[r];
      for (std::size_t c = 0; c <= r; ++c) {
        gL_pos[r * q + c] += g * w_pos[r] * u_pos[c];
        gL_neg[r * q + c] -= g * w_neg[r] * u_neg[c];
      }
    }
  }

  // Fold into (log diag, strict lower). The -log|L+| and +log|L-| terms
  // contribute -1 and +1 per diagonal entry times sum(g).
  auto fold = [&](const std::vector<double>& gL, const std::vector<double>& L, double* out,
                  double diag_shift) {
    for (std::size_t r = 0; r < q; ++r) out[r] += gL[r * q + r] * L[r * q + r] + diag_shift;
    std::size_t k = q;
    for (std::size_t r = 1; r < q; ++r) {
      for (std::size_t c = 0; c < r; ++c) out[k++] += gL[r * q + c];
    }
  };
  fold(gL_pos, L_pos, g_fac_pos, -g_total);
  fold(gL_neg, L_neg, g_fac_neg, g_total);
  if (!uniform_prior_) grad[num_params() - 1] = g_total;
  return loss * inv_n;
}

std::vector<double> LogisticNll::pack(const LogisticModel& model) const {
  if (!(model.features() == features_)) throw ValidationError("model features do not match data");
  if (tied_) {
    for (std::size_t i = 0; i < model.sigma_pos().size(); ++i) {
      if (std::abs(model.sigma_pos()[i] - model.sigma_neg()[i]) > 1e-12) {
        throw ValidationError("tied parameterisation needs equal covariances");
      }
    }
  }
  std::vector<double> x;
  x.reserve(num_params());
  x.insert(x.end(), model.mu_pos().begin(), model.mu_pos().end());
  pack_factor(model.sigma_pos(), q_, x);
  x.insert(x.end(), model.mu_neg().begin(), model.mu_neg().end());
  if (!tied_) pack_factor(model.sigma_neg(), q_, x);
  if (!uniform_prior_) x.push_back(model.prior_log_odds());
  return x;
}

LogisticModel LogisticNll::unpack(std::span<const double> x, int class_id) const {
  if (x.size() != num_params()) throw ValidationError("parameter vector has the wrong size");
  const std::size_t q = q_;
  const std::size_t cov = tri(q);
  std::vector<double> L_pos, L_neg;
  build_factor(x.data() + q, q, L_pos);
  const double* mu_neg = x.data() + q + cov;
  build_factor(tied_ ? x.data() + q : mu_neg + q, q, L_neg);
  return LogisticModel(features_, std::vector<double>(x.data(), x.data() + q), gram(L_pos, q),
                       std::vector<double>(mu_neg, mu_neg + q), gram(L_neg, q),
                       uniform_prior_ ? 0.0 : x[num_params() - 1], class_id, clip_eps_);
}

// --- BetaNll -----------------------------------------------------------------

BetaNll::BetaNll(const Dataset& samples, bool uniform_prior, double clip_eps)
    : features_(samples.features()),
      q_(samples.dim()),
      uniform_prior_(uniform_prior),
      clip_eps_(clip_eps) {
  check_clip_eps(clip_eps_);
  std::vector<double> v = samples.values();
  clip_features(v, clip_eps_);
  log_odds_.resize(v.size());
  odds_.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    log_odds_[i] = std::log(v[i]) - std::log1p(-v[i]);
    odds_[i] = v[i] / (1.0 - v[i]);
  }
  outcomes_.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) outcomes_.push_back(samples.outcome(i) ? 1.0 : 0.0);
}

std::size_t BetaNll::num_params() const noexcept {
  return 2 * (2 * q_ + 1) + (uniform_prior_ ? 0 : 1);
}

double BetaNll::value(std::span<const double> x) const {
  std::vector<double> grad(num_params());
  return (*this)(x, grad);
}

double BetaNll::operator()(std::span<const double> x, std::span<double> grad) const {
  const std::size_t q = q_;
  const std::size_t block = 2 * q + 1;
  std::vector<double> a_pos(q + 1), l_pos(q), a_neg(q + 1), l_neg(q);
  std::vector<double> log_l_pos(q), log_l_neg(q);
  for (std::size_t i = 0; i <= q; ++i) {
    a_pos[i] = std::exp(x[i]);
    a_neg[i] = std::exp(x[block + i]);
  }
  for (std::size_t i = 0; i < q; ++i) {
    log_l_pos[i] = x[q + 1 + i];
    log_l_neg[i] = x[block + q + 1 + i];
    l_pos[i] = std::exp(log_l_pos[i]);
    l_neg[i] = std::exp(log_l_neg[i]);
  }
  const double prior = uniform_prior_ ? 0.0 : x[num_params() - 1];
  double total_pos = 0.0, total_neg = 0.0;
  for (std::size_t i = 0; i <= q; ++i) {
    total_pos += a_pos[i];
    total_neg += a_neg[i];
  }
  const double lb_pos = log_multivariate_beta(a_pos);
  const double lb_neg = log_multivariate_beta(a_neg);

  std::fill(grad.begin(), grad.end(), 0.0);
  double* g_pos = grad.data();
  double* g_neg = grad.data() + block;

  const std::size_t n = outcomes_.size();
  const double inv_n = n == 0 ? 0.0 : 1.0 / static_cast<double>(n);
  double loss = 0.0;
  double g_total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* ls = log_odds_.data() + i * q;
    const double* so = odds_.data() + i * q;
    double lin_pos = 0.0, lin_neg = 0.0, sum_pos = 0.0, sum_neg = 0.0;
    for (std::size_t k = 0; k < q; ++k) {
      lin_pos += a_pos[k + 1] * (log_l_pos[k] + ls[k]);
      lin_neg += a_neg[k + 1] * (log_l_neg[k] + ls[k]);
      sum_pos += l_pos[k] * so[k];
      sum_neg += l_neg[k] * so[k];
    }
    const double log1p_pos = std::log1p(sum_pos);
    const double log1p_neg = std::log1p(sum_neg);
    const double z = (lin_pos - total_pos * log1p_pos - lb_pos) -
                     (lin_neg - total_neg * log1p_neg - lb_neg) + prior;
    const double y = outcomes_[i];
    loss += y > 0.5 ? softplus(-z) : softplus(z);
    const double g = (posterior(z, 0.0) - y) * inv_n;
    g_total += g;

    g_pos[0] += g * a_pos[0] * (-log1p_pos);
    g_neg[0] -= g * a_neg[0] * (-log1p_neg);
    for (std::size_t k = 0; k < q; ++k) {
      g_pos[k + 1] += g * a_pos[k + 1] * (log_l_pos[k] + ls[k] - log1p_pos);
      g_neg[k + 1] -= g * a_neg[k + 1] * (log_l_neg[k] + ls[k] - log1p_neg);
      g_pos[q + 1 + k] += g * (a_pos[k + 1] - total_pos * l_pos[k] * so[k] / (1.0 + sum_pos));
      g_neg[q + 1 + k] -= g * (a_neg[k + 1] - total_neg * l_neg[k] * so[k] / (1.0 + sum_neg));
    }
  }

  // -log B(alpha+) + log B(alpha-) does not depend on the sample.
  const double psi_total_pos = boost::math::digamma(total_pos);
  const double psi_total_neg = boost::math::digamma(total_neg);
  for (std::size_t k = 0; k <= q; ++k) {
    g_pos[k] -= g_total * a_pos[k] * (boost::math::digamma(a_pos[k]) - psi_total_pos);
    g_neg[k] += g_total * a_neg[k] * (boost::math::digamma(a_neg[k]) - psi_total_neg);
  }
  if (!uniform_prior_) grad[num_params() - 1] = g_total;
  return loss * inv_n;
}

std::vector<double> BetaNll::pack(const BetaModel& model) const {
  if (!(model.features() == features_)) throw ValidationError("model features do not match data");
  std::vector<double> x;
  x.reserve(num_params());
  for (const double a : model.alpha_pos()) x.push_back(std::log(a));
  for (const double l : model.lambda_pos()) x.push_back(std::log(l));
  for (const double a : model.alpha_neg()) x.push_back(std::log(a));
  for (const double l : model.lambda_neg()) x.push_back(std::log(l));
  if (!uniform_prior_) x.push_back(model.prior_log_odds());
  return x;
}

BetaModel BetaNll::unpack(std::span<const double> x, int class_id) const {
  if (x.size() != num_params()) throw ValidationError("parameter vector has the wrong size");
  const std::size_t q = q_;
  const std::size_t block = 2 * q + 1;
  auto exps = [&](std::size_t from, std::size_t count) {
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = std::exp(x[from + i]);
    return out;
  };
  return BetaModel(features_, exps(0, q + 1), exps(q + 1, q), exps(block, q + 1),
                   exps(block + q + 1, q), uniform_prior_ ? 0.0 : x[num_params() - 1], class_id,
                   clip_eps_);
}

// --- fitting -----------------------------------------------------------------

namespace {

struct ClassMoments {
  std::size_t n = 0;
  std::vector<double> mean;
  std::vector<double> scatter;  // sum of outer products of deviations
};

ClassMoments moments(const std::vector<double>& values, const Dataset& samples, bool positive) {
  const std::size_t q = samples.dim();
  ClassMoments m;
  m.mean.assign(q, 0.0);
  m.scatter.assign(q * q, 0.0);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples.outcome(i) != positive) continue;
    ++m.n;
    for (std::size_t k = 0; k < q; ++k) m.mean[k] += values[i * q + k];
  }
  if (m.n == 0) return m;
  for (auto& v : m.mean) v /= static_cast<double>(m.n);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples.outcome(i) != positive) continue;
    for (std::size_t r = 0; r < q; ++r) {
      const double dr = values[i * q + r] - m.mean[r];
      for (std::size_t c = 0; c < q; ++c) m.scatter[r * q + c] += dr * (values[i * q + c] - m.mean[c]);
    }
  }
  return m;
}

void require_class_counts(std::size_t n_pos, std::size_t n_neg, std::size_t minimum) {
  if (n_pos < minimum) {
    throw FitError("positive class has " + std::to_string(n_pos) + " samples, needs at least " +
                   std::to_string(minimum));
  }
  if (n_neg < minimum) {
    throw FitError("negative class has " + std::to_string(n_neg) + " samples, needs at least " +
                   std::to_string(minimum));
  }
}

}  // namespace

LogisticModel fit_logistic(const Dataset& samples, const ScalingFitOptions& opts) {
  const std::size_t q = samples.dim();
  const bool tied = opts.tied_covariance.value_or(q == 1);
  check_clip_eps(opts.clip_eps);

  std::vector<double> values = samples.values();
  clip_features(values, opts.clip_eps);
  const ClassMoments pos = moments(values, samples, true);
  const ClassMoments neg = moments(values, samples, false);
  // A pooled covariance is estimable from one sample per class; separate ones need Q + 1.
  require_class_counts(pos.n, neg.n, tied ? 1 : q + 1);

  auto covariance = [&](const std::vector<double>& scatter, std::size_t n) {
    std::vector<double> s(q * q);
    for (std::size_t k = 0; k < s.size(); ++k) s[k] = scatter[k] / static_cast<double>(n);
    for (std::size_t k = 0; k < q; ++k) s[k * q + k] += opts.covariance_ridge;
    return s;
  };
  std::vector<double> sigma_pos, sigma_neg;
  if (tied) {
    std::vector<double> pooled(q * q);
    for (std::size_t k = 0; k < pooled.size(); ++k) pooled[k] = pos.scatter[k] + neg.scatter[k];
    sigma_pos = covariance(pooled, pos.n + neg.n);
    sigma_neg = sigma_pos;
  } else {
    sigma_pos = covariance(pos.scatter, pos.n);
    sigma_neg = covariance(neg.scatter, neg.n);
  }
  const double prior =
      opts.uniform_prior ? 0.0 : std::log(static_cast<double>(pos.n) / static_cast<double>(neg.n));

  std::optional<LogisticModel> init;
  try {
    init.emplace(samples.features(), pos.mean, sigma_pos, neg.mean, sigma_neg, prior, 0,
                 opts.clip_eps);
  } catch (const ValidationError&) {
    // Name the class whose moments failed.
    try {
      (void)cholesky(sigma_pos, q, "positive covariance");
    } catch (const ValidationError&) {
      throw FitError("covariance of the positive class is singular");
    }
    throw FitError("covariance of the negative class is singular");
  }

  const LogisticNll nll(samples, tied, opts.uniform_prior, opts.clip_eps);
  const std::vector<double> x0 = nll.pack(*init);
  const double f0 = nll.value(x0);
  const auto result = minimize_lbfgs(
      [&](std::span<const double> x, std::span<double> g) { return nll(x, g); }, x0,
      opts.optimizer);
  if (std::isfinite(result.value) && result.value < f0) {
    try {
      return nll.unpack(result.x);
    } catch (const ValidationError&) {
      // Degenerate factor (e.g. underflowed variance); keep the moment fit.
    }
  }
  return *init;
}

BetaModel fit_beta(const Dataset& samples, const ScalingFitOptions& opts) {
  const std::size_t q = samples.dim();
  check_clip_eps(opts.clip_eps);
  const std::size_t n_pos = samples.positives();
  require_class_counts(n_pos, samples.size() - n_pos, 1);

  const double prior = opts.uniform_prior
                           ? 0.0
                           : std::log(static_cast<double>(n_pos) /
                                      static_cast<double>(samples.size() - n_pos));
  const BetaModel init(samples.features(), std::vector<double>(q + 1, 1.0),
                       std::vector<double>(q, 1.0), std::vector<double>(q + 1, 1.0),
                       std::vector<double>(q, 1.0), prior, 0, opts.clip_eps);
  const BetaNll nll(samples, opts.uniform_prior, opts.clip_eps);
  const std::vector<double> x0 = nll.pack(init);
  const double f0 = nll.value(x0);
  const auto result = minimize_lbfgs(
      [&](std::span<const double> x, std::span<double> g) { return nll(x, g); }, x0,
      opts.optimizer);
  if (std::isfinite(result.value) && result.value < f0) {
    try {
      return nll.unpack(result.x);
    } catch (const ValidationError&) {
    }
  }
  return init;
}

// --- serialization -----------------------------------------------------------

nlohmann::json to_json(const LogisticModel& model) {
  const std::size_t q = model.dim();
  return {{"type", "logistic"},
          {"class_id", model.class_id()},
          {"feature_names", model.features().names()},
          {"params",
           {{"mu_pos", model.mu_pos()},
            {"mu_neg", model.mu_neg()},
            {"sigma_pos", to_rows(model.sigma_pos(), q)},
            {"sigma_neg", to_rows(model.sigma_neg(), q)}}},
          {"prior_log_odds", model.prior_log_odds()},
          {"clip_eps", model.clip_eps()}};
}

nlohmann::json to_json(const BetaModel& model) {
  return {{"type", "beta"},
          {"class_id", model.class_id()},
          {"feature_names", model.features().names()},
          {"params",
           {{"alpha_pos", model.alpha_pos()},
            {"alpha_neg", model.alpha_neg()},
            {"lambda_pos", model.lambda_pos()},
            {"lambda_neg", model.lambda_neg()}}},
          {"prior_log_odds", model.prior_log_odds()},
          {"clip_eps", model.clip_eps()}};
}

LogisticModel logistic_from_json(const nlohmann::json& j) {
  if (j.at("type").get<std::string>() != "logistic") throw ParseError("not a logistic model");
  const auto names = j.at("feature_names").get<std::vector<std::string>>();
  FeatureSet features = FeatureSet::from_names(names);
  const std::size_t q = features.size();
  const auto& p = j.at("params");
  return LogisticModel(std::move(features), p.at("mu_pos").get<std::vector<double>>(),
                       from_rows(p.at("sigma_pos"), q), p.at("mu_neg").get<std::vector<double>>(),
                       from_rows(p.at("sigma_neg"), q), j.at("prior_log_odds").get<double>(),
                       j.at("class_id").get<int>(), j.value("clip_eps", kDefaultClipEps));
}

BetaModel beta_from_json(const nlohmann::json& j) {
  if (j.at("type").get<std::string>() != "beta") throw ParseError("not a beta model");
  const auto names = j.at("feature_names").get<std::vector<std::string>>();
  const auto& p = j.at("params");
  return BetaModel(FeatureSet::from_names(names), p.at("alpha_pos").get<std::vector<double>>(),
                   p.at("lambda_pos").get<std::vector<double>>(),
                   p.at("alpha_neg").get<std::vector<double>>(),
                   p.at("lambda_neg").get<std::vector<double>>(),
                   j.at("prior_log_odds").get<double>(), j.at("class_id").get<int>(),
                   j.value("clip_eps", kDefaultClipEps));
}

}  // namespace detcal
