#include "detcal/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "detcal/error.hpp"

namespace detcal {

namespace {

using nlohmann::json;

double logit(double p) {
  const double c = std::clamp(p, 1e-12, 1.0 - 1e-12);
  return std::log(c) - std::log1p(-c);
}

double sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

Eigen::MatrixXd square(const std::vector<double>& m, std::size_t q) {
  Eigen::MatrixXd out(q, q);
  for (std::size_t r = 0; r < q; ++r) {
    for (std::size_t c = 0; c < q; ++c) out(r, c) = m[r * q + c];
  }
  return out;
}

double gaussian_log_density(std::span<const double> x, const std::vector<double>& mu,
                            const std::vector<double>& sigma) {
  const std::size_t q = mu.size();
  const Eigen::MatrixXd s = square(sigma, q);
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(s);
  Eigen::VectorXd r(q);
  for (std::size_t i = 0; i < q; ++i) r(i) = x[i] - mu[i];
  const double maha = r.dot(ldlt.solve(r));
  const double logdet = ldlt.vectorD().array().log().sum();
  return -0.5 * maha - 0.5 * logdet - 0.5 * static_cast<double>(q) * std::log(2.0 * M_PI);
}

// Libby-Novick density on (0,1)^Q.
double libby_novick_log_density(std::span<const double> x, const std::vector<double>& alpha,
                                const std::vector<double>& lambda) {
  const std::size_t q = lambda.size();
  double total = 0.0;
  double log_norm = 0.0;
  for (const double a : alpha) {
    total += a;
    log_norm -= std::lgamma(a);
  }
  log_norm += std::lgamma(total);
  double acc = log_norm;
  double s = 0.0;
  for (std::size_t i = 0; i < q; ++i) {
    const double xi = x[i];
    acc += alpha[i + 1] * std::log(lambda[i]) + (alpha[i + 1] - 1.0) * std::log(xi) -
           (alpha[i + 1] + 1.0) * std::log1p(-xi);
    s += lambda[i] * xi / (1.0 - xi);
  }
  return acc - total * std::log1p(s);
}

std::optional<double> value_of(const FeatureSet& fs, std::span<const double> row, Feature f) {
  const auto idx = fs.index_of(f);
  if (!idx) return std::nullopt;
  return row[*idx];
}

std::vector<double> vec(const json& j, const char* key) {
  return j.at(key).get<std::vector<double>>();
}

std::vector<double> flat(const json& j, const char* key) {
  std::vector<double> out;
  for (const auto& row : j.at(key)) {
    const auto r = row.get<std::vector<double>>();
    out.insert(out.end(), r.begin(), r.end());
  }
  return out;
}

json rows(const std::vector<double>& m, std::size_t q) {
  json out = json::array();
  for (std::size_t r = 0; r < q; ++r) {
    out.push_back(std::vector<double>(m.begin() + r * q, m.begin() + (r + 1) * q));
  }
  return out;
}

}  // namespace

void SynthSpec::validate() const {
  if (n_samples == 0) throw ValidationError("n_samples must be positive");
  if (n_classes < 1) throw ValidationError("n_classes must be positive");
  if (samples_per_image == 0) throw ValidationError("samples_per_image must be positive");
  if (confidence.kind == ConfidenceDistribution::Kind::beta) {
    if (!(confidence.a > 0.0 && confidence.b > 0.0)) {
      throw ValidationError("beta confidence parameters must be positive");
    }
  } else if (!(confidence.low >= 0.0 && confidence.high <= 1.0 && confidence.low < confidence.high)) {
    throw ValidationError("uniform confidence range must lie in [0,1]");
  }
  const std::size_t q = features.size();
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, LogisticPosterior>) {
          for (const auto& [f, w] : p.weights) {
            if (!std::isfinite(w)) throw ValidationError("posterior weights must be finite");
            const bool pixel_feature = f == Feature::x || f == Feature::y || f == Feature::d;
            if (f == Feature::confidence || pixel_feature != features.pixel_features()) {
              throw ValidationError("posterior weight on unsupported feature '" +
                                    std::string(to_string(f)) + "'");
            }
          }
          if (!std::isfinite(p.logit_weight) || !std::isfinite(p.radial) || !std::isfinite(p.bias)) {
            throw ValidationError("posterior parameters must be finite");
          }
        } else if constexpr (std::is_same_v<T, GaussianPairPosterior>) {
          if (p.mu_pos.size() != q || p.mu_neg.size() != q || p.sigma_pos.size() != q * q ||
              p.sigma_neg.size() != q * q) {
            throw ValidationError("gaussian pair dimensions do not match feature_names");
          }
          for (const auto* s : {&p.sigma_pos, &p.sigma_neg}) {
            if (Eigen::LLT<Eigen::MatrixXd>(square(*s, q)).info() != Eigen::Success) {
              throw ValidationError("gaussian pair covariance is not positive definite");
            }
          }
          if (!(p.positive_fraction > 0.0 && p.positive_fraction < 1.0)) {
            throw ValidationError("positive_fraction must lie in (0,1)");
          }
        } else if constexpr (std::is_same_v<T, BetaPairPosterior>) {
          if (p.alpha_pos.size() != q + 1 || p.alpha_neg.size() != q + 1 ||
              p.lambda_pos.size() != q || p.lambda_neg.size() != q) {
            throw ValidationError("beta pair dimensions do not match feature_names");
          }
          for (const auto* v : {&p.alpha_pos, &p.alpha_neg, &p.lambda_pos, &p.lambda_neg}) {
            for (const double x : *v) {
              if (!(x > 0.0) || !std::isfinite(x)) {
                throw ValidationError("beta pair parameters must be positive");
              }
            }
          }
          if (!(p.positive_fraction > 0.0 && p.positive_fraction < 1.0)) {
            throw ValidationError("positive_fraction must lie in (0,1)");
          }
        }
      },
      posterior);
}

double true_posterior(const SynthSpec& spec, const FeatureSet& features,
                      std::span<const double> row) {
  return std::visit(
      [&](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, IdentityPosterior>) {
          return row[0];
        } else if constexpr (std::is_same_v<T, LogisticPosterior>) {
          double z = p.logit_weight * logit(row[0]) + p.bias;
          for (const auto& [f, w] : p.weights) z += w * value_of(features, row, f).value_or(0.0);
          if (p.radial != 0.0) {
            const bool pixel = features.pixel_features();
            const double u = value_of(features, row, pixel ? Feature::x : Feature::cx).value_or(0.5);
            const double v = value_of(features, row, pixel ? Feature::y : Feature::cy).value_or(0.5);
            z += p.radial * ((u - 0.5) * (u - 0.5) + (v - 0.5) * (v - 0.5)) / 0.5;
          }
          return sigmoid(z);
        } else if constexpr (std::is_same_v<T, GaussianPairPosterior>) {
          const std::vector<double> x = [&] {
            std::vector<double> out;
            for (const Feature f : spec.features) out.push_back(value_of(features, row, f).value_or(0.5));
            return out;
          }();
          const double z = gaussian_log_density(x, p.mu_pos, p.sigma_pos) -
                           gaussian_log_density(x, p.mu_neg, p.sigma_neg) + logit(p.positive_fraction);
          return sigmoid(z);
        } else {
          std::vector<double> x;
          for (const Feature f : spec.features) {
            x.push_back(std::clamp(value_of(features, row, f).value_or(0.5), 1e-12, 1.0 - 1e-12));
          }
          const double z = libby_novick_log_density(x, p.alpha_pos, p.lambda_pos) -
                           libby_novick_log_density(x, p.alpha_neg, p.lambda_neg) +
                           logit(p.positive_fraction);
          return sigmoid(z);
        }
      },
      spec.posterior);
}

SynthOutput generate(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> class_dist(1, spec.n_classes);
  std::normal_distribution<double> normal(0.0, 1.0);

  const bool pixel = spec.features.pixel_features();
  const FeatureSet full = pixel ? FeatureSet({Feature::confidence, Feature::x, Feature::y, Feature::d})
                                : FeatureSet({Feature::confidence, Feature::cx, Feature::cy,
                                              Feature::w, Feature::h});
  const std::size_t q = spec.features.size();
  std::vector<std::size_t> slot(q);
  for (std::size_t k = 0; k < q; ++k) slot[k] = *full.index_of(spec.features[k]);

  std::optional<Eigen::MatrixXd> chol_pos, chol_neg;
  if (const auto* g = std::get_if<GaussianPairPosterior>(&spec.posterior)) {
    chol_pos = Eigen::LLT<Eigen::MatrixXd>(square(g->sigma_pos, q)).matrixL();
    chol_neg = Eigen::LLT<Eigen::MatrixXd>(square(g->sigma_neg, q)).matrixL();
  }

  SynthOutput out;
  out.pixel = pixel;
  out.posteriors.reserve(spec.n_samples);
  std::vector<double> row(full.size());
  std::vector<double> pair(q);
  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    const int cls = class_dist(rng);

    // Base draws for every record field.
    if (spec.confidence.kind == ConfidenceDistribution::Kind::beta) {
      std::gamma_distribution<double> ga(spec.confidence.a, 1.0);
      std::gamma_distribution<double> gb(spec.confidence.b, 1.0);
      const double x = ga(rng);
      const double y = gb(rng);
      row[0] = x + y > 0.0 ? x / (x + y) : 0.5;
    } else {
      row[0] = spec.confidence.low + (spec.confidence.high - spec.confidence.low) * unit(rng);
    }
    if (pixel) {
      row[1] = unit(rng);
      row[2] = unit(rng);
      row[3] = 0.5 * unit(rng);
    } else {
      row[1] = unit(rng);
      row[2] = unit(rng);
      row[3] = 0.05 + 0.45 * unit(rng);
      row[4] = 0.05 + 0.45 * unit(rng);
    }

    // Class-conditional families overwrite the posterior inputs.
    if (const auto* g = std::get_if<GaussianPairPosterior>(&spec.posterior)) {
      const bool positive = unit(rng) < g->positive_fraction;
      const auto& mu = positive ? g->mu_pos : g->mu_neg;
      const auto& L = positive ? *chol_pos : *chol_neg;
      bool inside = false;
      for (int attempt = 0; attempt < 10000 && !inside; ++attempt) {
        Eigen::VectorXd z(q);
        for (std::size_t k = 0; k < q; ++k) z(k) = normal(rng);
        const Eigen::VectorXd x = L * z;
        inside = true;
        for (std::size_t k = 0; k < q; ++k) {
          pair[k] = mu[k] + x(k);
          inside = inside && pair[k] >= 0.0 && pair[k] <= 1.0;
        }
      }
      if (!inside) throw ValidationError("gaussian pair puts almost no mass inside [0,1]");
      for (std::size_t k = 0; k < q; ++k) row[slot[k]] = pair[k];
    } else if (const auto* b = std::get_if<BetaPairPosterior>(&spec.posterior)) {
      const bool positive = unit(rng) < b->positive_fraction;
      const auto& alpha = positive ? b->alpha_pos : b->alpha_neg;
      const auto& lambda = positive ? b->lambda_pos : b->lambda_neg;
      std::gamma_distribution<double> g0(alpha[0], 1.0);
      const double y0 = g0(rng);
      for (std::size_t k = 0; k < q; ++k) {
        std::gamma_distribution<double> gk(alpha[k + 1], 1.0 / lambda[k]);
        const double yk = gk(rng);
        pair[k] = yk + y0 > 0.0 ? yk / (yk + y0) : 0.5;
      }
      for (std::size_t k = 0; k < q; ++k) row[slot[k]] = pair[k];
    }

    if (!pixel) {
      // Keep the box inside the image so it survives ingestion unclipped.
      row[3] = std::max(1e-6, std::min(row[3], 2.0 * std::min(row[1], 1.0 - row[1])));
      row[4] = std::max(1e-6, std::min(row[4], 2.0 * std::min(row[2], 1.0 - row[2])));
    }

    const double p = true_posterior(spec, full, row);
    const bool outcome = unit(rng) < p;
    out.posteriors.push_back(p);

    char id[32];
    std::snprintf(id, sizeof id, pixel ? "obj%06zu" : "img%06zu", i / spec.samples_per_image);
    if (pixel) {
      out.pixels.push_back({id, cls, row[0], row[1], row[2], row[3], outcome});
    } else {
      out.detections.push_back({id, cls, row[0], BoundingBox{row[1], row[2], row[3], row[4]}, outcome});
    }
  }
  return out;
}

Dataset SynthOutput::dataset(const FeatureSet& features) const {
  if (pixel) return make_dataset(std::span<const PixelRecord>(pixels), features);
  return make_dataset(std::span<const DetectionRecord>(detections), features);
}

DeceResult true_dece(const Dataset& samples, std::span<const double> posteriors,
                     const MeasureConfig& cfg) {
  return dece(accumulate(samples, posteriors, cfg.scheme), cfg);
}

SynthSpec synth_spec_from_json(const json& j) {
  try {
    SynthSpec spec;
    spec.n_samples = j.value("n_samples", spec.n_samples);
    spec.seed = j.value("seed", spec.seed);
    if (j.contains("feature_names")) {
      spec.features = FeatureSet::from_names(j.at("feature_names").get<std::vector<std::string>>());
    }
    spec.n_classes = j.value("n_classes", spec.n_classes);
    spec.samples_per_image = j.value("samples_per_image", spec.samples_per_image);
    if (j.contains("confidence_distribution")) {
      const auto& c = j.at("confidence_distribution");
      const auto type = c.value("type", std::string("uniform"));
      if (type == "uniform") {
        spec.confidence.kind = ConfidenceDistribution::Kind::uniform;
        spec.confidence.low = c.value("low", 0.0);
        spec.confidence.high = c.value("high", 1.0);
      } else if (type == "beta") {
        spec.confidence.kind = ConfidenceDistribution::Kind::beta;
        spec.confidence.a = c.at("a").get<double>();
        spec.confidence.b = c.at("b").get<double>();
      } else {
        throw ValidationError("unknown confidence distribution '" + type + "'");
      }
    }
    const json& p = j.contains("true_posterior") ? j.at("true_posterior") : json::object();
    const auto type = p.value("type", std::string("identity"));
    const std::size_t q = spec.features.size();
    if (type == "identity") {
      spec.posterior = IdentityPosterior{};
    } else if (type == "logistic") {
      LogisticPosterior lp;
      lp.logit_weight = p.value("logit_weight", 1.0);
      lp.radial = p.value("radial", 0.0);
      lp.bias = p.value("bias", 0.0);
      if (p.contains("weights")) {
        for (const auto& [name, w] : p.at("weights").items()) lp.weights[parse_feature(name)] = w.get<double>();
      }
      spec.posterior = lp;
    } else if (type == "gaussian_pair") {
      GaussianPairPosterior gp{vec(p, "mu_pos"), vec(p, "mu_neg"), flat(p, "sigma_pos"),
                               flat(p, "sigma_neg"), p.value("positive_fraction", 0.5)};
      spec.posterior = gp;
    } else if (type == "beta_pair") {
      BetaPairPosterior bp{vec(p, "alpha_pos"), vec(p, "lambda_pos"), vec(p, "alpha_neg"),
                           vec(p, "lambda_neg"), p.value("positive_fraction", 0.5)};
      spec.posterior = bp;
    } else {
      throw ValidationError("unknown true_posterior type '" + type + "'");
    }
    (void)q;
    spec.validate();
    return spec;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed synth spec: ") + e.what());
  }
}

json to_json(const SynthSpec& spec) {
  json conf;
  if (spec.confidence.kind == ConfidenceDistribution::Kind::beta) {
    conf = {{"type", "beta"}, {"a", spec.confidence.a}, {"b", spec.confidence.b}};
  } else {
    conf = {{"type", "uniform"}, {"low", spec.confidence.low}, {"high", spec.confidence.high}};
  }
  const std::size_t q = spec.features.size();
  const json post = std::visit(
      [&](const auto& p) -> json {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, IdentityPosterior>) {
          return {{"type", "identity"}};
        } else if constexpr (std::is_same_v<T, LogisticPosterior>) {
          json w = json::object();
          for (const auto& [f, v] : p.weights) w[std::string(to_string(f))] = v;
          return {{"type", "logistic"}, {"logit_weight", p.logit_weight}, {"weights", w},
                  {"radial", p.radial}, {"bias", p.bias}};
        } else if constexpr (std::is_same_v<T, GaussianPairPosterior>) {
          return {{"type", "gaussian_pair"}, {"mu_pos", p.mu_pos}, {"mu_neg", p.mu_neg},
                  {"sigma_pos", rows(p.sigma_pos, q)}, {"sigma_neg", rows(p.sigma_neg, q)},
                  {"positive_fraction", p.positive_fraction}};
        } else {
          return {{"type", "beta_pair"}, {"alpha_pos", p.alpha_pos}, {"lambda_pos", p.lambda_pos},
                  {"alpha_neg", p.alpha_neg}, {"lambda_neg", p.lambda_neg},
                  {"positive_fraction", p.positive_fraction}};
        }
      },
      spec.posterior);
  return {{"n_samples", spec.n_samples},
          {"seed", spec.seed},
          {"feature_names", spec.features.names()},
          {"n_classes", spec.n_classes},
          {"samples_per_image", spec.samples_per_image},
          {"confidence_distribution", conf},
          {"true_posterior", post}};
}

}  // namespace detcal
