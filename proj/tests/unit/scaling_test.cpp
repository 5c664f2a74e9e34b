#include <gtest/gtest.h>

#include <cmath>

#include <nlohmann/json.hpp>

#include "detcal/error.hpp"
#include "detcal/metrics.hpp"
#include "detcal/scaling.hpp"
#include "oracles.hpp"

namespace detcal {
namespace {

const FeatureSet kConf;
const FeatureSet kConfCx({Feature::confidence, Feature::cx});

std::vector<double> random_spd(oracle::Rng& rng, std::size_t q, double scale) {
  // A A^T + ridge with A random.
  std::vector<double> a(q * q), s(q * q, 0.0);
  for (auto& v : a) v = rng.uniform(-1.0, 1.0) * scale;
  for (std::size_t r = 0; r < q; ++r) {
    for (std::size_t c = 0; c < q; ++c) {
      for (std::size_t k = 0; k < q; ++k) s[r * q + c] += a[r * q + k] * a[c * q + k];
    }
    s[r * q + r] += 0.05 * scale;
  }
  return s;
}

// Relative error ||a - b|| / max(||a||, ||b||, tiny).
double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-300});
}

template <class Nll>
std::vector<double> central_difference(const Nll& nll, std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = nll.value(x);
    x[i] = keep - h;
    const double down = nll.value(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

TEST(Posterior, SpotValues) {
  EXPECT_EQ(posterior(0.0, 0.0), 0.5);
  EXPECT_NEAR(posterior(50.0, 0.0), 1.0, 1e-15);
  EXPECT_GT(posterior(-800.0, 0.0), -1e-300);
  EXPECT_EQ(posterior(800.0, 0.0), 1.0);
  EXPECT_NEAR(posterior(0.0, std::log(3.0)), 0.75, 1e-15);
}

TEST(LogisticLr, SymmetricClassesGiveZero) {
  const LogisticModel m(kConfCx, {0.3, 0.6}, {0.1, 0.02, 0.02, 0.2}, {0.3, 0.6}, {0.1, 0.02, 0.02, 0.2});
  oracle::Rng rng(20);
  for (int i = 0; i < 50; ++i) {
    EXPECT_NEAR(logistic_lr(m, {kConfCx, {rng.uniform(), rng.uniform()}}), 0.0, 1e-14);
    EXPECT_NEAR(apply_scaling(m, {kConfCx, {rng.uniform(), rng.uniform()}}), 0.5, 1e-14);
  }
}

TEST(LogisticLr, MidpointSymmetry) {
  const LogisticModel m(kConf, {1.0}, {1.0}, {-1.0}, {1.0});
  EXPECT_EQ(m.log_lr(std::vector<double>{0.0}), 0.0);
}

TEST(LogisticLr, MatchesGaussianDensityOracle) {
  oracle::Rng rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t q = static_cast<std::size_t>(rng.integer(1, 5));
    std::vector<Feature> f{Feature::confidence, Feature::cx, Feature::cy, Feature::w, Feature::h};
    f.resize(q);
    const FeatureSet fs(f);
    std::vector<double> mp(q), mn(q), x(q);
    for (std::size_t k = 0; k < q; ++k) {
      mp[k] = rng.uniform();
      mn[k] = rng.uniform();
      x[k] = rng.uniform();
    }
    const auto sp = random_spd(rng, q, rng.uniform(0.05, 0.5));
    const auto sn = random_spd(rng, q, rng.uniform(0.05, 0.5));
    const LogisticModel m(fs, mp, sp, mn, sn);
    const double expected = oracle::gaussian_log_density(x, mp, sp) - oracle::gaussian_log_density(x, mn, sn);
    EXPECT_NEAR(m.log_lr(x), expected, 1e-10 * std::max(1.0, std::abs(expected)));
  }
}

TEST(LogisticLr, TranslationInvariant) {
  oracle::Rng rng(22);
  for (int trial = 0; trial < 50; ++trial) {
    const std::vector<double> sp = random_spd(rng, 2, 0.3), sn = random_spd(rng, 2, 0.3);
    const std::vector<double> mp{rng.uniform(), rng.uniform()}, mn{rng.uniform(), rng.uniform()};
    const std::vector<double> x{rng.uniform(), rng.uniform()};
    const double dx = rng.uniform(-0.3, 0.3), dy = rng.uniform(-0.3, 0.3);
    const LogisticModel a(kConfCx, mp, sp, mn, sn);
    const LogisticModel b(kConfCx, {mp[0] + dx, mp[1] + dy}, sp, {mn[0] + dx, mn[1] + dy}, sn);
    EXPECT_NEAR(a.log_lr(x), b.log_lr(std::vector<double>{x[0] + dx, x[1] + dy}), 1e-10);
  }
}

TEST(LogisticLr, OneDimensionalReduction) {
  oracle::Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    const double mp = rng.uniform(), mn = rng.uniform(), var = rng.uniform(0.01, 1.0);
    const LogisticModel m(kConf, {mp}, {var}, {mn}, {var});
    const double gamma = (mp - mn) / var;
    const double eta = 0.5 * (mp + mn);
    for (int k = 0; k <= 10; ++k) {
      const double p = k / 10.0;
      EXPECT_NEAR(m.log_lr(std::vector<double>{p}), gamma * (p - eta), 1e-10 * std::max(1.0, std::abs(gamma)));
    }
  }
}

TEST(LogisticModel, RejectsInvalidCovariance) {
  EXPECT_THROW(LogisticModel(kConfCx, {0, 0}, {1, 0.5, 0.4, 1}, {0, 0}, {1, 0, 0, 1}), ValidationError);
  EXPECT_THROW(LogisticModel(kConfCx, {0, 0}, {1, 2, 2, 1}, {0, 0}, {1, 0, 0, 1}), ValidationError);
  EXPECT_THROW(LogisticModel(kConf, {0}, {0.0}, {0}, {1.0}), ValidationError);
  EXPECT_THROW(LogisticModel(kConf, {0, 1}, {1.0}, {0}, {1.0}), ValidationError);
}

TEST(BetaLr, IdenticalClassesGiveZero) {
  const BetaModel m(kConfCx, {1.5, 2.0, 0.7}, {0.8, 1.3}, {1.5, 2.0, 0.7}, {0.8, 1.3});
  oracle::Rng rng(24);
  for (int i = 0; i < 50; ++i) {
    EXPECT_NEAR(beta_lr(m, {kConfCx, {rng.uniform(0.01, 0.99), rng.uniform(0.01, 0.99)}}), 0.0, 1e-12);
  }
}

TEST(BetaLr, MatchesLibbyNovickDensityRatio) {
  oracle::Rng rng(25);
  for (int trial = 0; trial < 30; ++trial) {
    const double a0p = rng.uniform(0.3, 6), a1p = rng.uniform(0.3, 6), lp = rng.uniform(0.2, 5);
    const double a0n = rng.uniform(0.3, 6), a1n = rng.uniform(0.3, 6), ln = rng.uniform(0.2, 5);
    const BetaModel m(kConf, {a0p, a1p}, {lp}, {a0n, a1n}, {ln});
    for (int k = 1; k <= 100; ++k) {
      const double x = k / 101.0;
      const double expected = std::log(oracle::libby_novick_density(x, a1p, a0p, lp) /
                                       oracle::libby_novick_density(x, a1n, a0n, ln));
      EXPECT_NEAR(m.log_lr(std::vector<double>{x}), expected, 1e-8);
    }
  }
}

TEST(BetaLr, MonotoneWhenPositiveShapeShiftedUp) {
  const BetaModel m(kConf, {2.0, 3.5}, {1.0}, {2.0, 2.0}, {1.0});
  double prev = -1e300;
  for (int k = 1; k < 200; ++k) {
    const double v = m.log_lr(std::vector<double>{k / 200.0});
    EXPECT_GT(v, prev);
    prev = v;
  }
}

TEST(BetaLr, RejectsBoundaryFeatures) {
  const BetaModel m(kConf, {2.0, 3.5}, {1.0}, {2.0, 2.0}, {1.0});
  EXPECT_THROW(m.log_lr(std::vector<double>{0.0}), ValidationError);
  EXPECT_THROW(m.log_lr(std::vector<double>{1.0}), ValidationError);
  // apply clips first
  EXPECT_NO_THROW(m.apply(std::vector<double>{1.0}));
  EXPECT_THROW(BetaModel(kConf, {2.0, -1.0}, {1.0}, {2.0, 2.0}, {1.0}), ValidationError);
}

TEST(LogMultivariateBeta, MatchesLgamma) {
  const std::vector<double> a{0.5, 2.0, 3.5};
  EXPECT_NEAR(log_multivariate_beta(a),
              std::lgamma(0.5) + std::lgamma(2.0) + std::lgamma(3.5) - std::lgamma(6.0), 1e-12);
}

Dataset random_dataset(oracle::Rng& rng, const FeatureSet& fs, int n) {
  Dataset ds(fs);
  std::vector<double> row(fs.size());
  for (int i = 0; i < n; ++i) {
    for (auto& v : row) v = rng.uniform(0.02, 0.98);
    ds.add(row, rng.coin(0.3 + 0.4 * row[0]));
  }
  return ds;
}

TEST(LogisticNll, GradientMatchesFiniteDifferences) {
  oracle::Rng rng(26);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t q = static_cast<std::size_t>(rng.integer(1, 3));
    std::vector<Feature> f{Feature::confidence, Feature::cx, Feature::cy};
    f.resize(q);
    const Dataset ds = random_dataset(rng, FeatureSet(f), 200);
    const bool tied = rng.coin();
    const bool uniform = rng.coin();
    const LogisticNll nll(ds, tied, uniform);
    std::vector<double> x(nll.num_params());
    for (auto& v : x) v = rng.uniform(-0.5, 0.5);
    std::vector<double> g(x.size());
    nll(x, g);
    EXPECT_LT(relative_error(g, central_difference(nll, x, 1e-5)), 1e-4) << "trial " << trial;
  }
}

TEST(BetaNll, GradientMatchesFiniteDifferences) {
  oracle::Rng rng(27);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t q = static_cast<std::size_t>(rng.integer(1, 3));
    std::vector<Feature> f{Feature::confidence, Feature::cx, Feature::cy};
    f.resize(q);
    const Dataset ds = random_dataset(rng, FeatureSet(f), 200);
    const BetaNll nll(ds, rng.coin());
    std::vector<double> x(nll.num_params());
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);
    std::vector<double> g(x.size());
    nll(x, g);
    EXPECT_LT(relative_error(g, central_difference(nll, x, 1e-5)), 1e-4) << "trial " << trial;
  }
}

TEST(Nll, PackUnpackRoundTrip) {
  oracle::Rng rng(28);
  const Dataset ds = random_dataset(rng, kConfCx, 100);
  const LogisticModel m(kConfCx, {0.3, 0.4}, {0.2, 0.05, 0.05, 0.1}, {0.6, 0.5}, {0.1, -0.02, -0.02, 0.3}, 0.4);
  const LogisticNll lnll(ds, false, false);
  const auto back = lnll.unpack(lnll.pack(m));
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(back.sigma_pos()[i], m.sigma_pos()[i], 1e-12);
    EXPECT_NEAR(back.sigma_neg()[i], m.sigma_neg()[i], 1e-12);
  }
  EXPECT_EQ(back.mu_neg(), m.mu_neg());
  EXPECT_EQ(back.prior_log_odds(), 0.4);

  const BetaModel b(kConfCx, {1.5, 2.0, 0.7}, {0.8, 1.3}, {1.1, 0.9, 2.7}, {2.8, 0.3}, -0.2);
  const BetaNll bnll(ds, false);
  const auto bb = bnll.unpack(bnll.pack(b));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(bb.alpha_neg()[i], b.alpha_neg()[i], 1e-12);
  EXPECT_NEAR(bb.lambda_pos()[1], 1.3, 1e-12);
}

TEST(FitLogistic, SinglePairMidpoint) {
  Dataset ds(kConf);
  ds.add(std::vector<double>{0.25}, false);
  ds.add(std::vector<double>{0.75}, true);
  ScalingFitOptions opts;
  opts.optimizer.max_iterations = 0;
  const auto m = fit_logistic(ds, opts);
  EXPECT_NEAR(m.apply(std::vector<double>{0.5}), 0.5, 1e-12);
  EXPECT_GT(m.apply(std::vector<double>{0.6}), 0.5);
}

TEST(FitLogistic, SeparableDataSaturatesMonotonically) {
  Dataset ds(kConf);
  for (int i = 0; i < 50; ++i) {
    ds.add(std::vector<double>{0.05 + 0.004 * i}, false);
    ds.add(std::vector<double>{0.6 + 0.004 * i}, true);
  }
  const auto m = fit_logistic(ds);
  EXPECT_LT(m.apply(std::vector<double>{0.1}), 0.01);
  EXPECT_GT(m.apply(std::vector<double>{0.75}), 0.99);
  double prev = -1.0;
  for (int k = 0; k <= 100; ++k) {
    const double v = m.apply(std::vector<double>{k / 100.0});
    EXPECT_GE(v, prev);
    prev = v;
  }
}

TEST(FitLogistic, MissingClassNamesIt) {
  Dataset ds(kConfCx);
  ds.add(std::vector<double>{0.2, 0.3}, true);
  ds.add(std::vector<double>{0.3, 0.3}, true);
  ds.add(std::vector<double>{0.4, 0.3}, true);
  try {
    fit_logistic(ds);
    FAIL() << "expected FitError";
  } catch (const FitError& e) {
    EXPECT_NE(std::string(e.what()).find("negative"), std::string::npos);
  }
}

TEST(FitLogistic, DeterministicSerialization) {
  oracle::Rng rng(29);
  const Dataset ds = random_dataset(rng, kConfCx, 2000);
  EXPECT_EQ(to_json(fit_logistic(ds)).dump(), to_json(fit_logistic(ds)).dump());
  EXPECT_EQ(to_json(fit_beta(ds)).dump(), to_json(fit_beta(ds)).dump());
}

TEST(FitLogistic, RecoversGaussianPosterior) {
  oracle::Rng rng(30);
  std::normal_distribution<double> z(0.0, 1.0);
  const std::vector<double> mp{0.6, 0.55}, mn{0.4, 0.45};
  const double sd = 0.1;
  Dataset ds(kConfCx);
  for (int i = 0; i < 10000; ++i) {
    const bool y = rng.coin();
    const auto& mu = y ? mp : mn;
    ds.add(std::vector<double>{std::clamp(mu[0] + sd * z(rng.engine()), 0.0, 1.0),
                               std::clamp(mu[1] + sd * z(rng.engine()), 0.0, 1.0)},
           y);
  }
  const auto m = fit_logistic(ds);
  const std::vector<double> s{sd * sd, 0.0, 0.0, sd * sd};
  double err = 0.0;
  for (int i = 0; i < 20; ++i) {
    for (int j = 0; j < 20; ++j) {
      const std::vector<double> x{0.2 + 0.6 * i / 19.0, 0.2 + 0.6 * j / 19.0};
      const double truth = 1.0 / (1.0 + std::exp(-(oracle::gaussian_log_density(x, mp, s) -
                                                  oracle::gaussian_log_density(x, mn, s))));
      err += std::abs(m.apply(x) - truth);
    }
  }
  EXPECT_LT(err / 400.0, 0.02);
}

TEST(FitBeta, NullSignalGivesHalf) {
  oracle::Rng rng(31);
  Dataset ds(kConf);
  for (int i = 0; i < 10000; ++i) ds.add(std::vector<double>{rng.uniform()}, rng.coin());
  const auto m = fit_beta(ds);
  for (int k = 1; k < 50; ++k) EXPECT_NEAR(m.apply(std::vector<double>{k / 50.0}), 0.5, 0.05);
}

TEST(FitBeta, ImprovesOnIdentityNll) {
  oracle::Rng rng(32);
  Dataset ds(kConf);
  for (int i = 0; i < 5000; ++i) {
    const double c = rng.uniform();
    ds.add(std::vector<double>{c}, rng.coin(c * c));
  }
  const auto m = fit_beta(ds);
  std::vector<ScoredOutcome> raw, cal;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    raw.push_back({ds.confidence(i), ds.outcome(i)});
    cal.push_back({m.apply(ds.row(i)), ds.outcome(i)});
  }
  EXPECT_LE(nll(cal), nll(raw));
}

TEST(FitBeta, MissingClass) {
  Dataset ds(kConf);
  ds.add(std::vector<double>{0.3}, false);
  EXPECT_THROW(fit_beta(ds), FitError);
}

TEST(ScalingJson, RoundTrip) {
  const LogisticModel lm(kConfCx, {0.3, 0.4}, {0.2, 0.05, 0.05, 0.1}, {0.6, 0.5}, {0.1, -0.02, -0.02, 0.3}, 0.4, 7);
  const auto lj = to_json(lm);
  EXPECT_EQ(lj.at("type"), "logistic");
  EXPECT_EQ(to_json(logistic_from_json(lj)).dump(), lj.dump());

  const BetaModel bm(kConfCx, {1.5, 2.0, 0.7}, {0.8, 1.3}, {1.1, 0.9, 2.7}, {2.8, 0.3}, -0.2, 3);
  const auto bj = to_json(bm);
  EXPECT_EQ(bj.at("type"), "beta");
  EXPECT_EQ(to_json(beta_from_json(bj)).dump(), bj.dump());
  EXPECT_THROW(beta_from_json(lj), ParseError);
}

TEST(ApplyScaling, BatchEqualsElementwise) {
  const LogisticModel lm(kConf, {0.7}, {0.04}, {0.4}, {0.04}, -0.3);
  oracle::Rng rng(33);
  std::vector<double> xs(100);
  for (auto& x : xs) x = rng.uniform();
  std::vector<double> batch;
  for (const double x : xs) batch.push_back(lm.apply(std::vector<double>{x}));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    EXPECT_EQ(batch[i], apply_scaling(lm, {kConf, {xs[i]}}));
  }
  double prev = -1.0;
  for (int k = 0; k <= 100; ++k) {
    const double v = lm.apply(std::vector<double>{k / 100.0});
    EXPECT_GT(v, prev);
    prev = v;
  }
}

}  // namespace
}  // namespace detcal
