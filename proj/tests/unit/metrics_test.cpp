#include <gtest/gtest.h>

#include <cmath>

#include "detcal/error.hpp"
#include "detcal/metrics.hpp"
#include "oracles.hpp"

namespace detcal {
namespace {

using S = std::vector<ScoredOutcome>;

TEST(Brier, SpotValues) {
  EXPECT_EQ(brier(S{{1.0, true}, {0.0, false}}), 0.0);
  EXPECT_DOUBLE_EQ(brier(S{{0.5, true}, {0.5, false}, {0.5, true}}), 0.25);
  EXPECT_NEAR(brier(S{{0.8, true}, {0.4, false}}), 0.10, 1e-15);
  EXPECT_THROW(brier(S{}), ValidationError);
}

TEST(Nll, SpotValues) {
  EXPECT_NEAR(nll(S{{0.5, true}, {0.5, false}}), std::log(2.0), 1e-15);
  EXPECT_DOUBLE_EQ(nll(S{{1.0, true}, {0.0, false}}), -(std::log(1.0 - 1e-12) + std::log1p(-1e-12)) / 2.0);
  EXPECT_NEAR(nll(S{{0.8, true}}), -std::log(0.8), 1e-15);
  EXPECT_THROW(nll(S{}), ValidationError);
}

TEST(ConstantPredictor, MinimizedAtPositiveRate) {
  const S base{{0, true}, {0, true}, {0, false}, {0, true}, {0, false}};  // rate 0.6
  auto at = [&](double p) {
    S s = base;
    for (auto& x : s) x.confidence = p;
    return std::make_pair(brier(s), nll(s));
  };
  const auto best = at(0.6);
  for (int k = 1; k < 100; ++k) {
    const double p = k / 100.0;
    const auto v = at(p);
    EXPECT_GE(v.first, best.first - 1e-15) << p;
    EXPECT_GE(v.second, best.second - 1e-15) << p;
  }
}

TEST(Auprc, SpotValues) {
  EXPECT_DOUBLE_EQ(auprc(S{{0.9, true}, {0.8, true}, {0.3, false}}), 1.0);
  EXPECT_DOUBLE_EQ(auprc(S{{0.9, true}}), 1.0);
  EXPECT_NEAR(auprc(S{{0.9, true}, {0.8, false}, {0.7, true}}), 5.0 / 6.0, 1e-15);
  EXPECT_THROW(auprc(S{{0.9, false}}), ValidationError);
}

TEST(Auprc, TiesAreGrouped) {
  // One tied group holding both outcomes: a single PR point at (1, 0.5).
  EXPECT_DOUBLE_EQ(auprc(S{{0.5, true}, {0.5, false}}), 0.5);
  EXPECT_DOUBLE_EQ(auprc(S{{0.5, false}, {0.5, true}}), 0.5);
}

TEST(Auprc, MatchesThresholdEnumeration) {
  oracle::Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = rng.integer(1, 1000);
    S s;
    std::vector<oracle::Sample> o;
    for (int i = 0; i < n; ++i) {
      // Coarse scores force many ties.
      const double c = rng.coin() ? rng.integer(0, 20) / 20.0 : rng.uniform();
      const bool y = rng.coin(c);
      s.push_back({c, y});
      o.push_back({c, y ? 1 : 0});
    }
    s.push_back({rng.uniform(), true});
    o.push_back({s.back().confidence, 1});
    EXPECT_DOUBLE_EQ(auprc(s), oracle::auprc(o));
  }
}

TEST(Auprc, RankInvariant) {
  oracle::Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    S s;
    for (int i = rng.integer(1, 500); i > 0; --i) s.push_back({rng.uniform(), rng.coin()});
    s.push_back({rng.uniform(), true});
    S t = s;
    for (auto& x : t) x.confidence = std::pow(x.confidence, 3.0) * 0.5 + 0.1;
    EXPECT_EQ(auprc(s), auprc(t));
  }
}

TEST(WeightedClasswise, SpotValues) {
  EXPECT_DOUBLE_EQ(weighted_classwise({{1, {0.3, 7}}}), 0.3);
  EXPECT_DOUBLE_EQ(weighted_classwise({{1, {0.2, 5}}, {2, {0.4, 5}}}), 0.3);
  EXPECT_NEAR(weighted_classwise({{1, {0.1, 30}}, {2, {0.4, 10}}}), 0.175, 1e-15);
  EXPECT_THROW(weighted_classwise({}), ValidationError);
  EXPECT_THROW(weighted_classwise({{1, {0.1, 0}}}), ValidationError);
}

}  // namespace
}  // namespace detcal
