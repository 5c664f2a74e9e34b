#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "detcal/calibrator.hpp"
#include "detcal/error.hpp"
#include "detcal/evaluation.hpp"
#include "detcal/synth.hpp"
#include "oracles.hpp"

namespace detcal {
namespace {

std::vector<DetectionRecord> make_records(std::uint64_t seed, int n, int classes, double radial) {
  SynthSpec spec;
  spec.n_samples = static_cast<std::size_t>(n);
  spec.seed = seed;
  spec.features = FeatureSet::parse("confidence,cx,cy");
  spec.n_classes = classes;
  LogisticPosterior lp;
  lp.radial = radial;
  lp.bias = 0.4;
  spec.posterior = lp;
  return generate(spec).detections;
}

TEST(ParseMethod, Names) {
  EXPECT_EQ(parse_method("hb"), Method::histogram_binning);
  EXPECT_EQ(parse_method("lc"), Method::logistic);
  EXPECT_EQ(parse_method("bc"), Method::beta);
  EXPECT_THROW(parse_method("ts"), ValidationError);
}

TEST(CalibratorSet, PerClassModelsPreserveOrder) {
  const auto recs = make_records(1, 6000, 3, -2.0);
  CalibratorOptions opts;
  opts.features = FeatureSet::parse("confidence,cx,cy");
  opts.method = Method::beta;
  const auto set = CalibratorSet::fit(std::span<const DetectionRecord>(recs), opts);
  EXPECT_EQ(set.models().size(), 3u);
  for (const auto& [cls, m] : set.models()) EXPECT_EQ(class_id_of(m), cls);
  const auto out = set.apply(std::span<const DetectionRecord>(recs));
  ASSERT_EQ(out.size(), recs.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    EXPECT_EQ(out[i].image_id, recs[i].image_id);
    EXPECT_EQ(out[i].box, recs[i].box);
    EXPECT_EQ(out[i].matched, recs[i].matched);
    EXPECT_GE(out[i].confidence, 0.0);
    EXPECT_LE(out[i].confidence, 1.0);
  }
}

TEST(CalibratorSet, ParallelEqualsSerial) {
  const auto recs = make_records(2, 8000, 4, -2.0);
  CalibratorOptions opts;
  opts.features = FeatureSet::parse("confidence,cx,cy");
  opts.threads = 1;
  const auto serial = CalibratorSet::fit(std::span<const DetectionRecord>(recs), opts).to_json().dump();
  opts.threads = 4;
  EXPECT_EQ(CalibratorSet::fit(std::span<const DetectionRecord>(recs), opts).to_json().dump(), serial);
}

TEST(CalibratorSet, SmallClassesFallBack) {
  Dataset big(FeatureSet::parse("confidence,cx"));
  Dataset medium(big.features());
  Dataset tiny(big.features());
  oracle::Rng rng(3);
  for (int i = 0; i < 400; ++i) {
    big.add(std::vector<double>{rng.uniform(), rng.uniform()}, i % 2 == 0);
  }
  for (int i = 0; i < 40; ++i) {
    medium.add(std::vector<double>{rng.uniform(), rng.uniform()}, i % 4 == 0);  // 10 positives
  }
  for (int i = 0; i < 10; ++i) tiny.add(std::vector<double>{rng.uniform(), rng.uniform()}, i == 0);
  CalibratorOptions opts;
  opts.features = big.features();
  const auto set = CalibratorSet::fit({{1, big}, {2, medium}, {3, tiny}}, opts);
  EXPECT_EQ(features_of(*set.find(1)), opts.features);
  EXPECT_TRUE(std::holds_alternative<LogisticModel>(*set.find(2)));
  EXPECT_EQ(features_of(*set.find(2)), FeatureSet{});
  EXPECT_TRUE(std::holds_alternative<IdentityModel>(*set.find(3)));
}

TEST(CalibratorSet, JsonRoundTripAllKinds) {
  const auto recs = make_records(4, 3000, 2, -1.0);
  for (const Method m : {Method::histogram_binning, Method::logistic, Method::beta}) {
    CalibratorOptions opts;
    opts.method = m;
    opts.features = FeatureSet::parse("confidence,cx");
    opts.bins = {4};
    const auto set = CalibratorSet::fit(std::span<const DetectionRecord>(recs), opts);
    const auto j = set.to_json();
    const auto back = CalibratorSet::from_json(j);
    EXPECT_EQ(back.to_json().dump(), j.dump());
    EXPECT_EQ(back.apply(std::span<const DetectionRecord>(recs)), set.apply(std::span<const DetectionRecord>(recs)));
  }
  CalibratorSet identity(Method::logistic, FeatureSet{});
  identity.set(1, IdentityModel{1});
  const auto out = CalibratorSet::from_json(identity.to_json()).apply(std::span<const DetectionRecord>(recs));
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (recs[i].class_id == 1) EXPECT_EQ(out[i].confidence, recs[i].confidence);
  }
}

TEST(CalibratorSet, HistogramBinningBroadcastsBins) {
  const auto recs = make_records(5, 2000, 1, -1.0);
  CalibratorOptions opts;
  opts.method = Method::histogram_binning;
  opts.features = FeatureSet::parse("confidence,cx,cy");
  opts.bins = {3};
  const auto set = CalibratorSet::fit(std::span<const DetectionRecord>(recs), opts);
  const auto& hb = std::get<HistogramBinningModel>(*set.find(1));
  EXPECT_EQ(hb.scheme.bins_per_dim(), (std::vector<int>{3, 3, 3}));
}

TEST(Evaluate, ReportShapeAndWeighting) {
  const auto recs = make_records(6, 20000, 2, -2.0);
  EvaluationConfig cfg;
  const auto report = evaluate(std::span<const DetectionRecord>(recs), cfg);
  ASSERT_EQ(report.classes.size(), 2u);
  const auto& a = report.classes.at(1);
  const auto& b = report.classes.at(2);
  EXPECT_EQ(report.n, a.n + b.n);
  EXPECT_NEAR(report.d_ece, (a.d_ece.value * a.n + b.d_ece.value * b.n) / report.n, 1e-15);
  const auto j = report.to_json();
  EXPECT_TRUE(j.contains("1"));
  EXPECT_TRUE(j.contains("weighted"));
  for (const char* key : {"d_ece", "brier", "nll", "auprc", "n"}) EXPECT_TRUE(j.at("1").contains(key)) << key;
  EXPECT_FALSE(j.at("1").contains("oracle_d_ece"));
}

TEST(Evaluate, OracleColumnWhenPosteriorsGiven) {
  SynthSpec spec;
  spec.n_samples = 5000;
  spec.seed = 7;
  const auto out = generate(spec);
  EvaluationConfig cfg;
  const auto report = evaluate(std::span<const DetectionRecord>(out.detections), cfg, out.posteriors);
  ASSERT_TRUE(report.oracle_d_ece.has_value());
  EXPECT_NEAR(*report.oracle_d_ece, 0.0, 1e-15);
}

TEST(Evaluate, MissingMatchLabelIsRejected) {
  std::vector<DetectionRecord> recs{{"i", 1, 0.5, {}, std::nullopt}};
  EXPECT_THROW(evaluate(std::span<const DetectionRecord>(recs), EvaluationConfig{}), ValidationError);
}

}  // namespace
}  // namespace detcal
