#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "cli_harness.hpp"
#include "detcal/io.hpp"

namespace {

using harness::run;
using harness::slurp;
using harness::spit;
using nlohmann::json;

const std::string kCalibrated =
    R"({"n_samples": 100000, "seed": 7, "feature_names": ["confidence"], "true_posterior": {"type": "identity"}})";

double weighted(const std::string& report_path, const char* key) {
  return json::parse(slurp(report_path)).at("weighted").at(key).get<double>();
}

TEST(Cli, MeasureCalibratedSource) {
  harness::TempDir dir("cli-measure");
  spit(dir / "spec.json", kCalibrated);
  ASSERT_EQ(run({"synth", "--spec", dir / "spec.json", "--out", dir / "d.jsonl"}).code, 0);
  const auto r = run({"measure", "--input", dir / "d.jsonl", "--posterior", dir / "d.jsonl.posterior.jsonl",
                      "--out", dir / "report.json"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_LT(weighted(dir / "report.json", "d_ece"), 0.02);
  EXPECT_EQ(weighted(dir / "report.json", "oracle_d_ece"), 0.0);

  const auto manifest = json::parse(slurp(dir / "report.json.manifest.json"));
  EXPECT_EQ(manifest.at("command"), "measure");
  EXPECT_EQ(manifest.at("inputs").size(), 2u);
  EXPECT_EQ(manifest.at("outputs")[0].at("sha256").get<std::string>().size(), 64u);
  EXPECT_EQ(manifest.at("config").at("min_bin_samples"), 8);
}

TEST(Cli, MeasureToStdout) {
  harness::TempDir dir("cli-stdout");
  spit(dir / "spec.json", R"({"n_samples": 500, "seed": 1})");
  ASSERT_EQ(run({"synth", "--spec", dir / "spec.json", "--out", dir / "d.jsonl"}).code, 0);
  const auto r = run({"measure", "--input", dir / "d.jsonl"});
  ASSERT_EQ(r.code, 0);
  EXPECT_TRUE(json::parse(r.out).contains("weighted"));
}

TEST(Cli, HistogramBinningFitSetFixedPoint) {
  harness::TempDir dir("cli-hb");
  spit(dir / "spec.json",
       R"({"n_samples": 20000, "seed": 3, "feature_names": ["confidence","cx","cy"],
           "true_posterior": {"type": "logistic", "radial": -3, "bias": 0.5}})");
  ASSERT_EQ(run({"synth", "--spec", dir / "spec.json", "--out", dir / "d.jsonl"}).code, 0);
  ASSERT_EQ(run({"fit", "--input", dir / "d.jsonl", "--method", "hb", "--out", dir / "m.json"}).code, 0);
  ASSERT_EQ(run({"apply", "--input", dir / "d.jsonl", "--model", dir / "m.json", "--out", dir / "c.jsonl"}).code, 0);
  ASSERT_EQ(run({"measure", "--input", dir / "c.jsonl", "--out", dir / "r.json"}).code, 0);
  EXPECT_LE(weighted(dir / "r.json", "d_ece"), 1e-9);

  // Record count and order survive the round trip.
  const auto before = detcal::read_detections(std::filesystem::path(dir / "d.jsonl"));
  const auto after = detcal::read_detections(std::filesystem::path(dir / "c.jsonl"));
  ASSERT_EQ(before.size(), after.size());
  for (std::size_t i = 0; i < before.size(); ++i) {
    EXPECT_EQ(before[i].image_id, after[i].image_id);
    EXPECT_EQ(before[i].box, after[i].box);
  }
}

TEST(Cli, IdentityModelLeavesConfidences) {
  harness::TempDir dir("cli-identity");
  spit(dir / "spec.json", R"({"n_samples": 300, "seed": 2})");
  ASSERT_EQ(run({"synth", "--spec", dir / "spec.json", "--out", dir / "d.jsonl"}).code, 0);
  spit(dir / "m.json", R"({"method":"lc","feature_names":["confidence"],"models":[{"type":"identity","class_id":1}]})");
  const auto r = run({"apply", "--input", dir / "d.jsonl", "--model", dir / "m.json", "--out", dir / "c.jsonl"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(dir / "c.jsonl"), slurp(dir / "d.jsonl"));
}

TEST(Cli, SplitPartitionsRecords) {
  harness::TempDir dir("cli-split");
  spit(dir / "spec.json", R"({"n_samples": 4000, "seed": 5})");
  ASSERT_EQ(run({"synth", "--spec", dir / "spec.json", "--out", dir / "d.jsonl"}).code, 0);
  auto n_of = [&](const std::string& split) {
    const auto r = run({"measure", "--input", dir / "d.jsonl", "--split", split, "--seed", "9"});
    EXPECT_EQ(r.code, 0) << r.err;
    return json::parse(r.out).at("weighted").at("n").get<std::size_t>();
  };
  const auto fit = n_of("fit");
  const auto holdout = n_of("holdout");
  EXPECT_EQ(fit + holdout, 4000u);
  EXPECT_EQ(fit, 2000u);  // 400 images of 10 records, halved
}

TEST(Cli, MatchAndFeatures) {
  harness::TempDir dir("cli-match");
  spit(dir / "p.jsonl",
       "{\"image_id\":\"a\",\"class_id\":1,\"confidence\":0.9,\"cx\":0.5,\"cy\":0.5,\"w\":0.2,\"h\":0.2}\n"
       "{\"image_id\":\"a\",\"class_id\":1,\"confidence\":0.8,\"cx\":0.5,\"cy\":0.5,\"w\":0.2,\"h\":0.2}\n"
       "{\"image_id\":\"a\",\"class_id\":1,\"confidence\":0.1,\"cx\":0.5,\"cy\":0.5,\"w\":0.2,\"h\":0.2}\n");
  spit(dir / "g.jsonl", "{\"image_id\":\"a\",\"class_id\":1,\"cx\":0.5,\"cy\":0.5,\"w\":0.2,\"h\":0.2}\n");
  const auto r = run({"match", "--detections", dir / "p.jsonl", "--ground-truth", dir / "g.jsonl", "--out", dir / "m.jsonl"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto m = detcal::read_detections(std::filesystem::path(dir / "m.jsonl"));
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[0].matched, true);
  EXPECT_EQ(m[1].matched, false);

  spit(dir / "masks.jsonl",
       R"({"object_id":"o1","class_id":2,"width":3,"height":3,"pred_bits":"9x1","gt_bits":"8x1;1x0","confidences":0.7})"
       "\n");
  ASSERT_EQ(run({"features", "--masks", dir / "masks.jsonl", "--task", "instance_seg", "--out", dir / "px.jsonl"}).code, 0);
  const auto px = detcal::read_pixels(std::filesystem::path(dir / "px.jsonl"));
  ASSERT_EQ(px.size(), 9u);
  EXPECT_FALSE(px[8].correct);
  EXPECT_NEAR(px[4].d, 1.0 / std::sqrt(18.0), 1e-15);
  EXPECT_EQ(run({"features", "--masks", dir / "masks.jsonl", "--task", "detection", "--out", dir / "x.jsonl"}).code, 3);
}

TEST(Cli, ReliabilityExport) {
  harness::TempDir dir("cli-rel");
  spit(dir / "spec.json", R"({"n_samples": 5000, "seed": 5, "feature_names": ["confidence","cx","cy"]})");
  ASSERT_EQ(run({"synth", "--spec", dir / "spec.json", "--out", dir / "d.jsonl"}).code, 0);
  const auto r = run({"reliability", "--input", dir / "d.jsonl", "--features", "confidence,cx,cy", "--bins", "5",
                      "--axes", "cx,cy", "--out", dir / "rel.csv"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = slurp(dir / "rel.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "axis1_lo,axis1_hi,axis2_lo,axis2_hi,count,mean_conf,rate,gap");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 26);
  const auto meta = json::parse(slurp(dir / "rel.csv.json"));
  EXPECT_EQ(meta.at("bins_per_dim"), json::array({5, 5, 5}));
}

TEST(Cli, ExitCodes) {
  harness::TempDir dir("cli-codes");
  spit(dir / "bad.jsonl", "{oops\n");
  EXPECT_EQ(run({"measure", "--input", dir / "bad.jsonl"}).code, 2);
  spit(dir / "range.jsonl",
       "{\"image_id\":\"a\",\"class_id\":1,\"confidence\":1.3,\"cx\":0.5,\"cy\":0.5,\"w\":0.2,\"h\":0.2,\"matched\":true}\n");
  const auto v = run({"measure", "--input", dir / "range.jsonl"});
  EXPECT_EQ(v.code, 3);
  EXPECT_NE(v.err.find("line 1"), std::string::npos);
  spit(dir / "empty.jsonl", "");
  EXPECT_EQ(run({"fit", "--input", dir / "empty.jsonl", "--out", dir / "m.json"}).code, 4);
  EXPECT_EQ(run({"measure", "--bogus"}).code, 2);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"measure", "--input", dir / "missing.jsonl"}).code, 1);
  EXPECT_EQ(run({"--help"}).code, 0);
}

}  // namespace
