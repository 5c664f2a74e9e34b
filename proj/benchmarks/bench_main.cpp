#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "detcal/binning.hpp"
#include "detcal/geometry.hpp"
#include "detcal/metrics.hpp"
#include "detcal/scaling.hpp"

namespace {

using namespace detcal;

Dataset make_data(std::size_t n, const FeatureSet& fs) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Dataset ds(fs);
  std::vector<double> row(fs.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : row) v = u(rng);
    ds.add(row, u(rng) < row[0]);
  }
  return ds;
}

void BM_AccumulateAndDece(benchmark::State& state) {
  const FeatureSet fs = FeatureSet::parse("confidence,cx,cy");
  const Dataset ds = make_data(static_cast<std::size_t>(state.range(0)), fs);
  const MeasureConfig cfg{BinningScheme::uniform(fs, 5), 8, Task::detection};
  for (auto _ : state) {
    benchmark::DoNotOptimize(dece(accumulate(ds, cfg.scheme), cfg).value);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_AccumulateAndDece)->Arg(10000)->Arg(1000000);

void BM_DistanceToBoundary(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(2);
  std::vector<std::uint8_t> bits(side * side);
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      const double dx = static_cast<double>(x) / side - 0.5, dy = static_cast<double>(y) / side - 0.5;
      bits[y * side + x] = dx * dx + dy * dy < 0.1 || rng() % 50 == 0;
    }
  }
  const BinaryMask mask(side, side, bits);
  for (auto _ : state) benchmark::DoNotOptimize(distance_to_boundary(mask));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}
BENCHMARK(BM_DistanceToBoundary)->Arg(64)->Arg(512);

void BM_FitLogistic(benchmark::State& state) {
  const FeatureSet fs = FeatureSet::parse("confidence,cx,cy,w,h");
  const Dataset ds = make_data(static_cast<std::size_t>(state.range(0)), fs);
  for (auto _ : state) benchmark::DoNotOptimize(fit_logistic(ds).apply(ds.row(0)));
}
BENCHMARK(BM_FitLogistic)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);

void BM_Auprc(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<ScoredOutcome> s(static_cast<std::size_t>(state.range(0)));
  for (auto& x : s) {
    x.confidence = u(rng);
    x.outcome = u(rng) < x.confidence;
  }
  for (auto _ : state) benchmark::DoNotOptimize(auprc(s));
}
BENCHMARK(BM_Auprc)->Arg(100000);

}  // namespace

BENCHMARK_MAIN();
