#include "mmi/csp.hpp"
#include "mmi/density.hpp"
#include "mmi/harness.hpp"

#include <benchmark/benchmark.h>

#include <numeric>
#include <random>

using namespace mmi;

namespace {

struct MiInput {
  Matrix x;
  std::vector<int> labels;
};

MiInput mi_input(int n) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  MiInput in{Matrix(n, 2), {}};
  for (int i = 0; i < n; ++i) {
    in.labels.push_back(1 + i % 2);
    in.x(i, 0) = g(rng) + (i % 2 == 0 ? 1.0 : -1.0);
    in.x(i, 1) = g(rng);
  }
  return in;
}

void BM_AverageMi(benchmark::State& state) {
  const auto in = mi_input(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(density::average_mi(in.x, in.labels));
}

void BM_AverageMiSerial(benchmark::State& state) {
  const auto in = mi_input(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(density::average_mi_serial(in.x, in.labels));
}

struct FbcspInput {
  std::vector<std::vector<Matrix>> bands;
  csp::FbcspModel model;
  std::vector<std::size_t> rows;
};

const FbcspInput& fbcsp_input() {
  static const FbcspInput in = [] {
    const auto data = harness::make_preset("fourclass", 1);
    const auto& epochs = *data.epochs;
    csp::FbcspConfig config;
    FbcspInput r;
    r.bands = csp::filter_epochs(epochs, config.bands, config.order);
    std::vector<int> labels;
    for (int l : epochs.labels)
      if (l <= 2) labels.push_back(l == 1 ? 1 : -1);
    for (std::size_t i = 0; i < epochs.size(); ++i)
      if (epochs.labels[i] <= 2) r.rows.push_back(i);
    r.model = csp::fit_fbcsp_rows(r.bands, r.rows, labels, config, epochs.fs);
    r.rows.resize(epochs.size());
    std::iota(r.rows.begin(), r.rows.end(), std::size_t{0});
    return r;
  }();
  return in;
}

void BM_FbcspFeatures(benchmark::State& state) {
  const auto& in = fbcsp_input();
  for (auto _ : state) benchmark::DoNotOptimize(csp::fbcsp_feature_matrix(in.model, in.bands, in.rows));
}

void BM_FbcspFeaturesSerial(benchmark::State& state) {
  const auto& in = fbcsp_input();
  for (auto _ : state) benchmark::DoNotOptimize(csp::fbcsp_feature_matrix_serial(in.model, in.bands, in.rows));
}

}  // namespace

BENCHMARK(BM_AverageMi)->Arg(200)->Arg(800)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AverageMiSerial)->Arg(200)->Arg(800)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FbcspFeatures)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FbcspFeaturesSerial)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
