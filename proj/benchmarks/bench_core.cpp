#include <benchmark/benchmark.h>

#include <random>

#include "sspix/autograd.hpp"
#include "sspix/dsfm.hpp"
#include "sspix/image.hpp"
#include "sspix/metrics.hpp"
#include "sspix/nn.hpp"
#include "sspix/soft_cluster.hpp"

using namespace sspix;

namespace {

Tensor rand_tensor(std::vector<int> shape, std::uint64_t seed, real lo = -1.0, real hi = 1.0) {
  Tensor t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<real> d(lo, hi);
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = d(rng);
  return t;
}

LabelMap rand_labels(int h, int w, int k, std::uint64_t seed) {
  LabelMap m = make_label_map(h, w);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> d(0, k - 1);
  for (auto& v : m.ids) v = d(rng);
  return m;
}

void BM_Conv2d3x3(benchmark::State& state) {
  const int c = (int)state.range(0);
  NoGradGuard ng;
  Var x = constant(rand_tensor({1, c, 64, 64}, 1));
  Var w = constant(rand_tensor({c, c, 3, 3}, 2, -0.1, 0.1));
  Var b = constant(Tensor::zeros({c}));
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, b)->value.data());
  state.SetItemsProcessed(state.iterations() * 64 * 64);
}
BENCHMARK(BM_Conv2d3x3)->Arg(16)->Arg(24)->Arg(64);

void BM_AttentionMaps(benchmark::State& state) {
  const int w = (int)state.range(0);
  NoGradGuard ng;
  ParamStore store;
  Rng rng(3);
  Dsfm dsfm(store, 24, rng);
  Var fl = constant(rand_tensor({1, 24, 32, w}, 4));
  Var fr = constant(rand_tensor({1, 24, 32, w}, 5));
  for (auto _ : state) benchmark::DoNotOptimize(dsfm.attention_maps(fl, fr).m_r2l->value.data());
  state.SetItemsProcessed(state.iterations() * 32 * w);
}
BENCHMARK(BM_AttentionMaps)->Arg(32)->Arg(64)->Arg(128);

void BM_StereoFusion(benchmark::State& state) {
  NoGradGuard ng;
  ParamStore store;
  Rng rng(6);
  Dsfm dsfm(store, 24, rng);
  Var fl = constant(rand_tensor({1, 24, 48, 64}, 7));
  Var fr = constant(rand_tensor({1, 24, 48, 64}, 8));
  for (auto _ : state)
    benchmark::DoNotOptimize(dsfm.forward(fl, fr, false).left->value.data());
  state.SetItemsProcessed(state.iterations() * 48 * 64);
}
BENCHMARK(BM_StereoFusion);

void BM_ClusterIterate(benchmark::State& state) {
  const int n_spixels = (int)state.range(0);
  NoGradGuard ng;
  ClusterConfig cfg = make_cluster_config(n_spixels, 64, 64, 1);
  CellGrid grid = make_cell_grid(64, 64, cfg);
  Var f = constant(rand_tensor({5, 64, 64}, 9));
  Var c0 = init_centers(f, grid);
  for (auto _ : state)
    benchmark::DoNotOptimize(cluster_iterate(f, c0, grid, 1).q->value.data());
  state.SetItemsProcessed(state.iterations() * 64 * 64);
}
BENCHMARK(BM_ClusterIterate)->Arg(16)->Arg(64)->Arg(256);

void BM_SegmentationMetrics(benchmark::State& state) {
  const int hw = (int)state.range(0);
  LabelMap s = rand_labels(hw, hw, 64, 10);
  LabelMap g = rand_labels(hw, hw, 8, 11);
  for (auto _ : state) {
    benchmark::DoNotOptimize(asa(s, g));
    benchmark::DoNotOptimize(ue(s, g));
    benchmark::DoNotOptimize(br(s, g, 1));
  }
  state.SetItemsProcessed(state.iterations() * hw * hw);
}
BENCHMARK(BM_SegmentationMetrics)->Arg(128)->Arg(256);

void BM_RgbToLab(benchmark::State& state) {
  Tensor rgb = rand_tensor({3, 256, 256}, 12, 0.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(rgb_to_lab(rgb).data());
  state.SetItemsProcessed(state.iterations() * 256 * 256);
}
BENCHMARK(BM_RgbToLab);

void BM_EnforceConnectivity(benchmark::State& state) {
  LabelMap s = rand_labels(128, 128, 64, 13);
  for (auto _ : state) benchmark::DoNotOptimize(enforce_connectivity(s, 64).ids.data());
  state.SetItemsProcessed(state.iterations() * 128 * 128);
}
BENCHMARK(BM_EnforceConnectivity);

}  // namespace

BENCHMARK_MAIN();
