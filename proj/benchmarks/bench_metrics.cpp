#include <benchmark/benchmark.h>

#include "crfu/attack.hpp"
#include "crfu/rng.hpp"

namespace {

void BM_auc(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  crfu::Rng rng(3);
  std::vector<double> pos(n), neg(n);
  for (double& v : pos) v = rng.uniform() + 0.2;
  for (double& v : neg) v = rng.uniform();
  for (auto _ : state) {
    benchmark::DoNotOptimize(crfu::auc_from_scores(pos, neg));
  }
  state.SetItemsProcessed(state.iterations() * 2 * n);
}
BENCHMARK(BM_auc)->Arg(100)->Arg(10000);

void BM_kl_diag_gaussians(benchmark::State& state) {
  const std::size_t b = 64, k = 32;
  crfu::Rng rng(5);
  crfu::GaussianPosterior p{crfu::Tensor::zeros({b, k}), crfu::Tensor::zeros({b, k})};
  crfu::GaussianPosterior q = p;
  for (float& v : p.mu.data) v = rng.normal();
  for (float& v : q.mu.data) v = rng.normal();
  for (float& v : p.logvar.data) v = 0.5f * rng.normal();
  for (float& v : q.logvar.data) v = 0.5f * rng.normal();
  for (auto _ : state) {
    benchmark::DoNotOptimize(crfu::kl_diag_gaussians(p, q));
  }
  state.SetItemsProcessed(state.iterations() * b * k);
}
BENCHMARK(BM_kl_diag_gaussians);

}  // namespace
