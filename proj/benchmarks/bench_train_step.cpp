#include <benchmark/benchmark.h>

#include "crfu/dataset.hpp"
#include "crfu/ib.hpp"
#include "crfu/optim.hpp"
#include "crfu/rng.hpp"
#include "crfu/unlearn.hpp"

namespace {

struct StepFixture {
  crfu::LabeledSet data;
  crfu::IBModel model;
  crfu::Tensor x;
  std::vector<std::uint32_t> y;
  crfu::Tensor eps;

  StepFixture(std::size_t d, std::size_t batch) {
    data = crfu::synth_blobs(7, 200, 4, d);
    crfu::ModelDims dims;
    dims.rep_hidden = {64};
    dims.app_hidden = {32};
    dims.latent_dim = 32;
    model = crfu::make_ib_model(d, data.class_count, dims, 1e-3f, 7);
    x = crfu::Tensor::zeros({batch, d});
    std::copy_n(data.images.data.begin(), batch * d, x.data.begin());
    y.assign(data.labels.begin(), data.labels.begin() + batch);
    eps = crfu::Tensor::zeros({batch, dims.latent_dim});
    crfu::Rng rng(11);
    for (float& e : eps.data) e = rng.normal();
  }
};

void BM_ib_train_step(benchmark::State& state) {
  StepFixture fix(static_cast<std::size_t>(state.range(0)), 20);
  crfu::AdamState adam_rep, adam_app;
  for (auto _ : state) {
    crfu::Tape tape;
    crfu::BoundParams rep = crfu::bind_params(tape, fix.model.rep);
    crfu::BoundParams app = crfu::bind_params(tape, fix.model.app);
    crfu::IBLossNodes nodes = crfu::ib_loss_nodes(tape, fix.model, rep, app,
                                                  tape.leaf(fix.x), fix.y, fix.eps);
    tape.backward(nodes.total);
    adam_rep.step(fix.model.rep, crfu::collect_grads(tape, rep), 1e-3f);
    adam_app.step(fix.model.app, crfu::collect_grads(tape, app), 1e-3f);
    benchmark::DoNotOptimize(fix.model.rep);
  }
  state.SetItemsProcessed(state.iterations() * 20);
}
BENCHMARK(BM_ib_train_step)->Arg(196)->Arg(784);

void BM_crfu_unlearn_step(benchmark::State& state) {
  StepFixture fix(static_cast<std::size_t>(state.range(0)), 20);
  crfu::FrozenReference frozen = crfu::freeze(fix.model);
  for (auto _ : state) {
    crfu::Tape tape;
    crfu::BoundParams rep = crfu::bind_params(tape, fix.model.rep);
    crfu::BoundParams app = crfu::bind_params(tape, fix.model.app);
    crfu::CrfuLossNodes nodes =
        crfu::build_crfu_loss(tape, fix.model, rep, app, frozen.model, tape.leaf(fix.x), fix.y,
                              fix.eps, 1e-3f, 0.1f, true);
    tape.backward(nodes.total);
    benchmark::DoNotOptimize(tape.grad(rep.ids.begin()->second));
  }
  state.SetItemsProcessed(state.iterations() * 20);
}
BENCHMARK(BM_crfu_unlearn_step)->Arg(196)->Arg(784);

}  // namespace
