#include "crfu/unlearn.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "crfu/errors.hpp"
#include "crfu/metrics.hpp"
#include "crfu/optim.hpp"
#include "crfu/rng.hpp"

namespace crfu {

namespace {

constexpr float kSimplexTolerance = 1e-4f;
constexpr float kCategoricalFloor = 1e-12f;

void append_param_bytes(std::string& buf, const ParamSet& params) {
  for (const auto& [name, t] : params.all()) {
    buf += name;
    buf.push_back('\0');
    for (std::size_t d : t.shape) {
      std::uint64_t v = d;
      buf.append(reinterpret_cast<const char*>(&v), sizeof v);
    }
    buf.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(float));
  }
}

Tensor gather_rows(const Tensor& images, const std::vector<std::uint32_t>& idx) {
  const std::size_t d = images.cols();
  Tensor out = Tensor::zeros({idx.size(), d});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(images.data.begin() + idx[i] * d, d, out.data.begin() + i * d);
  }
  return out;
}

void check_simplex(std::span<const float> row, const char* side) {
  double sum = 0.0;
  for (float v : row) {
    if (v < 0.0f) throw InputError(std::string("kl_categorical: negative entry in ") + side);
    sum += v;
  }
  if (std::abs(sum - 1.0) > kSimplexTolerance) {
    throw InputError(std::string("kl_categorical: ") + side + " does not sum to 1");
  }
}

std::pair<IBModel, UnlearnTrace> run_unlearn_loop(const IBModel& source, const LabeledSet& erased,
                                                  const UnlearnConfig& cfg,
                                                  const LabeledSet& probe_remaining,
                                                  bool with_remembering) {
  if (erased.size() == 0) throw InputError("unlearn: empty erased set");
  erased.validate();
  if (!(cfg.beta_u >= 0.0f)) throw InputError("unlearn: beta_u must be >= 0");
  if (!(cfg.stop_backdoor_acc >= 0.0f && cfg.stop_backdoor_acc <= 1.0f)) {
    throw InputError("unlearn: stop threshold must be in [0, 1]");
  }
  if (!cfg.allow_beta_mismatch && source.beta != cfg.beta) {
    throw InputError("unlearn: cfg.beta differs from the trained model's beta");
  }

  FrozenReference frozen = freeze(source);
  IBModel model = source;

  UnlearnTrace trace;
  auto started = std::chrono::steady_clock::now();
  auto elapsed_ms = [&started] {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started)
        .count();
  };
  auto record = [&](std::size_t epoch, double rep_mean, double app_mean) {
    UnlearnEpoch row;
    row.epoch = epoch;
    row.backdoor_acc = accuracy(model, erased);
    row.remain_acc = probe_remaining.size() ? accuracy(model, probe_remaining) : 0.0;
    row.rep_loss = rep_mean;
    row.app_loss = app_mean;
    row.cum_sample_grads = trace.sample_grads;
    row.wall_ms = elapsed_ms();
    trace.epochs.push_back(row);
    return row.backdoor_acc;
  };

  record(0, 0.0, 0.0);  // pre-unlearning baseline

  Rng shuffle_rng = Rng::substream(cfg.seed, "unlearn.shuffle");
  Rng eps_rng = Rng::substream(cfg.seed, "unlearn.eps");
  const std::size_t n = erased.size();
  std::vector<std::uint32_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<std::uint32_t>(i);

  AdamState adam_rep(0.9f, 0.999f, cfg.adam_eps);
  AdamState adam_app(0.9f, 0.999f, cfg.adam_eps);
  std::uint64_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double sum_rep = 0.0, sum_app = 0.0;
    std::size_t steps_in_epoch = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      std::size_t stop = std::min(n, start + cfg.batch_size);
      std::vector<std::uint32_t> idx(order.begin() + start, order.begin() + stop);
      Tensor x = gather_rows(erased.images, idx);
      std::vector<std::uint32_t> y;
      y.reserve(idx.size());
      for (std::uint32_t i : idx) y.push_back(erased.labels[i]);
      Tensor eps = Tensor::zeros({idx.size(), model.latent_dim});
      for (float& e : eps.data) e = eps_rng.normal();

      ++step;
      try {
        Tape tape;
        BoundParams rep = bind_params(tape, model.rep);
        BoundParams app = bind_params(tape, model.app);
        CrfuLossNodes nodes =
            build_crfu_loss(tape, model, rep, app, frozen.model, tape.leaf(std::move(x)), y,
                            std::move(eps), cfg.beta, cfg.beta_u, with_remembering);
        tape.backward(nodes.total);
        sum_rep += tape.scalar_value(nodes.rep);
        sum_app += tape.scalar_value(nodes.app);
        adam_rep.step(model.rep, collect_grads(tape, rep), cfg.learning_rate);
        adam_app.step(model.app, collect_grads(tape, app), cfg.learning_rate);
      } catch (const NumericError& e) {
        throw NumericError("unlearn step " + std::to_string(step) + ": " + e.what());
      }
      trace.sample_grads += idx.size();
      ++steps_in_epoch;
    }
    double backdoor = record(epoch, sum_rep / steps_in_epoch, sum_app / steps_in_epoch);
    if (backdoor <= cfg.stop_backdoor_acc) {
      trace.reached_threshold = true;
      trace.threshold_epoch = epoch;
      break;
    }
  }
  return {std::move(model), std::move(trace)};
}

}  // namespace

std::uint64_t model_checksum(const IBModel& model) {
  std::string buf;
  append_param_bytes(buf, model.rep);
  append_param_bytes(buf, model.app);
  return fnv1a64(buf);
}

FrozenReference freeze(const IBModel& model) {
  return FrozenReference{model, model_checksum(model)};
}

float kl_diag_gaussians(const GaussianPosterior& p, const GaussianPosterior& q) {
  if (!p.mu.same_shape(q.mu) || !p.logvar.same_shape(q.logvar) ||
      !p.mu.same_shape(p.logvar)) {
    throw DimensionError("kl_diag_gaussians: posterior shapes disagree");
  }
  Tape tape;
  NodeId out = tape.kl_diag_gaussians(tape.leaf(p.mu), tape.leaf(p.logvar), tape.leaf(q.mu),
                                      tape.leaf(q.logvar));
  return tape.scalar_value(out);
}

float kl_categorical(std::span<const float> p, std::span<const float> q) {
  if (p.size() != q.size()) throw DimensionError("kl_categorical: row lengths disagree");
  if (p.empty()) throw InputError("kl_categorical: empty rows");
  check_simplex(p, "p");
  check_simplex(q, "q");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0f) continue;
    float qv = std::max(q[i], kCategoricalFloor);
    acc += static_cast<double>(p[i]) * (std::log(p[i]) - std::log(qv));
  }
  return static_cast<float>(acc);
}

CrfuLossNodes build_crfu_loss(Tape& tape, const IBModel& model, const BoundParams& model_rep,
                              const BoundParams& model_app, const IBModel& frozen, NodeId x,
                              const std::vector<std::uint32_t>& y, Tensor eps, float beta,
                              float beta_u, bool with_remembering) {
  if (model.rep_dims != frozen.rep_dims || model.app_dims != frozen.app_dims) {
    throw InputError("crfu loss: frozen reference architecture differs from the model");
  }
  PosteriorNodes post = encode_nodes(tape, model, model_rep, x);
  NodeId z = tape.reparameterize(post.mu, post.logvar, std::move(eps));
  NodeId cur_logits = mlp_logits(tape, model_app, model.app_dims, z);

  NodeId rep = tape.scale(tape.kl_standard_normal(post.mu, post.logvar), beta_u);
  NodeId app = tape.scale(tape.mean_log_prob(cur_logits, y, kForgetLogProbFloor), beta_u);

  if (with_remembering) {
    // Frozen parameters enter as constants; their forward is on the tape so
    // gradient still reaches the current representer through z.
    BoundParams frozen_rep = bind_params(tape, frozen.rep);
    BoundParams frozen_app = bind_params(tape, frozen.app);
    PosteriorNodes anchor = encode_nodes(tape, frozen, frozen_rep, x);
    rep = tape.add(rep, tape.kl_diag_gaussians(anchor.mu, anchor.logvar, post.mu, post.logvar));
    NodeId fix_logits = mlp_logits(tape, frozen_app, frozen.app_dims, z);
    app = tape.add(app, tape.kl_categorical_logits(fix_logits, cur_logits));
  }

  NodeId total = tape.add(tape.scale(rep, beta), app);
  return {total, rep, app};
}

float crfu_rep_loss(const IBModel& model, const FrozenReference& frozen, const Tensor& x_e,
                    float beta_u) {
  Tape tape;
  BoundParams rep = bind_params(tape, model.rep);
  BoundParams frozen_rep = bind_params(tape, frozen.model.rep);
  NodeId x = tape.leaf(x_e);
  PosteriorNodes post = encode_nodes(tape, model, rep, x);
  PosteriorNodes anchor = encode_nodes(tape, frozen.model, frozen_rep, x);
  NodeId loss =
      tape.add(tape.scale(tape.kl_standard_normal(post.mu, post.logvar), beta_u),
               tape.kl_diag_gaussians(anchor.mu, anchor.logvar, post.mu, post.logvar));
  return tape.scalar_value(loss);
}

float crfu_app_loss(const IBModel& model, const FrozenReference& frozen, const Tensor& x_e,
                    const std::vector<std::uint32_t>& y_e, const Tensor& eps, float beta_u) {
  Tape tape;
  BoundParams rep = bind_params(tape, model.rep);
  BoundParams app = bind_params(tape, model.app);
  BoundParams frozen_app = bind_params(tape, frozen.model.app);
  NodeId x = tape.leaf(x_e);
  PosteriorNodes post = encode_nodes(tape, model, rep, x);
  NodeId z = tape.reparameterize(post.mu, post.logvar, eps);
  NodeId cur_logits = mlp_logits(tape, app, model.app_dims, z);
  NodeId forget = tape.scale(tape.mean_log_prob(cur_logits, y_e, kForgetLogProbFloor), beta_u);
  NodeId fix_logits = mlp_logits(tape, frozen_app, frozen.model.app_dims, z);
  NodeId loss = tape.add(forget, tape.kl_categorical_logits(fix_logits, cur_logits));
  return tape.scalar_value(loss);
}

std::pair<IBModel, UnlearnTrace> unlearn(const IBModel& model, const LabeledSet& erased,
                                         const UnlearnConfig& cfg,
                                         const LabeledSet& probe_remaining) {
  return run_unlearn_loop(model, erased, cfg, probe_remaining, true);
}

std::pair<IBModel, UnlearnTrace> naive_unlearn_baseline(const IBModel& model,
                                                        const LabeledSet& erased,
                                                        const UnlearnConfig& cfg,
                                                        const LabeledSet& probe_remaining) {
  return run_unlearn_loop(model, erased, cfg, probe_remaining, false);
}

IBModel retrain_baseline(const LabeledSet& remaining, const TrainConfig& cfg,
                         const ModelDims& dims, TrainTrace* trace) {
  if (remaining.size() == 0) throw InputError("retrain_baseline: empty remaining set");
  return train_ib(remaining, cfg, dims, trace);
}

void write_unlearn_trace(const std::string& path, const UnlearnTrace& trace) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw InputError("cannot open for writing: " + path);
  f << "epoch,backdoor_acc,remain_acc,rep_loss,app_loss,cum_sample_grads,wall_ms\n";
  char buf[240];
  for (const UnlearnEpoch& e : trace.epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g,%llu,%.9g\n", e.epoch, e.backdoor_acc,
                  e.remain_acc, e.rep_loss, e.app_loss,
                  static_cast<unsigned long long>(e.cum_sample_grads), e.wall_ms);
    f << buf;
  }
}

}  // namespace crfu
