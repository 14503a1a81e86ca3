#include "crfu/ib.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "crfu/checkpoint.hpp"
#include "crfu/errors.hpp"
#include "crfu/optim.hpp"
#include "crfu/rng.hpp"

namespace crfu {

namespace {

void init_mlp(ParamSet& params, const std::vector<std::size_t>& dims, Rng& rng) {
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    std::size_t fan_in = dims[i], fan_out = dims[i + 1];
    float limit = std::sqrt(6.0f / static_cast<float>(fan_in));
    Tensor w = Tensor::zeros({fan_in, fan_out});
    for (float& v : w.data) v = static_cast<float>((2.0 * rng.uniform() - 1.0) * limit);
    params.add(std::to_string(i) + ".w", std::move(w));
    params.add(std::to_string(i) + ".b", Tensor::zeros({fan_out}));
  }
}

std::vector<std::size_t> chain_dims(std::size_t in, const std::vector<std::size_t>& hidden,
                                    std::size_t out) {
  std::vector<std::size_t> dims;
  dims.push_back(in);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out);
  return dims;
}

Tensor batch_rows(const Tensor& images, const std::vector<std::uint32_t>& idx) {
  const std::size_t d = images.cols();
  Tensor out = Tensor::zeros({idx.size(), d});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(images.data.begin() + idx[i] * d, d, out.data.begin() + i * d);
  }
  return out;
}

}  // namespace

ParamSet init_mlp_params(const std::vector<std::size_t>& dims, std::uint64_t seed) {
  ParamSet params;
  Rng rng = Rng::substream(seed, "init");
  init_mlp(params, dims, rng);
  return params;
}

IBModel make_ib_model(std::size_t input_dim, std::size_t class_count, const ModelDims& dims,
                      float beta, std::uint64_t seed) {
  if (beta < 0.0f) throw InputError("make_ib_model: beta must be >= 0");
  if (dims.latent_dim == 0) throw InputError("make_ib_model: latent_dim must be positive");
  if (class_count < 2) throw InputError("make_ib_model: need at least 2 classes");
  IBModel m;
  m.beta = beta;
  m.latent_dim = dims.latent_dim;
  m.class_count = class_count;
  m.rep_dims = chain_dims(input_dim, dims.rep_hidden, 2 * dims.latent_dim);
  m.app_dims = chain_dims(dims.latent_dim, dims.app_hidden, class_count);
  Rng rng = Rng::substream(seed, "init");
  init_mlp(m.rep, m.rep_dims, rng);
  init_mlp(m.app, m.app_dims, rng);
  return m;
}

IBModel clone_model(const IBModel& model) { return model; }

bool models_equal(const IBModel& a, const IBModel& b) {
  if (a.rep_dims != b.rep_dims || a.app_dims != b.app_dims) return false;
  auto eq = [](const ParamSet& x, const ParamSet& y) {
    if (x.count() != y.count()) return false;
    auto it = y.all().begin();
    for (const auto& [name, t] : x.all()) {
      if (it->first != name || it->second.shape != t.shape || it->second.data != t.data) {
        return false;
      }
      ++it;
    }
    return true;
  };
  return eq(a.rep, b.rep) && eq(a.app, b.app);
}

BoundParams bind_params(Tape& tape, const ParamSet& params) {
  BoundParams bound;
  for (const auto& [name, t] : params.all()) bound.ids.emplace(name, tape.leaf(t));
  return bound;
}

std::map<std::string, Tensor> collect_grads(const Tape& tape, const BoundParams& bound) {
  std::map<std::string, Tensor> grads;
  for (const auto& [name, id] : bound.ids) grads.emplace(name, tape.grad(id));
  return grads;
}

NodeId mlp_logits(Tape& tape, const BoundParams& bound, const std::vector<std::size_t>& dims,
                  NodeId x) {
  NodeId h = x;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    std::string key = std::to_string(i);
    h = tape.linear(h, bound.ids.at(key + ".w"), bound.ids.at(key + ".b"));
    if (i + 2 < dims.size()) h = tape.relu(h);
  }
  return h;
}

PosteriorNodes encode_nodes(Tape& tape, const IBModel& model, const BoundParams& rep_bound,
                            NodeId x) {
  if (tape.value(x).cols() != model.input_dim()) {
    throw DimensionError("encode: input width " + std::to_string(tape.value(x).cols()) +
                         " != representer input " + std::to_string(model.input_dim()));
  }
  NodeId head = mlp_logits(tape, rep_bound, model.rep_dims, x);
  std::size_t k = model.latent_dim;
  NodeId mu = tape.slice_cols(head, 0, k);
  NodeId lv = tape.clamp(tape.slice_cols(head, k, 2 * k), kLogvarClampLo, kLogvarClampHi);
  return {mu, lv};
}

NodeId approximate_nodes(Tape& tape, const IBModel& model, const BoundParams& app_bound,
                         NodeId z) {
  if (tape.value(z).cols() != model.latent_dim) {
    throw DimensionError("approximate: latent width " + std::to_string(tape.value(z).cols()) +
                         " != K = " + std::to_string(model.latent_dim));
  }
  return tape.softmax(mlp_logits(tape, app_bound, model.app_dims, z));
}

GaussianPosterior encode(const IBModel& model, const Tensor& x) {
  Tape tape;
  BoundParams rep = bind_params(tape, model.rep);
  PosteriorNodes post = encode_nodes(tape, model, rep, tape.leaf(x));
  return {tape.value(post.mu), tape.value(post.logvar)};
}

Tensor reparameterize(const GaussianPosterior& post, const Tensor& eps) {
  if (!post.mu.same_shape(post.logvar) || !post.mu.same_shape(eps)) {
    throw DimensionError("reparameterize: shape mismatch");
  }
  Tensor z = Tensor::zeros(post.mu.shape);
  for (std::size_t i = 0; i < z.data.size(); ++i) {
    z.data[i] = post.mu.data[i] + std::exp(0.5f * post.logvar.data[i]) * eps.data[i];
  }
  return z;
}

float kl_to_standard_normal(const GaussianPosterior& post) {
  if (!post.mu.same_shape(post.logvar)) throw DimensionError("posterior shape mismatch");
  const std::size_t B = post.mu.rows();
  double acc = 0.0;
  for (std::size_t i = 0; i < post.mu.data.size(); ++i) {
    double m = post.mu.data[i], l = post.logvar.data[i];
    acc += 0.5 * (m * m + std::exp(l) - l - 1.0);
  }
  return static_cast<float>(acc / static_cast<double>(B));
}

Tensor approximate(const IBModel& model, const Tensor& z) {
  Tape tape;
  BoundParams app = bind_params(tape, model.app);
  return tape.value(approximate_nodes(tape, model, app, tape.leaf(z)));
}

IBLossNodes ib_loss_nodes(Tape& tape, const IBModel& model, const BoundParams& rep_bound,
                          const BoundParams& app_bound, NodeId x,
                          const std::vector<std::uint32_t>& y, Tensor eps) {
  PosteriorNodes post = encode_nodes(tape, model, rep_bound, x);
  NodeId z = tape.reparameterize(post.mu, post.logvar, std::move(eps));
  NodeId logits = mlp_logits(tape, app_bound, model.app_dims, z);
  NodeId app = tape.softmax_cross_entropy(logits, y);
  NodeId rep = tape.kl_standard_normal(post.mu, post.logvar);
  NodeId total = tape.add(app, tape.scale(rep, model.beta));
  return {total, app, rep};
}

IBLoss ib_loss(const IBModel& model, const Tensor& x, const std::vector<std::uint32_t>& y,
               const Tensor& eps) {
  if (y.empty()) throw InputError("ib_loss: empty batch");
  Tape tape;
  BoundParams rep = bind_params(tape, model.rep);
  BoundParams app = bind_params(tape, model.app);
  IBLossNodes nodes = ib_loss_nodes(tape, model, rep, app, tape.leaf(x), y, eps);
  return {tape.scalar_value(nodes.total), tape.scalar_value(nodes.app),
          tape.scalar_value(nodes.rep)};
}

std::vector<std::uint32_t> predict_labels(const IBModel& model, const Tensor& x) {
  const std::size_t n = x.rows();
  std::vector<std::uint32_t> out(n);
  constexpr std::size_t kChunk = 512;
  for (std::size_t start = 0; start < n; start += kChunk) {
    std::size_t stop = std::min(n, start + kChunk);
    Tensor chunk = Tensor::zeros({stop - start, x.cols()});
    std::copy_n(x.data.begin() + start * x.cols(), (stop - start) * x.cols(),
                chunk.data.begin());
    GaussianPosterior post = encode(model, chunk);
    Tensor probs = approximate(model, post.mu);
    for (std::size_t r = 0; r < probs.rows(); ++r) {
      std::span<const float> row = probs.row(r);
      out[start + r] = static_cast<std::uint32_t>(
          std::max_element(row.begin(), row.end()) - row.begin());
    }
  }
  return out;
}

IBModel train_ib(const LabeledSet& data, const TrainConfig& cfg, const ModelDims& dims,
                 TrainTrace* trace) {
  data.validate();
  if (cfg.batch_size < 1 || cfg.epochs < 1) {
    throw InputError("train_ib: batch_size and epochs must be >= 1");
  }
  IBModel model = make_ib_model(data.images.cols(), data.class_count, dims, cfg.beta,
                                Rng::substream(cfg.seed, "train").next_u64());
  Rng shuffle_rng = Rng::substream(cfg.seed, "train.shuffle");
  Rng eps_rng = Rng::substream(cfg.seed, "train.eps");

  const std::size_t n = data.size();
  std::vector<std::uint32_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<std::uint32_t>(i);

  AdamState adam_rep, adam_app;
  std::uint64_t sample_grads = 0;
  std::uint64_t step = 0;
  const float target_beta = model.beta;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    model.beta = cfg.warmup_epochs > 0 && epoch <= cfg.warmup_epochs
                     ? target_beta * static_cast<float>(epoch) /
                           static_cast<float>(cfg.warmup_epochs + 1)
                     : target_beta;
    shuffle_rng.shuffle(order);
    double sum_total = 0.0, sum_app = 0.0, sum_rep = 0.0;
    std::size_t steps_in_epoch = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      std::size_t stop = std::min(n, start + cfg.batch_size);
      std::vector<std::uint32_t> idx(order.begin() + start, order.begin() + stop);
      Tensor x = batch_rows(data.images, idx);
      std::vector<std::uint32_t> y;
      y.reserve(idx.size());
      for (std::uint32_t i : idx) y.push_back(data.labels[i]);
      Tensor eps = Tensor::zeros({idx.size(), model.latent_dim});
      for (float& e : eps.data) e = eps_rng.normal();

      ++step;
      try {
        Tape tape;
        BoundParams rep = bind_params(tape, model.rep);
        BoundParams app = bind_params(tape, model.app);
        IBLossNodes nodes =
            ib_loss_nodes(tape, model, rep, app, tape.leaf(std::move(x)), y, std::move(eps));
        tape.backward(nodes.total);
        sum_total += tape.scalar_value(nodes.total);
        sum_app += tape.scalar_value(nodes.app);
        sum_rep += tape.scalar_value(nodes.rep);
        adam_rep.step(model.rep, collect_grads(tape, rep), cfg.learning_rate);
        adam_app.step(model.app, collect_grads(tape, app), cfg.learning_rate);
      } catch (const NumericError& e) {
        throw NumericError("train_ib step " + std::to_string(step) + ": " + e.what());
      }
      sample_grads += idx.size();
      ++steps_in_epoch;
    }
    if (trace) {
      std::vector<std::uint32_t> pred = predict_labels(model, data.images);
      std::size_t hits = 0;
      for (std::size_t i = 0; i < n; ++i) hits += pred[i] == data.labels[i];
      trace->epochs.push_back(TrainEpoch{epoch, sum_total / steps_in_epoch,
                                         sum_app / steps_in_epoch, sum_rep / steps_in_epoch,
                                         static_cast<double>(hits) / static_cast<double>(n)});
    }
  }
  model.beta = target_beta;
  if (trace) trace->sample_grads = sample_grads;
  return model;
}

void write_train_trace(const std::string& path, const TrainTrace& trace) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw InputError("cannot open for writing: " + path);
  f << "epoch,total,app,rep,train_accuracy\n";
  char buf[160];
  for (const TrainEpoch& e : trace.epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g\n", e.epoch, e.total, e.app, e.rep,
                  e.train_accuracy);
    f << buf;
  }
}

std::map<std::string, Tensor> model_to_tensors(const IBModel& model) {
  std::map<std::string, Tensor> out;
  for (const auto& [name, t] : model.rep.all()) out.emplace("rep." + name, t);
  for (const auto& [name, t] : model.app.all()) out.emplace("app." + name, t);
  out.emplace("meta.beta", Tensor::scalar(model.beta));
  out.emplace("meta.K", Tensor::scalar(static_cast<float>(model.latent_dim)));
  return out;
}

IBModel model_from_tensors(const std::map<std::string, Tensor>& tensors) {
  IBModel m;
  auto meta_beta = tensors.find("meta.beta");
  auto meta_k = tensors.find("meta.K");
  if (meta_beta == tensors.end() || meta_k == tensors.end()) {
    throw FormatError("model checkpoint missing meta tensors");
  }
  m.beta = meta_beta->second.data.at(0);
  m.latent_dim = static_cast<std::size_t>(meta_k->second.data.at(0));
  for (const auto& [name, t] : tensors) {
    if (name.rfind("rep.", 0) == 0) {
      m.rep.add(name.substr(4), t);
    } else if (name.rfind("app.", 0) == 0) {
      m.app.add(name.substr(4), t);
    }
  }
  auto dims_of = [](const ParamSet& p) {
    std::vector<std::size_t> dims;
    for (std::size_t i = 0;; ++i) {
      std::string key = std::to_string(i) + ".w";
      if (!p.contains(key)) break;
      const Tensor& w = p.at(key);
      if (dims.empty()) dims.push_back(w.rows());
      dims.push_back(w.cols());
    }
    return dims;
  };
  m.rep_dims = dims_of(m.rep);
  m.app_dims = dims_of(m.app);
  if (m.rep_dims.size() < 2 || m.app_dims.size() < 2) {
    throw FormatError("model checkpoint has no layers");
  }
  if (m.rep_dims.back() != 2 * m.latent_dim || m.app_dims.front() != m.latent_dim) {
    throw FormatError("model checkpoint dims inconsistent with meta.K");
  }
  m.class_count = m.app_dims.back();
  return m;
}

void save_ib_model(const std::string& path, const IBModel& model) {
  save_checkpoint(path, model_to_tensors(model));
}

IBModel load_ib_model(const std::string& path) {
  return model_from_tensors(load_checkpoint(path));
}

}  // namespace crfu
