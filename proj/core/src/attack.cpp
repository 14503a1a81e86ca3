#include "crfu/attack.hpp"

#include <algorithm>
#include <cmath>

#include "crfu/errors.hpp"
#include "crfu/optim.hpp"
#include "crfu/rng.hpp"

namespace crfu {

namespace {

constexpr std::size_t kAttackBatch = 32;
constexpr std::size_t kEncHidden = 256;
constexpr std::size_t kEncLatent = 64;

NodeId attack_forward(Tape& tape, const AttackNet& net, const BoundParams& enc,
                      const BoundParams& dec, NodeId deltas) {
  NodeId latent = tape.relu(mlp_logits(tape, enc, net.enc_dims, deltas));
  return tape.sigmoid(mlp_logits(tape, dec, net.dec_dims, latent));
}

}  // namespace

Tensor response_delta(const IBModel& before, const IBModel& after, const Tensor& probe,
                      DeltaMode mode) {
  if (before.rep_dims != after.rep_dims || before.app_dims != after.app_dims) {
    throw InputError("response_delta: models do not share an architecture");
  }
  if (mode == DeltaMode::representation) {
    GaussianPosterior pb = encode(before, probe);
    GaussianPosterior pa = encode(after, probe);
    const std::size_t n = probe.rows(), k = before.latent_dim;
    Tensor out = Tensor::zeros({n, 2 * k});
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < k; ++c) {
        out.data[r * 2 * k + c] = pa.mu.data[r * k + c] - pb.mu.data[r * k + c];
        out.data[r * 2 * k + k + c] = pa.logvar.data[r * k + c] - pb.logvar.data[r * k + c];
      }
    }
    return out;
  }
  GaussianPosterior pb = encode(before, probe);
  GaussianPosterior pa = encode(after, probe);
  Tensor yb = approximate(before, pb.mu);
  Tensor ya = approximate(after, pa.mu);
  Tensor out = Tensor::zeros(ya.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = ya.data[i] - yb.data[i];
  return out;
}

std::vector<DeltaRecord> build_shadow_corpus(const LabeledSet& aux, std::size_t n_shadow,
                                             const ShadowProtocol& protocol, std::uint64_t seed) {
  if (n_shadow < 1) throw InputError("build_shadow_corpus: need at least one shadow");
  aux.validate();
  std::size_t per_shadow = static_cast<std::size_t>(
      std::llround(protocol.shadow_fraction * static_cast<double>(aux.size())));
  if (per_shadow < 2 || per_shadow >= aux.size()) {
    throw InputError("build_shadow_corpus: insufficient aux data for shadow_fraction");
  }

  std::vector<DeltaRecord> corpus;
  for (std::size_t s = 0; s < n_shadow; ++s) {
    std::uint64_t shadow_seed = Rng::substream(seed, "shadow:" + std::to_string(s)).next_u64();
    auto [pool, rest] = holdout_split(aux, protocol.shadow_fraction,
                                      Rng::substream(shadow_seed, "subsample").next_u64());
    (void)rest;
    DatasetSplit split = poison_split(pool, protocol.edr, protocol.trigger,
                                      Rng::substream(shadow_seed, "poison").next_u64());

    TrainConfig tcfg = protocol.train;
    tcfg.seed = Rng::substream(shadow_seed, "train").next_u64();
    IBModel model = train_ib(split.full, tcfg, protocol.dims);

    UnlearnConfig ucfg = protocol.unlearn;
    ucfg.seed = Rng::substream(shadow_seed, "unlearn").next_u64();
    LabeledSet erased = split.erased();
    auto [unlearned, trace] = unlearn(model, erased, ucfg, LabeledSet{});
    (void)trace;

    Tensor deltas = response_delta(model, unlearned, erased.images, protocol.mode);
    const std::size_t d = erased.images.cols(), dd = deltas.cols();
    for (std::size_t i = 0; i < erased.size(); ++i) {
      DeltaRecord rec;
      rec.delta = Tensor::zeros({dd});
      std::copy_n(deltas.data.begin() + i * dd, dd, rec.delta.data.begin());
      rec.target_image = Tensor::zeros({d});
      std::copy_n(erased.images.data.begin() + i * d, d, rec.target_image.data.begin());
      rec.target_label = erased.labels[i];
      corpus.push_back(std::move(rec));
    }
  }
  return corpus;
}

AttackNet train_reconstructor(const std::vector<DeltaRecord>& corpus, std::size_t epochs,
                              float lr, std::uint64_t seed) {
  if (corpus.empty()) throw InputError("train_reconstructor: empty corpus");
  const std::size_t in_dim = corpus.front().delta.size();
  const std::size_t out_dim = corpus.front().target_image.size();
  for (const DeltaRecord& r : corpus) {
    if (r.delta.size() != in_dim || r.target_image.size() != out_dim) {
      throw InputError("train_reconstructor: inconsistent record shapes");
    }
  }

  AttackNet net;
  net.enc_dims = {in_dim, kEncHidden, kEncLatent};
  net.dec_dims = {kEncLatent, kEncHidden, out_dim};
  net.enc = init_mlp_params(net.enc_dims, Rng::substream(seed, "attack.enc").next_u64());
  net.dec = init_mlp_params(net.dec_dims, Rng::substream(seed, "attack.dec").next_u64());

  Rng shuffle_rng = Rng::substream(seed, "attack.shuffle");
  const std::size_t n = corpus.size();
  std::vector<std::uint32_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<std::uint32_t>(i);

  AdamState adam_enc, adam_dec;
  double last_epoch_mse = 0.0;
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double sum_mse = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < n; start += kAttackBatch) {
      std::size_t stop = std::min(n, start + kAttackBatch);
      const std::size_t b = stop - start;
      Tensor deltas = Tensor::zeros({b, in_dim});
      Tensor targets = Tensor::zeros({b, out_dim});
      for (std::size_t i = 0; i < b; ++i) {
        const DeltaRecord& r = corpus[order[start + i]];
        std::copy_n(r.delta.data.begin(), in_dim, deltas.data.begin() + i * in_dim);
        std::copy_n(r.target_image.data.begin(), out_dim, targets.data.begin() + i * out_dim);
      }
      Tape tape;
      BoundParams enc = bind_params(tape, net.enc);
      BoundParams dec = bind_params(tape, net.dec);
      NodeId recon = attack_forward(tape, net, enc, dec, tape.leaf(std::move(deltas)));
      NodeId loss = tape.mse(recon, std::move(targets));
      tape.backward(loss);
      sum_mse += tape.scalar_value(loss);
      adam_enc.step(net.enc, collect_grads(tape, enc), lr);
      adam_dec.step(net.dec, collect_grads(tape, dec), lr);
      ++steps;
    }
    last_epoch_mse = sum_mse / static_cast<double>(steps);
  }
  net.final_train_mse = static_cast<float>(last_epoch_mse);
  return net;
}

Tensor reconstruct(const AttackNet& net, const Tensor& deltas) {
  Tape tape;
  BoundParams enc = bind_params(tape, net.enc);
  BoundParams dec = bind_params(tape, net.dec);
  return tape.value(attack_forward(tape, net, enc, dec, tape.leaf(deltas)));
}

double reconstruction_mse(const AttackNet& net, const IBModel& before, const IBModel& after,
                          const LabeledSet& erased, DeltaMode mode) {
  if (erased.size() == 0) throw InputError("reconstruction_mse: empty erased set");
  Tensor deltas = response_delta(before, after, erased.images, mode);
  Tensor recon = reconstruct(net, deltas);
  const std::size_t n = erased.size(), d = erased.images.cols();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double sample = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      double diff = 255.0 * (static_cast<double>(recon.data[i * d + j]) -
                             erased.images.data[i * d + j]);
      sample += diff * diff;
    }
    total += sample / static_cast<double>(d);
  }
  return total / static_cast<double>(n);
}

double membership_auc(const IBModel& before, const IBModel& after, const LabeledSet& erased,
                      const LabeledSet& non_member, DeltaMode mode) {
  if (erased.size() == 0 || non_member.size() == 0) {
    throw InputError("membership_auc: empty score set");
  }
  auto norms = [&](const LabeledSet& set) {
    Tensor deltas = response_delta(before, after, set.images, mode);
    std::vector<double> out(deltas.rows());
    for (std::size_t r = 0; r < deltas.rows(); ++r) {
      double acc = 0.0;
      for (float v : deltas.row(r)) acc += static_cast<double>(v) * v;
      out[r] = std::sqrt(acc);
    }
    return out;
  };
  std::vector<double> pos = norms(erased);
  std::vector<double> neg = norms(non_member);
  return auc_from_scores(pos, neg);
}

double auc_from_scores(std::span<const double> positives, std::span<const double> negatives) {
  if (positives.empty() || negatives.empty()) throw InputError("auc: empty score set");
  struct Entry {
    double score;
    bool positive;
  };
  std::vector<Entry> entries;
  entries.reserve(positives.size() + negatives.size());
  for (double s : positives) entries.push_back({s, true});
  for (double s : negatives) entries.push_back({s, false});
  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.score < b.score; });

  // Average ranks across tie groups; ties then contribute exactly 1/2.
  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < entries.size()) {
    std::size_t j = i;
    while (j < entries.size() && entries[j].score == entries[i].score) ++j;
    double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (entries[k].positive) pos_rank_sum += avg_rank;
    }
    i = j;
  }
  double np = static_cast<double>(positives.size());
  double nn = static_cast<double>(negatives.size());
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

}  // namespace crfu
