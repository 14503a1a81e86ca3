#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "crfu/autodiff.hpp"
#include "crfu/dataset.hpp"
#include "crfu/params.hpp"
#include "crfu/tensor.hpp"

namespace crfu {

/// Diagonal-Gaussian latent parameters emitted by the representer:
/// mu and log-variance per sample, logvar clamped to [-10, 10].
struct GaussianPosterior {
  Tensor mu;      // [batch, K]
  Tensor logvar;  // [batch, K]
};

inline constexpr float kLogvarClampLo = -10.0f;
inline constexpr float kLogvarClampHi = 10.0f;

/// Hidden widths for the two MLPs; input width and class count come from the
/// dataset. The representer head is 2K wide (mu then logvar).
struct ModelDims {
  std::vector<std::size_t> rep_hidden{64};
  std::vector<std::size_t> app_hidden{32};
  std::size_t latent_dim = 32;
};

/// Stochastic IB classifier: representer MLP -> diagonal Gaussian posterior,
/// approximator MLP from sampled latents to class logits.
struct IBModel {
  ParamSet rep;                        // layer params named "<i>.w" / "<i>.b"
  ParamSet app;
  std::vector<std::size_t> rep_dims;   // [d, hidden..., 2K]
  std::vector<std::size_t> app_dims;   // [K, hidden..., C]
  float beta = 0.0f;
  std::size_t latent_dim = 0;
  std::size_t class_count = 0;

  std::size_t input_dim() const { return rep_dims.front(); }
};

/// Seeded He-uniform initialization (biases zero).
IBModel make_ib_model(std::size_t input_dim, std::size_t class_count, const ModelDims& dims,
                      float beta, std::uint64_t seed);

/// He-uniform MLP parameters named "<i>.w"/"<i>.b" for a width chain.
ParamSet init_mlp_params(const std::vector<std::size_t>& dims, std::uint64_t seed);

IBModel clone_model(const IBModel& model);
bool models_equal(const IBModel& a, const IBModel& b);

// ---- tape plumbing shared by training, unlearning and tests ----

/// Per-step binding of a ParamSet onto a tape (leaf per parameter).
struct BoundParams {
  std::map<std::string, NodeId> ids;
};

BoundParams bind_params(Tape& tape, const ParamSet& params);
/// Gradients for every bound parameter, keyed like the ParamSet.
std::map<std::string, Tensor> collect_grads(const Tape& tape, const BoundParams& bound);

/// MLP forward: linear/ReLU stacks with a plain final linear layer.
NodeId mlp_logits(Tape& tape, const BoundParams& bound, const std::vector<std::size_t>& dims,
                  NodeId x);

struct PosteriorNodes {
  NodeId mu;
  NodeId logvar;
};

/// Representer forward on tape: 2K head split into (mu, logvar), clamped.
PosteriorNodes encode_nodes(Tape& tape, const IBModel& model, const BoundParams& rep_bound,
                            NodeId x);
/// Approximator forward on tape up to softmax probabilities.
NodeId approximate_nodes(Tape& tape, const IBModel& model, const BoundParams& app_bound, NodeId z);

// ---- the spec-level operations ----

GaussianPosterior encode(const IBModel& model, const Tensor& x);
Tensor reparameterize(const GaussianPosterior& post, const Tensor& eps);
float kl_to_standard_normal(const GaussianPosterior& post);
Tensor approximate(const IBModel& model, const Tensor& z);

struct IBLoss {
  float total;
  float app;
  float rep;
};

IBLoss ib_loss(const IBModel& model, const Tensor& x, const std::vector<std::uint32_t>& y,
               const Tensor& eps);

struct IBLossNodes {
  NodeId total;
  NodeId app;
  NodeId rep;
};

IBLossNodes ib_loss_nodes(Tape& tape, const IBModel& model, const BoundParams& rep_bound,
                          const BoundParams& app_bound, NodeId x,
                          const std::vector<std::uint32_t>& y, Tensor eps);

/// Deterministic class predictions (posterior mean, eps = 0).
std::vector<std::uint32_t> predict_labels(const IBModel& model, const Tensor& x);

struct TrainConfig {
  float learning_rate = 1e-3f;
  std::size_t batch_size = 20;
  std::size_t epochs = 1;
  std::uint64_t seed = 1;
  float beta = 0.0f;
  // Linear beta warm-up over this many leading epochs. At strong compression
  // a cold-started KL term crushes the representation before the classifier
  // learns; annealing first lets features form, then compresses them.
  std::size_t warmup_epochs = 0;
};

struct TrainEpoch {
  std::size_t epoch;      // 1-based
  double total;           // epoch-mean loss components
  double app;
  double rep;
  double train_accuracy;
};

struct TrainTrace {
  std::vector<TrainEpoch> epochs;
  std::uint64_t sample_grads = 0;
};

/// Seeded shuffled-minibatch Adam on ib_loss. Deterministic per (cfg, data).
IBModel train_ib(const LabeledSet& data, const TrainConfig& cfg, const ModelDims& dims,
                 TrainTrace* trace = nullptr);

void write_train_trace(const std::string& path, const TrainTrace& trace);

// ---- checkpoint names: "rep.*", "app.*", "meta.beta", "meta.K" ----

std::map<std::string, Tensor> model_to_tensors(const IBModel& model);
IBModel model_from_tensors(const std::map<std::string, Tensor>& tensors);
void save_ib_model(const std::string& path, const IBModel& model);
IBModel load_ib_model(const std::string& path);

}  // namespace crfu
