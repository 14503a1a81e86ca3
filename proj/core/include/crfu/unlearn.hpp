#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "crfu/autodiff.hpp"
#include "crfu/dataset.hpp"
#include "crfu/ib.hpp"

namespace crfu {

/// Snapshot of the pre-unlearning model. Used as the anchor of the
/// remembering KL terms; parameters are bit-identical to the source at
/// creation and never touched afterwards.
struct FrozenReference {
  IBModel model;
  std::uint64_t checksum = 0;
};

FrozenReference freeze(const IBModel& model);
/// Content hash over parameter names, shapes and raw float bytes.
std::uint64_t model_checksum(const IBModel& model);

/// Batch-mean KL(p || q) of two diagonal Gaussians:
/// sum_j [ log(sig_q/sig_p) + (sig_p^2 + (mu_p - mu_q)^2)/(2 sig_q^2) - 1/2 ].
float kl_diag_gaussians(const GaussianPosterior& p, const GaussianPosterior& q);

/// Categorical KL sum_i p_i log(p_i/q_i) for one probability row, with
/// 0 log 0 = 0 and q floored at 1e-12. Rows must be simplex rows (sum 1
/// within 1e-4, entries nonnegative).
float kl_categorical(std::span<const float> p, std::span<const float> q);

/// Per-sample floor on the forgetting log-probability term; keeps gradient
/// ascent on the erased-label NLL from running away numerically.
inline constexpr float kForgetLogProbFloor = -20.0f;

struct UnlearnConfig {
  float beta = 0.0f;    // must match the trained model's beta
  float beta_u = 0.1f;  // unlearning rate on the forgetting terms
  float learning_rate = 1e-3f;
  std::size_t batch_size = 20;
  std::size_t max_epochs = 100;
  float stop_backdoor_acc = 0.02f;
  std::uint64_t seed = 1;
  bool allow_beta_mismatch = false;
  // Larger-than-training Adam epsilon: parameters with tiny gradients then
  // move proportionally to those gradients instead of at full step size,
  // which keeps small unlearning rates gentle on retained knowledge.
  float adam_eps = 1e-3f;
};

struct UnlearnEpoch {
  std::size_t epoch = 0;  // 0 is the pre-unlearning baseline row
  double backdoor_acc = 0.0;
  double remain_acc = 0.0;
  double rep_loss = 0.0;
  double app_loss = 0.0;
  std::uint64_t cum_sample_grads = 0;
  double wall_ms = 0.0;
};

struct UnlearnTrace {
  std::vector<UnlearnEpoch> epochs;
  std::uint64_t sample_grads = 0;
  bool reached_threshold = false;
  std::size_t threshold_epoch = 0;  // first epoch at/below the stop threshold
};

/// CSV: epoch,backdoor_acc,remain_acc,rep_loss,app_loss,cum_sample_grads,wall_ms
void write_unlearn_trace(const std::string& path, const UnlearnTrace& trace);

struct CrfuLossNodes {
  NodeId total;  // beta * rep + app, the optimized scalar
  NodeId rep;
  NodeId app;
};

/// Assembles the per-step unlearning objective on `tape`:
///   rep = beta_u * KL[p(Z|x_e) || N(0,I)] + KL[p_fix(Z|x_e) || p(Z|x_e)]
///   app = beta_u * mean log p(y_e|z)      + KL[p_fix(.|z)   || p(.|z)]
///   total = beta * rep + app,   z sampled from the current posterior.
/// Frozen parameters are bound as constants, so gradients reach only the
/// current model. `with_remembering` = false drops both anchor terms (the
/// naive ablation).
CrfuLossNodes build_crfu_loss(Tape& tape, const IBModel& model, const BoundParams& model_rep,
                              const BoundParams& model_app, const IBModel& frozen, NodeId x,
                              const std::vector<std::uint32_t>& y, Tensor eps, float beta,
                              float beta_u, bool with_remembering);

/// Eager single-batch values of the two loss pieces (for tests and probes).
float crfu_rep_loss(const IBModel& model, const FrozenReference& frozen, const Tensor& x_e,
                    float beta_u);
float crfu_app_loss(const IBModel& model, const FrozenReference& frozen, const Tensor& x_e,
                    const std::vector<std::uint32_t>& y_e, const Tensor& eps, float beta_u);

/// CRFU: minibatch descent on beta * rep + app over the erased set only,
/// stopping once backdoor accuracy on the erased set falls to the configured
/// threshold (checked per epoch) or max_epochs runs out.
std::pair<IBModel, UnlearnTrace> unlearn(const IBModel& model, const LabeledSet& erased,
                                         const UnlearnConfig& cfg,
                                         const LabeledSet& probe_remaining);

/// Ablation: the same loop without the remembering KL anchors.
std::pair<IBModel, UnlearnTrace> naive_unlearn_baseline(const IBModel& model,
                                                        const LabeledSet& erased,
                                                        const UnlearnConfig& cfg,
                                                        const LabeledSet& probe_remaining);

/// Gold standard: fresh model trained from scratch on the remaining data with
/// the original hyperparameters.
IBModel retrain_baseline(const LabeledSet& remaining, const TrainConfig& cfg,
                         const ModelDims& dims, TrainTrace* trace = nullptr);

}  // namespace crfu
