#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "crfu/tensor.hpp"

namespace crfu {

using NodeId = std::uint32_t;

/// Reverse-mode tape for one scalar loss. Nodes are appended in topological
/// order by construction; backward() walks them in reverse. A tape is built,
/// differentiated and dropped within a single optimizer step — never shared.
///
/// Every forward op validates shapes and rejects non-finite outputs, so a
/// diverging loss surfaces as a NumericError at the op that produced it.
class Tape {
 public:
  /// Generic leaf (parameter binding or constant input).
  NodeId leaf(Tensor value);

  /// y = x W + b for x:[B,I], W:[I,O], b:[O].
  NodeId linear(NodeId x, NodeId w, NodeId b);
  /// Elementwise max(0, x); subgradient at 0 is 0.
  NodeId relu(NodeId x);
  /// Elementwise logistic 1/(1+exp(-x)).
  NodeId sigmoid(NodeId x);
  /// Column slice [begin, end) of a rank-2 tensor.
  NodeId slice_cols(NodeId x, std::size_t begin, std::size_t end);
  /// Elementwise clamp to [lo, hi]; gradient is passed only where unclamped.
  NodeId clamp(NodeId x, float lo, float hi);
  /// z = mu + exp(logvar/2) * eps with eps a fixed standard-normal draw.
  NodeId reparameterize(NodeId mu, NodeId logvar, Tensor eps);
  /// Row-wise softmax.
  NodeId softmax(NodeId logits);
  /// Mean over rows of -log softmax(logits)[label]; max-stabilized.
  NodeId softmax_cross_entropy(NodeId logits, std::vector<std::uint32_t> labels);
  /// Mean over rows of log softmax(logits)[label], each sample floored at
  /// `floor` (gradient gated off where the floor is active).
  NodeId mean_log_prob(NodeId logits, std::vector<std::uint32_t> labels, float floor);
  /// Batch mean of KL(N(mu, exp(logvar)) || N(0, I)) summed over columns.
  NodeId kl_standard_normal(NodeId mu, NodeId logvar);
  /// Batch mean of KL(p || q) for two diagonal Gaussians, differentiable in
  /// all four arguments.
  NodeId kl_diag_gaussians(NodeId mu_p, NodeId logvar_p, NodeId mu_q, NodeId logvar_q);
  /// Batch mean of the categorical KL sum_i p_i log(p_i/q_i) per row, with
  /// 0 log 0 = 0 and q floored at 1e-12.
  NodeId kl_categorical(NodeId p, NodeId q);
  /// Same KL taken between softmax(p_logits) and softmax(q_logits), fused so
  /// the q-side gradient is the analytic (q - p)/B — exactly zero when both
  /// logit rows coincide.
  NodeId kl_categorical_logits(NodeId p_logits, NodeId q_logits);
  /// Mean squared error against a constant target, averaged over all elements.
  NodeId mse(NodeId pred, Tensor target);
  /// Sum of all elements -> scalar.
  NodeId sum(NodeId x);
  /// Elementwise a + b (same shape).
  NodeId add(NodeId a, NodeId b);
  /// Elementwise c * x.
  NodeId scale(NodeId x, float c);

  /// Populates gradients for every node reachable from `loss`; unreachable
  /// nodes keep zero gradients. Throws ContractError unless loss is scalar.
  void backward(NodeId loss);

  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  /// Valid after backward(); zero tensor for unreachable nodes.
  const Tensor& grad(NodeId id) const { return nodes_[id].grad; }
  float scalar_value(NodeId id) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Tape&)> backprop;  // empty for leaves
  };

  NodeId push(Tensor value, std::function<void(Tape&)> backprop);
  Tensor& grad_ref(NodeId id) { return nodes_[id].grad; }

  std::vector<Node> nodes_;
};

}  // namespace crfu
