#pragma once

// Double-precision forward re-implementations used as finite-difference
// oracles. Deliberately independent of the float32 engine: plain loops,
// float64 arithmetic, same activation conventions. Each returns the loss and
// an activation signature (relu/clamp/floor decisions); finite differences
// are only valid when the signature is unchanged by the probe step.

#include <cmath>
#include <cstdint>
#include <vector>

#include "crfu/ib.hpp"
#include "crfu/params.hpp"
#include "crfu/unlearn.hpp"

namespace testutil {

struct F64Result {
  double value = 0.0;
  std::uint64_t activation_sig = 0;
};

class SigHash {
 public:
  void feed(bool bit) {
    h_ ^= static_cast<std::uint64_t>(bit) + 0x9e3779b97f4a7c15ULL + (h_ << 6) + (h_ >> 2);
  }
  std::uint64_t value() const { return h_; }

 private:
  std::uint64_t h_ = 1469598103934665603ULL;
};

inline std::vector<double> linear_f64(const std::vector<double>& x, std::size_t in,
                                      std::size_t out, const crfu::Tensor& w,
                                      const crfu::Tensor& b, std::size_t batch) {
  std::vector<double> y(batch * out);
  for (std::size_t r = 0; r < batch; ++r) {
    for (std::size_t o = 0; o < out; ++o) {
      double acc = b.data[o];
      for (std::size_t i = 0; i < in; ++i) {
        acc += x[r * in + i] * static_cast<double>(w.data[i * out + o]);
      }
      y[r * out + o] = acc;
    }
  }
  return y;
}

inline std::vector<double> mlp_f64(const crfu::ParamSet& params,
                                   const std::vector<std::size_t>& dims,
                                   std::vector<double> h, std::size_t batch, SigHash& sig) {
  for (std::size_t layer = 0; layer + 1 < dims.size(); ++layer) {
    std::string key = std::to_string(layer);
    h = linear_f64(h, dims[layer], dims[layer + 1], params.at(key + ".w"), params.at(key + ".b"),
                   batch);
    if (layer + 2 < dims.size()) {
      for (double& v : h) {
        bool on = v > 0.0;
        sig.feed(on);
        if (!on) v = 0.0;
      }
    }
  }
  return h;
}

inline double log_sum_exp_row(const std::vector<double>& logits, std::size_t row, std::size_t c) {
  double mx = logits[row * c];
  for (std::size_t i = 1; i < c; ++i) mx = std::max(mx, logits[row * c + i]);
  double acc = 0.0;
  for (std::size_t i = 0; i < c; ++i) acc += std::exp(logits[row * c + i] - mx);
  return mx + std::log(acc);
}

inline std::vector<double> to_f64(const crfu::Tensor& t) {
  return std::vector<double>(t.data.begin(), t.data.end());
}

/// linear/relu stack + softmax cross entropy.
inline F64Result mlp_xent_f64(const crfu::ParamSet& params, const std::vector<std::size_t>& dims,
                              const crfu::Tensor& x, const std::vector<std::uint32_t>& labels) {
  SigHash sig;
  std::size_t batch = x.rows();
  std::vector<double> logits = mlp_f64(params, dims, to_f64(x), batch, sig);
  std::size_t c = dims.back();
  double acc = 0.0;
  for (std::size_t r = 0; r < batch; ++r) {
    acc += log_sum_exp_row(logits, r, c) - logits[r * c + labels[r]];
  }
  return {acc / static_cast<double>(batch), sig.value()};
}

struct EncodeF64 {
  std::vector<double> mu;
  std::vector<double> logvar;
};

inline EncodeF64 encode_f64(const crfu::IBModel& model, const crfu::Tensor& x, SigHash& sig) {
  std::size_t batch = x.rows(), k = model.latent_dim;
  std::vector<double> head = mlp_f64(model.rep, model.rep_dims, to_f64(x), batch, sig);
  EncodeF64 out;
  out.mu.resize(batch * k);
  out.logvar.resize(batch * k);
  for (std::size_t r = 0; r < batch; ++r) {
    for (std::size_t i = 0; i < k; ++i) {
      out.mu[r * k + i] = head[r * 2 * k + i];
      double lv = head[r * 2 * k + k + i];
      bool clamped = lv < crfu::kLogvarClampLo || lv > crfu::kLogvarClampHi;
      sig.feed(clamped);
      out.logvar[r * k + i] =
          std::min<double>(crfu::kLogvarClampHi, std::max<double>(crfu::kLogvarClampLo, lv));
    }
  }
  return out;
}

inline double kl_prior_f64(const EncodeF64& post, std::size_t batch) {
  double acc = 0.0;
  for (std::size_t i = 0; i < post.mu.size(); ++i) {
    acc += 0.5 * (post.mu[i] * post.mu[i] + std::exp(post.logvar[i]) - post.logvar[i] - 1.0);
  }
  return acc / static_cast<double>(batch);
}

inline std::vector<double> reparam_f64(const EncodeF64& post, const crfu::Tensor& eps) {
  std::vector<double> z(post.mu.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    z[i] = post.mu[i] + std::exp(0.5 * post.logvar[i]) * eps.data[i];
  }
  return z;
}

/// Full variational IB loss: xent over a reparameterized sample + beta * KL.
inline F64Result ib_loss_f64(const crfu::IBModel& model, const crfu::Tensor& x,
                             const std::vector<std::uint32_t>& y, const crfu::Tensor& eps) {
  SigHash sig;
  std::size_t batch = x.rows();
  EncodeF64 post = encode_f64(model, x, sig);
  std::vector<double> z = reparam_f64(post, eps);
  std::vector<double> logits = mlp_f64(model.app, model.app_dims, std::move(z), batch, sig);
  std::size_t c = model.class_count;
  double app = 0.0;
  for (std::size_t r = 0; r < batch; ++r) {
    app += log_sum_exp_row(logits, r, c) - logits[r * c + y[r]];
  }
  app /= static_cast<double>(batch);
  double rep = kl_prior_f64(post, batch);
  return {app + static_cast<double>(model.beta) * rep, sig.value()};
}

/// The assembled CRFU objective beta * rep + app with remembering anchors.
inline F64Result crfu_total_f64(const crfu::IBModel& model, const crfu::IBModel& frozen,
                                const crfu::Tensor& x, const std::vector<std::uint32_t>& y,
                                const crfu::Tensor& eps, double beta, double beta_u) {
  SigHash sig;
  std::size_t batch = x.rows(), k = model.latent_dim, c = model.class_count;
  EncodeF64 cur = encode_f64(model, x, sig);
  EncodeF64 fix = encode_f64(frozen, x, sig);
  std::vector<double> z = reparam_f64(cur, eps);

  double rep = beta_u * kl_prior_f64(cur, batch);
  double remember_rep = 0.0;
  for (std::size_t i = 0; i < cur.mu.size(); ++i) {
    double dl = fix.logvar[i] - cur.logvar[i];
    double dm = fix.mu[i] - cur.mu[i];
    remember_rep += 0.5 * (-dl + std::exp(dl) + dm * dm * std::exp(-cur.logvar[i]) - 1.0);
  }
  rep += remember_rep / static_cast<double>(batch);

  std::vector<double> cur_logits = mlp_f64(model.app, model.app_dims, z, batch, sig);
  std::vector<double> fix_logits = mlp_f64(frozen.app, frozen.app_dims, z, batch, sig);

  double forget = 0.0;
  for (std::size_t r = 0; r < batch; ++r) {
    double lp = cur_logits[r * c + y[r]] - log_sum_exp_row(cur_logits, r, c);
    bool floored = lp <= crfu::kForgetLogProbFloor;
    sig.feed(floored);
    forget += floored ? crfu::kForgetLogProbFloor : lp;
  }
  double app = beta_u * forget / static_cast<double>(batch);

  double remember_app = 0.0;
  for (std::size_t r = 0; r < batch; ++r) {
    double lse_fix = log_sum_exp_row(fix_logits, r, c);
    double lse_cur = log_sum_exp_row(cur_logits, r, c);
    for (std::size_t i = 0; i < c; ++i) {
      double lp = fix_logits[r * c + i] - lse_fix;
      double lq = cur_logits[r * c + i] - lse_cur;
      remember_app += std::exp(lp) * (lp - lq);
    }
  }
  app += remember_app / static_cast<double>(batch);

  return {static_cast<double>(beta) * rep + app, sig.value()};
}

}  // namespace testutil
