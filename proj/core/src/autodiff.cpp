#include "crfu/autodiff.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "crfu/errors.hpp"

namespace crfu {

namespace {

constexpr float kCategoricalFloor = 1e-12f;

void check_rank2(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(what) + ": rank-2 tensor expected, got " + t.shape_str());
  }
}

}  // namespace

NodeId Tape::push(Tensor value, std::function<void(Tape&)> backprop) {
  nodes_.push_back(Node{std::move(value), Tensor{}, std::move(backprop)});
  return static_cast<NodeId>(nodes_.size() - 1);
}

float Tape::scalar_value(NodeId id) const {
  const Tensor& v = nodes_[id].value;
  if (!v.is_scalar()) throw ContractError("scalar node expected, got " + v.shape_str());
  return v.data[0];
}

NodeId Tape::leaf(Tensor value) {
  ensure_finite(value, "leaf value " + value.shape_str());
  return push(std::move(value), nullptr);
}

NodeId Tape::linear(NodeId xid, NodeId wid, NodeId bid) {
  const Tensor& x = value(xid);
  const Tensor& w = value(wid);
  const Tensor& b = value(bid);
  check_rank2(x, "linear x");
  check_rank2(w, "linear w");
  if (b.rank() != 1) throw DimensionError("linear b: rank-1 tensor expected, got " + b.shape_str());
  if (x.cols() != w.rows() || w.cols() != b.shape[0]) {
    throw DimensionError("linear: dimensions disagree, x" + x.shape_str() + " w" + w.shape_str() +
                         " b" + b.shape_str());
  }
  const std::size_t B = x.rows(), I = x.cols(), O = w.cols();
  Tensor y = Tensor::zeros({B, O});
  for (std::size_t r = 0; r < B; ++r) {
    float* yr = y.data.data() + r * O;
    for (std::size_t o = 0; o < O; ++o) yr[o] = b.data[o];
    const float* xr = x.data.data() + r * I;
    for (std::size_t i = 0; i < I; ++i) {
      float xv = xr[i];
      const float* wi = w.data.data() + i * O;
      for (std::size_t o = 0; o < O; ++o) yr[o] += xv * wi[o];
    }
  }
  ensure_finite(y, "linear forward");
  NodeId out = push(std::move(y), nullptr);
  nodes_[out].backprop = [xid, wid, bid, out, B, I, O](Tape& t) {
    const Tensor& dy = t.grad(out);
    const Tensor& xv = t.value(xid);
    const Tensor& wv = t.value(wid);
    Tensor& dx = t.grad_ref(xid);
    Tensor& dw = t.grad_ref(wid);
    Tensor& db = t.grad_ref(bid);
    for (std::size_t r = 0; r < B; ++r) {
      const float* dyr = dy.data.data() + r * O;
      const float* xr = xv.data.data() + r * I;
      float* dxr = dx.data.data() + r * I;
      for (std::size_t i = 0; i < I; ++i) {
        const float* wi = wv.data.data() + i * O;
        float acc = 0.0f;
        for (std::size_t o = 0; o < O; ++o) acc += dyr[o] * wi[o];
        dxr[i] += acc;
        float xri = xr[i];
        float* dwi = dw.data.data() + i * O;
        for (std::size_t o = 0; o < O; ++o) dwi[o] += xri * dyr[o];
      }
      for (std::size_t o = 0; o < O; ++o) db.data[o] += dyr[o];
    }
  };
  return out;
}

NodeId Tape::relu(NodeId xid) {
  Tensor y = value(xid);
  for (float& v : y.data) v = v > 0.0f ? v : 0.0f;
  NodeId out = push(std::move(y), nullptr);
  nodes_[out].backprop = [xid, out](Tape& t) {
    const Tensor& dy = t.grad(out);
    const Tensor& xv = t.value(xid);
    Tensor& dx = t.grad_ref(xid);
    for (std::size_t i = 0; i < dx.data.size(); ++i) {
      if (xv.data[i] > 0.0f) dx.data[i] += dy.data[i];
    }
  };
  return out;
}

NodeId Tape::sigmoid(NodeId xid) {
  Tensor y = value(xid);
  for (float& v : y.data) v = 1.0f / (1.0f + std::exp(-v));
  ensure_finite(y, "sigmoid forward");
  NodeId out = push(std::move(y), nullptr);
  nodes_[out].backprop = [xid, out](Tape& t) {
    const Tensor& dy = t.grad(out);
    const Tensor& yv = t.value(out);
    Tensor& dx = t.grad_ref(xid);
    for (std::size_t i = 0; i < dx.data.size(); ++i) {
      float s = yv.data[i];
      dx.data[i] += dy.data[i] * s * (1.0f - s);
    }
  };
  return out;
}

NodeId Tape::slice_cols(NodeId xid, std::size_t begin, std::size_t end) {
  const Tensor& x = value(xid);
  check_rank2(x, "slice_cols");
  if (begin >= end || end > x.cols()) {
    throw DimensionError("slice_cols: bad range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") for " + x.shape_str());
  }
  const std::size_t B = x.rows(), C = x.cols(), W = end - begin;
  Tensor y = Tensor::zeros({B, W});
  for (std::size_t r = 0; r < B; ++r) {
    for (std::size_t c = 0; c < W; ++c) y.data[r * W + c] = x.data[r * C + begin + c];
  }
  NodeId out = push(std::move(y), nullptr);
  nodes_[out].backprop = [xid, out, begin, B, C, W](Tape& t) {
    const Tensor& dy = t.grad(out);
    Tensor& dx = t.grad_ref(xid);
    for (std::size_t r = 0; r < B; ++r) {
      for (std::size_t c = 0; c < W; ++c) dx.data[r * C + begin + c] += dy.data[r * W + c];
    }
  };
  return out;
}

NodeId Tape::clamp(NodeId xid, float lo, float hi) {
  Tensor y = value(xid);
  for (float& v : y.data) v = v < lo ? lo : (v > hi ? hi : v);
  NodeId out = push(std::move(y), nullptr);
  nodes_[out].backprop = [xid, out, lo, hi](Tape& t) {
    const Tensor& dy = t.grad(out);
    const Tensor& xv = t.value(xid);
    Tensor& dx = t.grad_ref(xid);
    for (std::size_t i = 0; i < dx.data.size(); ++i) {
      if (xv.data[i] >= lo && xv.data[i] <= hi) dx.data[i] += dy.data[i];
    }
  };
  return out;
}

NodeId Tape::reparameterize(NodeId muid, NodeId lvid, Tensor eps) {
  const Tensor& mu = value(muid);
  const Tensor& lv = value(lvid);
  if (!mu.same_shape(lv) || !mu.same_shape(eps)) {
    throw DimensionError("reparameterize: mu " + mu.shape_str() + ", logvar " + lv.shape_str() +
                         ", eps " + eps.shape_str() + " must agree");
  }
  Tensor z = Tensor::zeros(mu.shape);
  for (std::size_t i = 0; i < z.data.size(); ++i) {
    z.data[i] = mu.data[i] + std::exp(0.5f * lv.data[i]) * eps.data[i];
  }
  ensure_finite(z, "reparameterize forward");
  NodeId out = push(std::move(z), nullptr);
  nodes_[out].backprop = [muid, lvid, out, eps = std::move(eps)](Tape& t) {
    const Tensor& dz = t.grad(out);
    const Tensor& lvv = t.value(lvid);
    Tensor& dmu = t.grad_ref(muid);
    Tensor& dlv = t.grad_ref(lvid);
    for (std::size_t i = 0; i < dz.data.size(); ++i) {
      dmu.data[i] += dz.data[i];
      dlv.data[i] += dz.data[i] * eps.data[i] * 0.5f * std::exp(0.5f * lvv.data[i]);
    }
  };
  return out;
}

NodeId Tape::softmax(NodeId xid) {
  const Tensor& x = value(xid);
  check_rank2(x, "softmax");
  const std::size_t B = x.rows(), C = x.cols();
  Tensor y = Tensor::zeros({B, C});
  for (std::size_t r = 0; r < B; ++r) {
    const float* xr = x.data.data() + r * C;
    float* yr = y.data.data() + r * C;
    float mx = xr[0];
    for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, xr[c]);
    double denom = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      yr[c] = std::exp(xr[c] - mx);
      denom += yr[c];
    }
    float inv = static_cast<float>(1.0 / denom);
    for (std::size_t c = 0; c < C; ++c) yr[c] *= inv;
  }
  ensure_finite(y, "softmax forward");
  NodeId out = push(std::move(y), nullptr);
  nodes_[out].backprop = [xid, out, B, C](Tape& t) {
    const Tensor& dy = t.grad(out);
    const Tensor& yv = t.value(out);
    Tensor& dx = t.grad_ref(xid);
    for (std::size_t r = 0; r < B; ++r) {
      const float* dyr = dy.data.data() + r * C;
      const float* s = yv.data.data() + r * C;
      float* dxr = dx.data.data() + r * C;
      double dot = 0.0;
      for (std::size_t c = 0; c < C; ++c) dot += static_cast<double>(dyr[c]) * s[c];
      for (std::size_t c = 0; c < C; ++c) {
        dxr[c] += s[c] * (dyr[c] - static_cast<float>(dot));
      }
    }
  };
  return out;
}

NodeId Tape::softmax_cross_entropy(NodeId xid, std::vector<std::uint32_t> labels) {
  const Tensor& x = value(xid);
  check_rank2(x, "softmax_cross_entropy");
  const std::size_t B = x.rows(), C = x.cols();
  if (labels.size() != B) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for batch of " + std::to_string(B));
  }
  for (std::uint32_t y : labels) {
    if (y >= C) throw InputError("softmax_cross_entropy: label " + std::to_string(y) +
                                 " out of range for " + std::to_string(C) + " classes");
  }
  double acc = 0.0;
  for (std::size_t r = 0; r < B; ++r) {
    const float* xr = x.data.data() + r * C;
    float mx = xr[0];
    for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, xr[c]);
    double denom = 0.0;
    for (std::size_t c = 0; c < C; ++c) denom += std::exp(static_cast<double>(xr[c]) - mx);
    acc += std::log(denom) + mx - xr[labels[r]];
  }
  Tensor v = Tensor::scalar(static_cast<float>(acc / static_cast<double>(B)));
  ensure_finite(v, "softmax_cross_entropy forward");
  NodeId out = push(std::move(v), nullptr);
  nodes_[out].backprop = [xid, out, labels = std::move(labels), B, C](Tape& t) {
    float u = t.grad(out).data[0] / static_cast<float>(B);
    const Tensor& xv = t.value(xid);
    Tensor& dx = t.grad_ref(xid);
    for (std::size_t r = 0; r < B; ++r) {
      const float* xr = xv.data.data() + r * C;
      float* dxr = dx.data.data() + r * C;
      float mx = xr[0];
      for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, xr[c]);
      double denom = 0.0;
      for (std::size_t c = 0; c < C; ++c) denom += std::exp(static_cast<double>(xr[c]) - mx);
      for (std::size_t c = 0; c < C; ++c) {
        float s = static_cast<float>(std::exp(static_cast<double>(xr[c]) - mx) / denom);
        dxr[c] += u * (s - (c == labels[r] ? 1.0f : 0.0f));
      }
    }
  };
  return out;
}

NodeId Tape::mean_log_prob(NodeId xid, std::vector<std::uint32_t> labels, float floor) {
  const Tensor& x = value(xid);
  check_rank2(x, "mean_log_prob");
  const std::size_t B = x.rows(), C = x.cols();
  if (labels.size() != B) {
    throw DimensionError("mean_log_prob: " + std::to_string(labels.size()) +
                         " labels for batch of " + std::to_string(B));
  }
  for (std::uint32_t y : labels) {
    if (y >= C) throw InputError("mean_log_prob: label out of range");
  }
  double acc = 0.0;
  std::vector<bool> active(B);
  for (std::size_t r = 0; r < B; ++r) {
    const float* xr = x.data.data() + r * C;
    float mx = xr[0];
    for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, xr[c]);
    double denom = 0.0;
    for (std::size_t c = 0; c < C; ++c) denom += std::exp(static_cast<double>(xr[c]) - mx);
    double lp = static_cast<double>(xr[labels[r]]) - mx - std::log(denom);
    active[r] = lp > floor;
    acc += active[r] ? lp : floor;
  }
  Tensor v = Tensor::scalar(static_cast<float>(acc / static_cast<double>(B)));
  NodeId out = push(std::move(v), nullptr);
  nodes_[out].backprop = [xid, out, labels = std::move(labels), active = std::move(active), B,
                          C](Tape& t) {
    float u = t.grad(out).data[0] / static_cast<float>(B);
    const Tensor& xv = t.value(xid);
    Tensor& dx = t.grad_ref(xid);
    for (std::size_t r = 0; r < B; ++r) {
      if (!active[r]) continue;
      const float* xr = xv.data.data() + r * C;
      float* dxr = dx.data.data() + r * C;
      float mx = xr[0];
      for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, xr[c]);
      double denom = 0.0;
      for (std::size_t c = 0; c < C; ++c) denom += std::exp(static_cast<double>(xr[c]) - mx);
      for (std::size_t c = 0; c < C; ++c) {
        float s = static_cast<float>(std::exp(static_cast<double>(xr[c]) - mx) / denom);
        dxr[c] += u * ((c == labels[r] ? 1.0f : 0.0f) - s);
      }
    }
  };
  return out;
}

NodeId Tape::kl_standard_normal(NodeId muid, NodeId lvid) {
  const Tensor& mu = value(muid);
  const Tensor& lv = value(lvid);
  check_rank2(mu, "kl_standard_normal mu");
  if (!mu.same_shape(lv)) {
    throw DimensionError("kl_standard_normal: mu " + mu.shape_str() + " vs logvar " +
                         lv.shape_str());
  }
  const std::size_t B = mu.rows();
  double acc = 0.0;
  for (std::size_t i = 0; i < mu.data.size(); ++i) {
    double m = mu.data[i], l = lv.data[i];
    acc += 0.5 * (m * m + std::exp(l) - l - 1.0);
  }
  Tensor v = Tensor::scalar(static_cast<float>(acc / static_cast<double>(B)));
  ensure_finite(v, "kl_standard_normal forward");
  NodeId out = push(std::move(v), nullptr);
  nodes_[out].backprop = [muid, lvid, out, B](Tape& t) {
    float u = t.grad(out).data[0] / static_cast<float>(B);
    const Tensor& muv = t.value(muid);
    const Tensor& lvv = t.value(lvid);
    Tensor& dmu = t.grad_ref(muid);
    Tensor& dlv = t.grad_ref(lvid);
    for (std::size_t i = 0; i < muv.data.size(); ++i) {
      dmu.data[i] += u * muv.data[i];
      dlv.data[i] += u * 0.5f * (std::exp(lvv.data[i]) - 1.0f);
    }
  };
  return out;
}

NodeId Tape::kl_diag_gaussians(NodeId mupid, NodeId lvpid, NodeId muqid, NodeId lvqid) {
  const Tensor& mup = value(mupid);
  const Tensor& lvp = value(lvpid);
  const Tensor& muq = value(muqid);
  const Tensor& lvq = value(lvqid);
  check_rank2(mup, "kl_diag_gaussians");
  if (!mup.same_shape(lvp) || !mup.same_shape(muq) || !mup.same_shape(lvq)) {
    throw DimensionError("kl_diag_gaussians: all four tensors must share shape " +
                         mup.shape_str());
  }
  const std::size_t B = mup.rows();
  // Per element: (lvq - lvp)/2 + exp(lvp - lvq)/2 + (mup - muq)^2 exp(-lvq)/2 - 1/2.
  // Written via exp of differences so identical posteriors give exactly zero.
  double acc = 0.0;
  for (std::size_t i = 0; i < mup.data.size(); ++i) {
    double dm = static_cast<double>(mup.data[i]) - muq.data[i];
    double dl = static_cast<double>(lvp.data[i]) - lvq.data[i];
    acc += 0.5 * (-dl + std::exp(dl) + dm * dm * std::exp(-static_cast<double>(lvq.data[i])) - 1.0);
  }
  Tensor v = Tensor::scalar(static_cast<float>(acc / static_cast<double>(B)));
  ensure_finite(v, "kl_diag_gaussians forward");
  NodeId out = push(std::move(v), nullptr);
  nodes_[out].backprop = [mupid, lvpid, muqid, lvqid, out, B](Tape& t) {
    float u = t.grad(out).data[0] / static_cast<float>(B);
    const Tensor& mupv = t.value(mupid);
    const Tensor& lvpv = t.value(lvpid);
    const Tensor& muqv = t.value(muqid);
    const Tensor& lvqv = t.value(lvqid);
    Tensor& dmup = t.grad_ref(mupid);
    Tensor& dlvp = t.grad_ref(lvpid);
    Tensor& dmuq = t.grad_ref(muqid);
    Tensor& dlvq = t.grad_ref(lvqid);
    for (std::size_t i = 0; i < mupv.data.size(); ++i) {
      float dm = mupv.data[i] - muqv.data[i];
      float e_dl = std::exp(lvpv.data[i] - lvqv.data[i]);
      float e_nq = std::exp(-lvqv.data[i]);
      dmup.data[i] += u * dm * e_nq;
      dmuq.data[i] += u * -dm * e_nq;
      dlvp.data[i] += u * 0.5f * (e_dl - 1.0f);
      dlvq.data[i] += u * 0.5f * (1.0f - e_dl - dm * dm * e_nq);
    }
  };
  return out;
}

NodeId Tape::kl_categorical(NodeId pid, NodeId qid) {
  const Tensor& p = value(pid);
  const Tensor& q = value(qid);
  check_rank2(p, "kl_categorical");
  if (!p.same_shape(q)) {
    throw DimensionError("kl_categorical: p " + p.shape_str() + " vs q " + q.shape_str());
  }
  const std::size_t B = p.rows();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.data.size(); ++i) {
    float pv = p.data[i];
    if (pv <= 0.0f) continue;  // 0 log 0 = 0
    float qv = std::max(q.data[i], kCategoricalFloor);
    acc += static_cast<double>(pv) * (std::log(pv) - std::log(qv));
  }
  Tensor v = Tensor::scalar(static_cast<float>(acc / static_cast<double>(B)));
  ensure_finite(v, "kl_categorical forward");
  NodeId out = push(std::move(v), nullptr);
  nodes_[out].backprop = [pid, qid, out, B](Tape& t) {
    float u = t.grad(out).data[0] / static_cast<float>(B);
    const Tensor& pv = t.value(pid);
    const Tensor& qv = t.value(qid);
    Tensor& dp = t.grad_ref(pid);
    Tensor& dq = t.grad_ref(qid);
    for (std::size_t i = 0; i < pv.data.size(); ++i) {
      float pe = pv.data[i];
      if (pe <= 0.0f) continue;
      float qe = std::max(qv.data[i], kCategoricalFloor);
      dp.data[i] += u * (std::log(pe) - std::log(qe) + 1.0f);
      if (qv.data[i] > kCategoricalFloor) dq.data[i] += u * -(pe / qe);
    }
  };
  return out;
}

NodeId Tape::kl_categorical_logits(NodeId pid, NodeId qid) {
  const Tensor& xp = value(pid);
  const Tensor& xq = value(qid);
  check_rank2(xp, "kl_categorical_logits");
  if (!xp.same_shape(xq)) {
    throw DimensionError("kl_categorical_logits: p " + xp.shape_str() + " vs q " +
                         xq.shape_str());
  }
  const std::size_t B = xp.rows(), C = xp.cols();
  auto log_softmax_row = [C](const float* x, std::vector<float>& out) {
    float mx = x[0];
    for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, x[c]);
    double denom = 0.0;
    for (std::size_t c = 0; c < C; ++c) denom += std::exp(static_cast<double>(x[c]) - mx);
    float lse = static_cast<float>(std::log(denom)) + mx;
    for (std::size_t c = 0; c < C; ++c) out[c] = x[c] - lse;
  };
  double acc = 0.0;
  std::vector<float> lp(C), lq(C);
  for (std::size_t r = 0; r < B; ++r) {
    log_softmax_row(xp.data.data() + r * C, lp);
    log_softmax_row(xq.data.data() + r * C, lq);
    for (std::size_t c = 0; c < C; ++c) {
      acc += std::exp(static_cast<double>(lp[c])) * (static_cast<double>(lp[c]) - lq[c]);
    }
  }
  Tensor v = Tensor::scalar(static_cast<float>(acc / static_cast<double>(B)));
  ensure_finite(v, "kl_categorical_logits forward");
  NodeId out = push(std::move(v), nullptr);
  nodes_[out].backprop = [pid, qid, out, B, C, log_softmax_row](Tape& t) {
    float u = t.grad(out).data[0] / static_cast<float>(B);
    const Tensor& xpv = t.value(pid);
    const Tensor& xqv = t.value(qid);
    Tensor& dp = t.grad_ref(pid);
    Tensor& dq = t.grad_ref(qid);
    std::vector<float> lp(C), lq(C);
    for (std::size_t r = 0; r < B; ++r) {
      log_softmax_row(xpv.data.data() + r * C, lp);
      log_softmax_row(xqv.data.data() + r * C, lq);
      float* dpr = dp.data.data() + r * C;
      float* dqr = dq.data.data() + r * C;
      double row_kl = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        row_kl += std::exp(static_cast<double>(lp[c])) * (static_cast<double>(lp[c]) - lq[c]);
      }
      for (std::size_t c = 0; c < C; ++c) {
        float pe = std::exp(lp[c]);
        float qe = std::exp(lq[c]);
        dqr[c] += u * (qe - pe);
        dpr[c] += u * pe * ((lp[c] - lq[c]) - static_cast<float>(row_kl));
      }
    }
  };
  return out;
}

NodeId Tape::mse(NodeId xid, Tensor target) {
  const Tensor& x = value(xid);
  if (!x.same_shape(target)) {
    throw DimensionError("mse: prediction " + x.shape_str() + " vs target " + target.shape_str());
  }
  const std::size_t N = x.data.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    double d = static_cast<double>(x.data[i]) - target.data[i];
    acc += d * d;
  }
  Tensor v = Tensor::scalar(static_cast<float>(acc / static_cast<double>(N)));
  ensure_finite(v, "mse forward");
  NodeId out = push(std::move(v), nullptr);
  nodes_[out].backprop = [xid, out, target = std::move(target), N](Tape& t) {
    float u = t.grad(out).data[0] * 2.0f / static_cast<float>(N);
    const Tensor& xv = t.value(xid);
    Tensor& dx = t.grad_ref(xid);
    for (std::size_t i = 0; i < N; ++i) dx.data[i] += u * (xv.data[i] - target.data[i]);
  };
  return out;
}

NodeId Tape::sum(NodeId xid) {
  const Tensor& x = value(xid);
  double acc = 0.0;
  for (float v : x.data) acc += v;
  Tensor v = Tensor::scalar(static_cast<float>(acc));
  ensure_finite(v, "sum forward");
  NodeId out = push(std::move(v), nullptr);
  nodes_[out].backprop = [xid, out](Tape& t) {
    float u = t.grad(out).data[0];
    Tensor& dx = t.grad_ref(xid);
    for (float& g : dx.data) g += u;
  };
  return out;
}

NodeId Tape::add(NodeId aid, NodeId bid) {
  const Tensor& a = value(aid);
  const Tensor& b = value(bid);
  if (!a.same_shape(b)) {
    throw DimensionError("add: " + a.shape_str() + " vs " + b.shape_str());
  }
  Tensor y = a;
  for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += b.data[i];
  ensure_finite(y, "add forward");
  NodeId out = push(std::move(y), nullptr);
  nodes_[out].backprop = [aid, bid, out](Tape& t) {
    const Tensor& dy = t.grad(out);
    Tensor& da = t.grad_ref(aid);
    Tensor& db = t.grad_ref(bid);
    for (std::size_t i = 0; i < dy.data.size(); ++i) {
      da.data[i] += dy.data[i];
      db.data[i] += dy.data[i];
    }
  };
  return out;
}

NodeId Tape::scale(NodeId xid, float c) {
  Tensor y = value(xid);
  for (float& v : y.data) v *= c;
  ensure_finite(y, "scale forward");
  NodeId out = push(std::move(y), nullptr);
  nodes_[out].backprop = [xid, out, c](Tape& t) {
    const Tensor& dy = t.grad(out);
    Tensor& dx = t.grad_ref(xid);
    for (std::size_t i = 0; i < dy.data.size(); ++i) dx.data[i] += c * dy.data[i];
  };
  return out;
}

void Tape::backward(NodeId loss) {
  if (loss >= nodes_.size()) throw ContractError("backward: unknown node");
  if (!nodes_[loss].value.is_scalar()) {
    throw ContractError("backward: loss must be scalar, got " + nodes_[loss].value.shape_str());
  }
  for (Node& n : nodes_) n.grad = Tensor::zeros(n.value.shape);
  nodes_[loss].grad.data[0] = 1.0f;
  for (std::size_t i = loss + 1; i-- > 0;) {
    if (nodes_[i].backprop) nodes_[i].backprop(*this);
  }
  for (const Node& n : nodes_) ensure_finite(n.grad, "backward gradient");
}

}  // namespace crfu
