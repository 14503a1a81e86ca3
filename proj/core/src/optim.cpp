#include "crfu/optim.hpp"

#include <cmath>

#include "crfu/errors.hpp"

namespace crfu {

void AdamState::step(ParamSet& params, const std::map<std::string, Tensor>& grads, float lr) {
  if (!(lr > 0.0f)) throw InputError("adam: learning rate must be positive");
  if (!(eps_ > 0.0f)) throw InputError("adam: epsilon must be positive");
  ++t_;
  float bc1 = 1.0f - std::pow(beta1_, static_cast<float>(t_));
  float bc2 = 1.0f - std::pow(beta2_, static_cast<float>(t_));
  for (const auto& [name, g] : grads) {
    Tensor& p = params.at(name);
    if (!p.same_shape(g)) {
      throw DimensionError("adam: gradient shape " + g.shape_str() + " for parameter " + name +
                           " of shape " + p.shape_str());
    }
    for (float v : g.data) {
      if (!std::isfinite(v)) throw NumericError("non-finite gradient for parameter " + name);
    }
    auto mit = m_.find(name);
    if (mit == m_.end()) {
      mit = m_.emplace(name, Tensor::zeros(p.shape)).first;
      v_.emplace(name, Tensor::zeros(p.shape));
    }
    Tensor& m = mit->second;
    Tensor& v = v_.at(name);
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      float gi = g.data[i];
      m.data[i] = beta1_ * m.data[i] + (1.0f - beta1_) * gi;
      v.data[i] = beta2_ * v.data[i] + (1.0f - beta2_) * gi * gi;
      float mhat = m.data[i] / bc1;
      float vhat = v.data[i] / bc2;
      p.data[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}


}  // namespace crfu
