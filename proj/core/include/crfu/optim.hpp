#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "crfu/params.hpp"
#include "crfu/tensor.hpp"

namespace crfu {

/// Adam with bias correction. Moments are keyed by parameter name and
/// allocated on first use; the step counter is shared across parameters.
class AdamState {
 public:
  AdamState(float beta1 = 0.9f, float beta2 = 0.999f, float eps = 1e-8f)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// One update over every entry of `grads`; parameters without a gradient
  /// entry are left untouched. Throws NumericError naming the parameter if a
  /// gradient is non-finite, InputError/DimensionError on mismatches.
  void step(ParamSet& params, const std::map<std::string, Tensor>& grads, float lr);

  std::uint64_t step_count() const { return t_; }
  const std::map<std::string, Tensor>& first_moments() const { return m_; }
  const std::map<std::string, Tensor>& second_moments() const { return v_; }

 private:
  float beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::map<std::string, Tensor> m_;
  std::map<std::string, Tensor> v_;
};

}  // namespace crfu
