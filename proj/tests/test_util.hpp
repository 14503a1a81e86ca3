#pragma once

// Shared helpers for the unit suites: finite-difference gradient checking
// and small random-tensor generators.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "crfu/params.hpp"
#include "crfu/rng.hpp"
#include "crfu/tensor.hpp"

namespace testutil {

inline crfu::Tensor random_tensor(std::vector<std::size_t> shape, crfu::Rng& rng,
                                  float scale = 1.0f) {
  crfu::Tensor t = crfu::Tensor::zeros(std::move(shape));
  for (float& v : t.data) v = scale * rng.normal();
  return t;
}

struct FdReport {
  std::size_t checked = 0;
  std::size_t failed = 0;
  std::size_t skipped_kinks = 0;
  double worst_rel = 0.0;
  std::string worst_param;
};

struct FdEval {
  double value = 0.0;
  std::uint64_t activation_sig = 0;  // relu/clamp/floor decisions
};

/// Central finite differences on every parameter of `params` against the
/// analytic gradient map. `loss` must re-evaluate from current parameter
/// values in float64 (see oracles_f64.hpp) so the probe is limited by
/// truncation, not float32 rounding; h = 1e-4 keeps the truncation term well
/// under the 1e-3 tolerance. Elements with |grad| <= 1e-4 are skipped, as are
/// probes that flip an activation decision (FD is invalid across a kink).
inline FdReport check_gradients(crfu::ParamSet& params,
                                const std::function<FdEval()>& loss,
                                const std::function<double(const std::string&, std::size_t)>&
                                    analytic_grad,
                                double rel_tol = 1e-3, float h = 1e-4f) {
  FdReport report;
  std::vector<std::string> names;
  for (const auto& [name, t] : params.all()) names.push_back(name);
  for (const std::string& name : names) {
    crfu::Tensor& t = params.at(name);
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      double g = analytic_grad(name, i);
      if (std::abs(g) <= 1e-4) continue;
      float saved = t.data[i];
      t.data[i] = saved + h;
      double x_up = t.data[i];  // the realized (rounded-to-float) probe points
      FdEval up = loss();
      t.data[i] = saved - h;
      double x_down = t.data[i];
      FdEval down = loss();
      t.data[i] = saved;
      if (up.activation_sig != down.activation_sig) {
        ++report.skipped_kinks;
        continue;
      }
      double fd = (up.value - down.value) / (x_up - x_down);
      double rel = std::abs(fd - g) / std::max(std::abs(g), std::abs(fd));
      ++report.checked;
      if (rel > report.worst_rel) {
        report.worst_rel = rel;
        report.worst_param = name + "[" + std::to_string(i) + "]";
      }
      if (rel > rel_tol) ++report.failed;
    }
  }
  return report;
}

}  // namespace testutil
