#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "glyphforge/common.hpp"
#include "glyphforge/tensor.hpp"

namespace glyphforge {

struct AdamConfig {
  real lr = 1e-3;
  real beta1 = 0.9;
  real beta2 = 0.999;
  real epsilon = 1e-8;
};

/// One bias-corrected Adam update on a single parameter tensor.
/// t is the 1-based step count after this update.
inline void adam_step(std::vector<real>& param, const std::vector<real>& grad,
                      std::vector<real>& m, std::vector<real>& v, const AdamConfig& cfg, int64_t t,
                      const std::string& name = "param") {
  if (param.size() != grad.size() || param.size() != m.size() || param.size() != v.size())
    throw shape_error("adam_step buffer sizes disagree for " + name);
  if (t < 1) throw optimizer_error("adam_step requires t >= 1");
  for (real g : grad)
    if (!std::isfinite(g)) throw optimizer_error("non-finite gradient for parameter " + name);
  const real bc1 = real(1) - std::pow(cfg.beta1, static_cast<real>(t));
  const real bc2 = real(1) - std::pow(cfg.beta2, static_cast<real>(t));
  for (size_t i = 0; i < param.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (real(1) - cfg.beta1) * grad[i];
    v[i] = cfg.beta2 * v[i] + (real(1) - cfg.beta2) * grad[i] * grad[i];
    const real mhat = m[i] / bc1;
    const real vhat = v[i] / bc2;
    param[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
  }
}

}  // namespace glyphforge
