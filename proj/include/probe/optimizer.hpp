#pragma once

#include <cmath>
#include <cstdint>

#include "probe/tensor.hpp"

namespace probe {

// AdamW with linear warmup, cosine decay and global-norm gradient clipping.
struct OptimizerConfig {
  double lr = 0.02;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double clip_norm = 1.0;  // <= 0 disables clipping
  long warmup_steps = 100;
  long total_steps = 3000;
};

struct OptimizerState {
  OptimizerConfig cfg;
  Tensor m1;  // first moment, shape-equal to parameters
  Tensor m2;  // second moment
  long step = 0;

  OptimizerState() = default;
  OptimizerState(OptimizerConfig c, const Shape& param_shape)
      : cfg(c), m1(param_shape), m2(param_shape) {}
};

// Schedule evaluated at the incoming step (0-based).
inline double lr_at_step(const OptimizerConfig& cfg, long step) {
  double warm = 1.0;
  if (cfg.warmup_steps > 0)
    warm = std::min(1.0, static_cast<double>(step + 1) / static_cast<double>(cfg.warmup_steps));
  double progress = cfg.total_steps > 0
                        ? std::min(1.0, static_cast<double>(step) / static_cast<double>(cfg.total_steps))
                        : 0.0;
  double cos_decay = 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
  return cfg.lr * warm * cos_decay;
}

// In-place decoupled-weight-decay adaptive-moment update. Clipping is
// applied to the global gradient norm before moments are touched.
inline void optimizer_step(Tensor& params, const Tensor& grad, OptimizerState& state) {
  require_same_shape(params, grad, "optimizer_step");
  require_same_shape(params, state.m1, "optimizer_step(state)");
  ensure_finite(grad, "optimizer_step gradient");

  double gscale = 1.0;
  if (state.cfg.clip_norm > 0.0) {
    double gnorm = l2_norm(grad);
    if (gnorm > state.cfg.clip_norm) gscale = state.cfg.clip_norm / gnorm;
  }

  const double lr = lr_at_step(state.cfg, state.step);
  const double b1 = state.cfg.beta1, b2 = state.cfg.beta2;
  const long t = state.step + 1;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t));

  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad.data[i] * gscale;
    state.m1.data[i] = b1 * state.m1.data[i] + (1.0 - b1) * g;
    state.m2.data[i] = b2 * state.m2.data[i] + (1.0 - b2) * g * g;
    const double mhat = state.m1.data[i] / bc1;
    const double vhat = state.m2.data[i] / bc2;
    params.data[i] -= lr * (mhat / (std::sqrt(vhat) + state.cfg.eps) +
                            state.cfg.weight_decay * params.data[i]);
  }
  state.step = t;
}

}  // namespace probe
