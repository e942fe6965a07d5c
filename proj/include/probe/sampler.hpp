#pragma once

#include <cstdint>
#include <functional>

#include "probe/rng.hpp"
#include "probe/schedule.hpp"
#include "probe/tensor.hpp"

namespace probe {

struct SamplerConfig {
  int steps = 50;
  double cfg_scale = 6.0;
  std::uint64_t seed = 42;
};

using VelocityFn = std::function<Tensor(const Tensor& xt, double t)>;

inline Tensor guided_velocity(const Tensor& v_cond, const Tensor& v_uncond, double cfg_scale) {
  Tensor v = v_uncond;
  Tensor diff = sub(v_cond, v_uncond);
  axpy(v, cfg_scale, diff);
  return v;
}

// Deterministic fixed-step integration from pure noise to a clean latent.
// v-prediction walks the discrete schedule grid DDIM-style; flow matching
// integrates the linear path with Euler steps from t=1 to t=0.
inline Tensor sample(const VelocityFn& cond_velocity, const VelocityFn& uncond_velocity,
                     const SamplerConfig& cfg, const NoiseSchedule& sched, const Shape& shape,
                     Rng rng) {
  if (cfg.steps < 1) throw ConfigError("sampler: steps must be >= 1");
  Tensor x = rng.normal_tensor(shape);

  auto guided = [&](const Tensor& xt, double t) {
    Tensor vc = cond_velocity(xt, t);
    Tensor vu = uncond_velocity(xt, t);
    return guided_velocity(vc, vu, cfg.cfg_scale);
  };

  if (sched.kind == ScheduleKind::flow_matching) {
    const double dt = 1.0 / static_cast<double>(cfg.steps);
    for (int s = 0; s < cfg.steps; ++s) {
      const double t = 1.0 - static_cast<double>(s) * dt;
      Tensor v = guided(x, t);
      axpy(x, -dt, v);
      for (double val : x.data)
        if (!std::isfinite(val))
          throw NumericError("sampler: non-finite latent at step " + std::to_string(s));
    }
    return x;
  }

  // v-prediction: descend the schedule indices
  for (int t = sched.num_steps - 1; t >= 0; --t) {
    Tensor v = guided(x, static_cast<double>(t));
    Tensor x0 = recover_clean(x, v, static_cast<double>(t), sched);
    if (t == 0) return x0;
    Tensor eps = recover_eps_vpred(x, v, static_cast<double>(t), sched);
    const double ab = sched.alpha_bar[t - 1];
    x = scale(x0, std::sqrt(ab));
    axpy(x, std::sqrt(1.0 - ab), eps);
    for (double val : x.data)
      if (!std::isfinite(val))
        throw NumericError("sampler: non-finite latent at step " + std::to_string(t));
  }
  return x;
}

}  // namespace probe
