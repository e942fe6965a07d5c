#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "probe/tensor.hpp"

namespace probe {

enum class ScheduleKind { v_prediction, flow_matching };

inline std::string to_string(ScheduleKind k) {
  return k == ScheduleKind::v_prediction ? "v_prediction" : "flow_matching";
}

// Per-timestep noising coefficients. v-prediction uses a discrete cosine
// alpha-bar grid with sigma_t = sqrt(1 - alpha_bar_t); flow matching uses
// continuous t in [0,1] with sigma_t = t along the linear path
// x_t = (1-t) x0 + t eps.
struct NoiseSchedule {
  ScheduleKind kind = ScheduleKind::v_prediction;
  int num_steps = 50;
  std::vector<double> alpha_bar;  // v-prediction only, strictly decreasing, [0] ~ 1
  std::vector<double> sigma;      // v-prediction only

  static NoiseSchedule cosine_v_prediction(int steps) {
    if (steps < 1) throw ConfigError("schedule: steps must be >= 1");
    NoiseSchedule s;
    s.kind = ScheduleKind::v_prediction;
    s.num_steps = steps;
    const double shift = 0.008;
    auto f = [&](double u) {
      double v = std::cos((u + shift) / (1.0 + shift) * 3.14159265358979323846 / 2.0);
      return v * v;
    };
    const double f0 = f(0.0);
    s.alpha_bar.resize(steps);
    s.sigma.resize(steps);
    for (int t = 0; t < steps; ++t) {
      // map index 0..steps-1 onto (0, ~1] so that alpha_bar[0] ~ 1 and the
      // last step is close to pure noise
      double u = static_cast<double>(t) / static_cast<double>(steps);
      double ab = f(u) / f0;
      ab = std::min(std::max(ab, 1e-5), 1.0);
      s.alpha_bar[t] = ab;
      s.sigma[t] = std::sqrt(1.0 - ab);
    }
    return s;
  }

  static NoiseSchedule flow(int steps) {
    if (steps < 1) throw ConfigError("schedule: steps must be >= 1");
    NoiseSchedule s;
    s.kind = ScheduleKind::flow_matching;
    s.num_steps = steps;
    return s;
  }

  void check_t(double t) const {
    if (kind == ScheduleKind::v_prediction) {
      int i = static_cast<int>(t);
      if (static_cast<double>(i) != t || i < 0 || i >= num_steps)
        throw ConfigError("timestep " + std::to_string(t) + " out of range for " +
                          std::to_string(num_steps) + "-step v-prediction schedule");
    } else {
      if (!(t >= 0.0 && t <= 1.0))
        throw ConfigError("flow timestep " + std::to_string(t) + " outside [0,1]");
    }
  }

  double abar(double t) const {
    check_t(t);
    return alpha_bar[static_cast<int>(t)];
  }

  // Normalized time in [0,1] used for time features.
  double t_norm(double t) const {
    check_t(t);
    if (kind == ScheduleKind::flow_matching) return t;
    return static_cast<double>(t) / static_cast<double>(num_steps);
  }
};

inline Tensor noise_forward(const Tensor& x0, const Tensor& eps, double t,
                            const NoiseSchedule& sched) {
  require_same_shape(x0, eps, "noise_forward");
  sched.check_t(t);
  if (sched.kind == ScheduleKind::v_prediction) {
    const double ab = sched.abar(t);
    Tensor xt = scale(x0, std::sqrt(ab));
    axpy(xt, std::sqrt(1.0 - ab), eps);
    return xt;
  }
  Tensor xt = scale(x0, 1.0 - t);
  axpy(xt, t, eps);
  return xt;
}

// The velocity target each family is trained against.
inline Tensor true_velocity(const Tensor& x0, const Tensor& eps, double t,
                            const NoiseSchedule& sched) {
  require_same_shape(x0, eps, "true_velocity");
  sched.check_t(t);
  if (sched.kind == ScheduleKind::v_prediction) {
    const double ab = sched.abar(t);
    Tensor v = scale(eps, std::sqrt(ab));
    axpy(v, -std::sqrt(1.0 - ab), x0);
    return v;
  }
  return sub(eps, x0);
}

// Single forward-pass clean-latent recovery for both parameterizations.
inline Tensor recover_clean(const Tensor& xt, const Tensor& v_pred, double t,
                            const NoiseSchedule& sched) {
  require_same_shape(xt, v_pred, "recover_clean");
  sched.check_t(t);
  if (sched.kind == ScheduleKind::v_prediction) {
    const double ab = sched.abar(t);
    Tensor x0 = scale(xt, std::sqrt(ab));
    axpy(x0, -std::sqrt(1.0 - ab), v_pred);
    return x0;
  }
  Tensor x0 = xt;
  axpy(x0, -t, v_pred);
  return x0;
}

// Noise estimate implied by a velocity prediction (v-prediction only; the
// flow-matching residual is handled in velocity space by the probe losses).
inline Tensor recover_eps_vpred(const Tensor& xt, const Tensor& v_pred, double t,
                                const NoiseSchedule& sched) {
  if (sched.kind != ScheduleKind::v_prediction)
    throw ConfigError("recover_eps_vpred requires a v-prediction schedule");
  const double ab = sched.abar(t);
  Tensor eps = scale(xt, std::sqrt(1.0 - ab));
  axpy(eps, std::sqrt(ab), v_pred);
  return eps;
}

}  // namespace probe
