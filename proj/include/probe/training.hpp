#pragma once

#include <map>
#include <string>
#include <vector>

#include "probe/denoiser.hpp"
#include "probe/optimizer.hpp"
#include "probe/rng.hpp"
#include "probe/schedule.hpp"
#include "probe/text_encoder.hpp"
#include "probe/world.hpp"

namespace probe {

// One AdamW state per named weight tensor.
struct WeightsOptimizer {
  std::map<std::string, OptimizerState> states;

  WeightsOptimizer(const OptimizerConfig& cfg, DenoiserWeights& w) {
    w.for_each([&](const char* name, Tensor& t) { states.emplace(name, OptimizerState(cfg, t.shape)); });
  }

  void step(DenoiserWeights& w, const DenoiserWeights& grads) {
    const DenoiserWeights* gp = &grads;
    w.for_each([&](const char* name, Tensor& t) {
      const Tensor* g = nullptr;
      gp->for_each([&](const char* gname, const Tensor& gt) {
        if (std::string(gname) == name) g = &gt;
      });
      optimizer_step(t, *g, states.at(name));
    });
  }
};

struct TrainConfig {
  long steps = 4000;
  int batch = 8;
  double lr = 3e-3;
  long warmup = 100;
  double clip_norm = 5.0;
  std::uint64_t seed = 42;
};

inline void accumulate(DenoiserWeights& acc, const DenoiserWeights& g, double s) {
  acc.for_each([&](const char* name, Tensor& t) {
    g.for_each([&](const char* gname, const Tensor& gt) {
      if (std::string(gname) == name) axpy(t, s, gt);
    });
  });
}

// Velocity-matching training of the toy denoiser on a labeled dataset.
// Deterministic under the config seed; items are drawn with split streams.
inline double train_denoiser(DenoiserModel& model, const TextEncoder& enc, const Dataset& data,
                             const TrainConfig& cfg) {
  model.require_unfrozen("train_denoiser");
  if (data.items.empty()) throw ConfigError("train_denoiser: empty dataset");

  OptimizerConfig ocfg;
  ocfg.lr = cfg.lr;
  ocfg.warmup_steps = cfg.warmup;
  ocfg.total_steps = cfg.steps;
  ocfg.clip_norm = cfg.clip_norm;
  WeightsOptimizer opt(ocfg, model.w);

  // conditions are fixed per concept; cache them (null id 0 for dropout-free runs)
  std::map<int, Condition> cond_cache;
  for (const auto& item : data.items)
    if (!cond_cache.count(item.concept_id))
      cond_cache.emplace(item.concept_id, encode_prompt(enc, item.prompt));
  const Condition uncond = encode_prompt(enc, {0});

  Rng rng(cfg.seed);
  double last_loss = 0.0;
  const double n_el = static_cast<double>(shape_numel(model.cfg.latent_shape()));
  for (long step = 0; step < cfg.steps; ++step) {
    Rng sr = rng.split(static_cast<std::uint64_t>(step));
    DenoiserWeights grads = DenoiserWeights::zeros_like(model.cfg);
    double loss = 0.0;
    for (int b = 0; b < cfg.batch; ++b) {
      Rng br = sr.split(static_cast<std::uint64_t>(b));
      const DatasetItem& item = data.items[br.uniform_index(data.items.size())];
      const double t = model.sched.kind == ScheduleKind::v_prediction
                           ? static_cast<double>(br.uniform_index(model.sched.num_steps))
                           : br.uniform_open();
      Tensor eps = br.normal_tensor(model.cfg.latent_shape());
      Tensor xt = noise_forward(item.latent, eps, t, model.sched);
      Tensor target = true_velocity(item.latent, eps, t, model.sched);
      // 10% unconditional passes keep CFG sampling meaningful
      const Condition& c = br.uniform() < 0.1 ? uncond : cond_cache.at(item.concept_id);
      Tensor pred = denoise_forward(model, xt, c, t);
      Tensor resid = sub(pred, target);
      loss += mean_sq(resid);
      Tensor upstream = scale(resid, 2.0 / (n_el * cfg.batch));
      BackwardResult br_res = denoise_backward(model, xt, c, t, upstream, true);
      accumulate(grads, *br_res.grad_weights, 1.0);
    }
    last_loss = loss / cfg.batch;
    if (!std::isfinite(last_loss))
      throw NumericError("train_denoiser: non-finite loss at step " + std::to_string(step));
    opt.step(model.w, grads);
  }
  return last_loss;
}

}  // namespace probe
