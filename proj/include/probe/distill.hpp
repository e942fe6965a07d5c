#pragma once

#include <string>
#include <vector>

#include "probe/erasure.hpp"
#include "probe/probing.hpp"
#include "probe/training.hpp"

namespace probe {

// Student trained to imitate a CFG-guided teacher at a fixed guidance scale,
// so the guidance bias is baked into its weights.
struct DistilledModel {
  DenoiserModel student;
  std::string teacher_digest;
  double guidance = 1.0;
};

struct DistillConfig {
  double guidance = 4.0;
  long steps = 800;
  int batch = 4;
  double lr = 2e-3;
  std::uint64_t seed = 42;
};

inline DistilledModel distill(const DenoiserModel& teacher, const TextEncoder& enc,
                              const Dataset& data, const DistillConfig& cfg) {
  if (cfg.guidance < 1.0) throw ConfigError("distill: guidance scale must be >= 1");
  if (data.items.empty()) throw ConfigError("distill: empty dataset");

  DistilledModel dm;
  dm.student = teacher;
  dm.student.frozen = false;
  dm.student.provenance = "distilled";
  dm.teacher_digest = teacher.weight_digest();
  dm.guidance = cfg.guidance;
  if (cfg.steps == 0) return dm;

  OptimizerConfig ocfg;
  ocfg.lr = cfg.lr;
  ocfg.warmup_steps = std::min<long>(50, cfg.steps);
  ocfg.total_steps = cfg.steps;
  WeightsOptimizer opt(ocfg, dm.student.w);

  std::map<int, Condition> conds;
  for (const auto& item : data.items)
    if (!conds.count(item.concept_id)) conds.emplace(item.concept_id, encode_prompt(enc, item.prompt));
  const Condition uncond = encode_prompt(enc, {0});

  const double n_el = static_cast<double>(shape_numel(teacher.cfg.latent_shape()));
  Rng rng(cfg.seed);
  for (long step = 0; step < cfg.steps; ++step) {
    Rng sr = rng.split(static_cast<std::uint64_t>(step));
    DenoiserWeights grads = DenoiserWeights::zeros_like(teacher.cfg);
    double loss = 0.0;
    for (int b = 0; b < cfg.batch; ++b) {
      Rng br = sr.split(static_cast<std::uint64_t>(b));
      const DatasetItem& item = data.items[br.uniform_index(data.items.size())];
      const double t = teacher.sched.kind == ScheduleKind::v_prediction
                           ? static_cast<double>(br.uniform_index(teacher.sched.num_steps))
                           : br.uniform_open();
      Tensor eps = br.normal_tensor(teacher.cfg.latent_shape());
      Tensor xt = noise_forward(item.latent, eps, t, teacher.sched);
      const Condition& c = conds.at(item.concept_id);
      Tensor target = guided_velocity(denoise_forward(teacher, xt, c, t),
                                      denoise_forward(teacher, xt, uncond, t), cfg.guidance);
      Tensor pred = denoise_forward(dm.student, xt, c, t);
      Tensor resid = sub(pred, target);
      loss += mean_sq(resid);
      Tensor upstream = scale(resid, 2.0 / (n_el * cfg.batch));
      BackwardResult bres = denoise_backward(dm.student, xt, c, t, upstream, true);
      accumulate(grads, *bres.grad_weights, 1.0);
    }
    if (!std::isfinite(loss))
      throw NumericError("distill: non-finite loss at step " + std::to_string(step));
    opt.step(dm.student.w, grads);
  }
  return dm;
}

// Mean squared distance between a model's conditional output and the guided
// teacher target over a fixed sample draw; used to confirm the student
// actually learned the bias.
inline double guided_imitation_mse(const DenoiserModel& model, const DenoiserModel& teacher,
                                   const TextEncoder& enc, const Dataset& data, double guidance,
                                   int samples, std::uint64_t seed) {
  const Condition uncond = encode_prompt(enc, {0});
  Rng rng(seed);
  double acc = 0.0;
  for (int i = 0; i < samples; ++i) {
    Rng sr = rng.split(static_cast<std::uint64_t>(i));
    const DatasetItem& item = data.items[sr.uniform_index(data.items.size())];
    const double t = teacher.sched.kind == ScheduleKind::v_prediction
                         ? static_cast<double>(sr.uniform_index(teacher.sched.num_steps))
                         : sr.uniform_open();
    Tensor eps = sr.normal_tensor(teacher.cfg.latent_shape());
    Tensor xt = noise_forward(item.latent, eps, t, teacher.sched);
    Condition c = encode_prompt(enc, item.prompt);
    Tensor target = guided_velocity(denoise_forward(teacher, xt, c, t),
                                    denoise_forward(teacher, xt, uncond, t), guidance);
    acc += mean_sq(sub(denoise_forward(model, xt, c, t), target));
  }
  return acc / static_cast<double>(samples);
}

// Frozen view of a distilled student behind the erased-model interface, so
// the probing losses apply unchanged.
inline ErasedModel distilled_as_erased(const DistilledModel& dm, const TextEncoder& enc,
                                       int target_concept) {
  ErasedModel em = erase_none(dm.student, enc, target_concept);
  em.model.provenance = "distilled";
  return em;
}

struct AlignmentSample {
  int index = 0;
  double t = 0.0;  // mean of the timestep grid the gradients were averaged over
  double cosine = 0.0;
  bool excluded = false;
};

struct AlignmentMeasurement {
  std::vector<AlignmentSample> samples;
  double mean_cosine = 0.0;
  int excluded = 0;
  int t_batch = 1;
  std::string model_tag;
};

// Cosine between the two probe-loss gradients, per sampled reference point.
// Each sample's gradients are averaged over a uniform grid of t_batch
// timesteps before comparing: at a single timestep the two losses share one
// residual direction and the cosine is identically 1, so only the aggregated
// view can expose a disagreement between the objectives.
inline AlignmentMeasurement measure_gradient_alignment(const ErasedModel& em, const PseudoToken& v,
                                                       const Dataset& refs, int n_probes,
                                                       int t_batch = 8,
                                                       std::uint64_t seed = 42,
                                                       const std::string& model_tag = "base") {
  if (!em.model.frozen) throw Error("measure_gradient_alignment: model must be frozen");
  if (n_probes < 0) throw ConfigError("measure_gradient_alignment: n_probes must be >= 0");
  if (t_batch < 1) throw ConfigError("measure_gradient_alignment: t_batch must be >= 1");
  AlignmentMeasurement out;
  out.t_batch = t_batch;
  out.model_tag = model_tag;
  if (n_probes == 0) return out;
  if (refs.items.empty()) throw ConfigError("measure_gradient_alignment: empty reference set");

  const auto tokens = prompt_templates(em.enc.vocab, static_cast<int>(v.count()))[0];
  const NoiseSchedule& sched = em.sched();
  Rng rng(seed);
  double acc = 0.0;
  int used = 0;
  for (int i = 0; i < n_probes; ++i) {
    Rng sr = rng.split(static_cast<std::uint64_t>(i));
    const Tensor& z0 = refs.items[sr.uniform_index(refs.items.size())].latent;
    Tensor eps = sr.normal_tensor(em.model_cfg().latent_shape());

    Tensor g_rec(v.rows.shape), g_align(v.rows.shape);
    double t_mean = 0.0;
    for (int k = 0; k < t_batch; ++k) {
      ProbeSample s;
      s.z0 = z0;
      s.eps = eps;
      if (sched.kind == ScheduleKind::v_prediction) {
        s.t = static_cast<double>((k * sched.num_steps) / t_batch);
      } else {
        s.t = (static_cast<double>(k) + 0.5) / static_cast<double>(t_batch);
      }
      t_mean += s.t;
      g_rec = add(g_rec, loss_rec(em, v, {s}, tokens).grad);
      g_align = add(g_align, loss_align(em, v, {s}, tokens).grad);
    }
    AlignmentSample rec;
    rec.index = i;
    rec.t = t_mean / static_cast<double>(t_batch);
    const double n1 = l2_norm(g_rec), n2 = l2_norm(g_align);
    if (n1 == 0.0 || n2 == 0.0) {
      rec.excluded = true;
      out.excluded++;
    } else {
      rec.cosine = dot(g_rec, g_align) / (n1 * n2);
      acc += rec.cosine;
      ++used;
    }
    out.samples.push_back(rec);
  }
  if (used > 0) out.mean_cosine = acc / static_cast<double>(used);
  return out;
}

}  // namespace probe
