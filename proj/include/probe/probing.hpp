#pragma once

#include <string>
#include <vector>

#include "probe/erasure.hpp"
#include "probe/optimizer.hpp"
#include "probe/rng.hpp"
#include "probe/schedule.hpp"
#include "probe/text_encoder.hpp"
#include "probe/world.hpp"

namespace probe {

struct ProbeConfig {
  double lambda = 1.0;
  int tokens = 5;        // pseudo-token count m
  double lr = 0.02;
  long max_steps = 3000;
  int batch = 1;
  std::string init_strategy = "concept_token";  // concept_token | mean_neutral | random
  bool augmentation = false;
  int target_concept = 0;
  std::uint64_t seed = 42;

  void validate() const {
    if (lambda < 0.0) throw ConfigError("probe: lambda must be >= 0");
    if (tokens < 1) throw ConfigError("probe: token count must be >= 1");
    if (max_steps < 1) throw ConfigError("probe: max steps must be >= 1");
    if (batch < 1) throw ConfigError("probe: batch must be >= 1");
    if (init_strategy != "concept_token" && init_strategy != "mean_neutral" &&
        init_strategy != "random")
      throw ConfigError("probe: unknown init strategy '" + init_strategy + "'");
  }
};

struct LossBreakdown {
  long step = 0;
  double l_rec = 0.0;
  double l_align = 0.0;
  double l_total = 0.0;
  double lr = 0.0;
};

struct ProbeResult {
  PseudoToken token;
  std::vector<LossBreakdown> trace;
  std::string model_digest_before;
  std::string model_digest_after;
  ProbeConfig cfg;
};

struct ProbeSample {
  Tensor z0;
  double t = 0.0;
  Tensor eps;
};

struct LossGrad {
  double value = 0.0;
  Tensor grad;  // m x d, w.r.t. the pseudo-token rows
};

// Prompt skeletons the pseudo slots are spliced into. Index 0 is the
// canonical reference prompt; the rest are the augmentation paraphrases.
inline std::vector<std::vector<TokenId>> prompt_templates(const Vocabulary& vocab, int m) {
  std::vector<TokenId> slots;
  for (int s = 0; s < m; ++s) slots.push_back(pseudo_slot(s));
  auto with_slots = [&](std::vector<TokenId> head) {
    head.insert(head.end(), slots.begin(), slots.end());
    return head;
  };
  return {
      with_slots({vocab.id("a"), vocab.id("video"), vocab.id("of")}),
      with_slots({vocab.id("the"), vocab.id("clip"), vocab.id("of")}),
      with_slots({vocab.id("a"), vocab.id("scene"), vocab.id("showing")}),
      with_slots({vocab.id("footage"), vocab.id("of")}),
  };
}

inline PseudoToken init_pseudo(const TextEncoder& enc, const std::string& strategy,
                               int concept_id, int m, Rng rng) {
  if (m < 1) throw ConfigError("init_pseudo: m must be >= 1");
  PseudoToken pt;
  pt.init_strategy = strategy;
  pt.rows = Tensor(Shape{static_cast<std::size_t>(m), enc.embed_dim()});

  if (strategy == "concept_token") {
    const TokenId id = enc.vocab.id("concept_" + std::to_string(concept_id));
    Tensor row = enc.embedding_row(id);
    for (int s = 0; s < m; ++s)
      for (std::size_t j = 0; j < enc.embed_dim(); ++j) pt.rows.at2(s, j) = row[j];
    return pt;
  }
  if (strategy == "mean_neutral") {
    Tensor mean(Shape{enc.embed_dim()});
    for (const auto& w : neutral_descriptors()) axpy(mean, 1.0, enc.embedding_row(enc.vocab.id(w)));
    mean = scale(mean, 1.0 / static_cast<double>(neutral_descriptors().size()));
    for (int s = 0; s < m; ++s)
      for (std::size_t j = 0; j < enc.embed_dim(); ++j) pt.rows.at2(s, j) = mean[j];
    return pt;
  }
  if (strategy == "random") {
    const double target = enc.rms_row_norm();
    for (int s = 0; s < m; ++s) {
      Tensor row(Shape{enc.embed_dim()});
      for (auto& x : row.data) x = rng.normal();
      const double n = l2_norm(row);
      const double sc = n > 0.0 ? target / n : 0.0;
      for (std::size_t j = 0; j < enc.embed_dim(); ++j) pt.rows.at2(s, j) = sc * row[j];
    }
    return pt;
  }
  throw ConfigError("init_pseudo: unknown strategy '" + strategy + "'");
}

namespace probing_detail {

// residual and upstream factors for the noise-space reconstruction loss,
// expressed on the model's velocity output. For v-prediction the noise
// estimate is eps_hat = sqrt(1-abar)*x_t + sqrt(abar)*v_hat, so the
// eps-residual seen through v_hat picks up a sqrt(abar) factor; flow models
// already predict eps - z0, so the residual is direct.
struct RecResidual {
  Tensor resid;
  double dresid_dv = 1.0;
};

inline RecResidual rec_residual(const NoiseSchedule& sched, const Tensor& xt, const Tensor& pred,
                                const ProbeSample& s) {
  RecResidual r;
  if (sched.kind == ScheduleKind::v_prediction) {
    const double ab = sched.abar(s.t);
    r.resid = scale(xt, std::sqrt(1.0 - ab));
    axpy(r.resid, std::sqrt(ab), pred);
    axpy(r.resid, -1.0, s.eps);
    r.dresid_dv = std::sqrt(ab);
  } else {
    r.resid = sub(pred, sub(s.eps, s.z0));
    r.dresid_dv = 1.0;
  }
  return r;
}

struct AlignResidual {
  Tensor resid;
  double dresid_dv = 0.0;
};

inline AlignResidual align_residual(const NoiseSchedule& sched, const Tensor& xt,
                                    const Tensor& pred, const ProbeSample& s) {
  AlignResidual r;
  Tensor z0_hat = recover_clean(xt, pred, s.t, sched);
  r.resid = sub(z0_hat, s.z0);
  r.dresid_dv = sched.kind == ScheduleKind::v_prediction ? -std::sqrt(1.0 - sched.abar(s.t))
                                                         : -s.t;
  return r;
}

inline void require_probe_inputs(const ErasedModel& em, const std::vector<ProbeSample>& batch) {
  if (!em.model.frozen) throw Error("probe loss: model must be frozen");
  if (batch.empty()) throw ConfigError("probe loss: empty batch");
}

}  // namespace probing_detail

inline LossGrad loss_rec(const ErasedModel& em, const PseudoToken& v,
                         const std::vector<ProbeSample>& batch,
                         const std::vector<TokenId>& tokens) {
  probing_detail::require_probe_inputs(em, batch);
  const double n_el = static_cast<double>(shape_numel(em.model_cfg().latent_shape()));
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  LossGrad out;
  out.grad = Tensor(v.rows.shape);
  const Condition cond = encode_prompt(em.enc, tokens, &v);
  for (const auto& s : batch) {
    Tensor xt = noise_forward(s.z0, s.eps, s.t, em.sched());
    Tensor pred = em.velocity(xt, cond, s.t);
    auto r = probing_detail::rec_residual(em.sched(), xt, pred, s);
    out.value += inv_b * mean_sq(r.resid);
    Tensor upstream = scale(r.resid, 2.0 * r.dresid_dv * inv_b / n_el);
    Tensor grad_cond = em.velocity_backward(xt, cond, s.t, upstream);
    out.grad = add(out.grad, encode_prompt_backward(em.enc, tokens, v, grad_cond));
  }
  return out;
}

inline LossGrad loss_align(const ErasedModel& em, const PseudoToken& v,
                           const std::vector<ProbeSample>& batch,
                           const std::vector<TokenId>& tokens) {
  probing_detail::require_probe_inputs(em, batch);
  const double n_el = static_cast<double>(shape_numel(em.model_cfg().latent_shape()));
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  LossGrad out;
  out.grad = Tensor(v.rows.shape);
  const Condition cond = encode_prompt(em.enc, tokens, &v);
  for (const auto& s : batch) {
    Tensor xt = noise_forward(s.z0, s.eps, s.t, em.sched());
    Tensor pred = em.velocity(xt, cond, s.t);
    auto r = probing_detail::align_residual(em.sched(), xt, pred, s);
    out.value += inv_b * mean_sq(r.resid);
    Tensor upstream = scale(r.resid, 2.0 * r.dresid_dv * inv_b / n_el);
    Tensor grad_cond = em.velocity_backward(xt, cond, s.t, upstream);
    out.grad = add(out.grad, encode_prompt_backward(em.enc, tokens, v, grad_cond));
  }
  return out;
}

// Pseudo-token optimization against a frozen erased model: initialize the
// embedding, then repeatedly sample a reference clip, a timestep, and a noise
// draw, and take one optimizer step on the combined objective. Only the
// pseudo-token rows ever move.
inline ProbeResult probe_optimize(const ErasedModel& em, const Dataset& refs, ProbeConfig cfg,
                                  const LatentCodec& codec = LatentCodec::identity()) {
  cfg.validate();
  if (refs.split != Split::reference)
    throw ConfigError("probe_optimize: dataset split must be 'reference'");
  if (refs.items.empty()) throw ConfigError("probe_optimize: empty reference set");
  if (!em.model.frozen) throw Error("probe_optimize: model must be frozen");

  std::vector<Tensor> clips;
  clips.reserve(refs.items.size());
  for (const auto& item : refs.items) clips.push_back(codec.decode(item.latent));

  Rng rng(cfg.seed);
  ProbeResult res;
  res.cfg = cfg;
  res.model_digest_before = em.weight_digest();
  res.token = init_pseudo(em.enc, cfg.init_strategy, cfg.target_concept, cfg.tokens, rng.split(1));

  const auto templates = prompt_templates(em.enc.vocab, cfg.tokens);
  OptimizerConfig ocfg;
  ocfg.lr = cfg.lr;
  ocfg.warmup_steps = std::min<long>(100, cfg.max_steps);
  ocfg.total_steps = cfg.max_steps;
  OptimizerState opt(ocfg, res.token.rows.shape);

  const double n_el = static_cast<double>(shape_numel(em.model_cfg().latent_shape()));
  LossBreakdown last_finite;
  bool have_finite = false;
  for (long step = 0; step < cfg.max_steps; ++step) {
    Rng sr = rng.split(1000 + static_cast<std::uint64_t>(step));
    const auto& tokens = cfg.augmentation ? templates[sr.uniform_index(templates.size())]
                                          : templates[0];
    const Condition cond = encode_prompt(em.enc, tokens, &res.token);

    double l_rec = 0.0, l_align = 0.0;
    Tensor grad(res.token.rows.shape);
    const double inv_b = 1.0 / static_cast<double>(cfg.batch);
    for (int b = 0; b < cfg.batch; ++b) {
      Rng br = sr.split(static_cast<std::uint64_t>(b));
      ProbeSample s;
      s.z0 = clips[br.uniform_index(clips.size())];
      s.t = em.sched().kind == ScheduleKind::v_prediction
                ? static_cast<double>(br.uniform_index(em.sched().num_steps))
                : br.uniform_open();
      s.eps = br.normal_tensor(em.model_cfg().latent_shape());

      Tensor xt = noise_forward(s.z0, s.eps, s.t, em.sched());
      Tensor pred = em.velocity(xt, cond, s.t);
      auto rr = probing_detail::rec_residual(em.sched(), xt, pred, s);
      auto ra = probing_detail::align_residual(em.sched(), xt, pred, s);
      l_rec += inv_b * mean_sq(rr.resid);
      l_align += inv_b * mean_sq(ra.resid);

      // both losses share the forward pass; one backward with the combined
      // upstream covers rec + lambda * align exactly
      Tensor upstream = scale(rr.resid, 2.0 * rr.dresid_dv * inv_b / n_el);
      if (cfg.lambda != 0.0)
        axpy(upstream, cfg.lambda * 2.0 * ra.dresid_dv * inv_b / n_el, ra.resid);
      Tensor grad_cond = em.velocity_backward(xt, cond, s.t, upstream);
      grad = add(grad, encode_prompt_backward(em.enc, tokens, res.token, grad_cond));
    }

    LossBreakdown bd;
    bd.step = step;
    bd.l_rec = l_rec;
    bd.l_align = l_align;
    bd.l_total = l_rec + cfg.lambda * l_align;
    bd.lr = lr_at_step(ocfg, step);
    if (!std::isfinite(bd.l_total)) {
      std::string msg = "probe_optimize: non-finite loss at step " + std::to_string(step);
      if (have_finite)
        msg += " (last finite: step " + std::to_string(last_finite.step) + ", total " +
               std::to_string(last_finite.l_total) + ")";
      throw NumericError(msg);
    }
    last_finite = bd;
    have_finite = true;
    res.trace.push_back(bd);
    optimizer_step(res.token.rows, grad, opt);
  }

  res.model_digest_after = em.weight_digest();
  if (res.model_digest_after != res.model_digest_before)
    throw Error("probe_optimize: frozen model digest changed during probing");
  return res;
}

}  // namespace probe
