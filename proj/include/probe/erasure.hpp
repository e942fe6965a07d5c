#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "probe/checkpoint.hpp"
#include "probe/denoiser.hpp"
#include "probe/optimizer.hpp"
#include "probe/rng.hpp"
#include "probe/sampler.hpp"
#include "probe/text_encoder.hpp"
#include "probe/training.hpp"
#include "probe/world.hpp"

namespace probe {

enum class ErasureMethod { none, neg_prompt, activation_steer, weight_unlearn };

inline std::string to_string(ErasureMethod m) {
  switch (m) {
    case ErasureMethod::none: return "none";
    case ErasureMethod::neg_prompt: return "neg_prompt";
    case ErasureMethod::activation_steer: return "activation_steer";
    default: return "weight_unlearn";
  }
}

inline ErasureMethod erasure_method_from(const std::string& s) {
  if (s == "none") return ErasureMethod::none;
  if (s == "neg_prompt") return ErasureMethod::neg_prompt;
  if (s == "activation_steer") return ErasureMethod::activation_steer;
  if (s == "weight_unlearn") return ErasureMethod::weight_unlearn;
  throw ConfigError("unknown erasure method: " + s);
}

struct ErasureConfig {
  ErasureMethod method = ErasureMethod::neg_prompt;
  int target_concept = 0;
  // inside classifier-free guidance the wrapper's own terms cancel out of
  // the guidance delta, so gamma only bites once it exceeds the cfg scale
  double gamma = 9.0;  // negative-prompt strength
  double rho = 1.0;    // projection removal coefficient

  long unlearn_steps = 800;
  int unlearn_batch = 4;
  double unlearn_lr = 1e-2;
  int unlearn_rank = 4;
  double retention = 1.0;
  std::uint64_t seed = 42;

  void validate() const {
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ConfigError("erasure: gamma must be finite and >= 0");
    if (rho < 0.0 || rho > 1.0) throw ConfigError("erasure: rho must lie in [0,1]");
    if (unlearn_steps < 0) throw ConfigError("erasure: unlearn steps must be >= 0");
    if (unlearn_rank < 1) throw ConfigError("erasure: unlearn rank must be >= 1");
  }
};

// A frozen model plus the inference-time wrapper that implements the erasure.
// For neg_prompt and activation_steer the weights are bit-identical to the
// base model; weight_unlearn carries mutated weights and a fresh digest.
struct ErasedModel {
  DenoiserModel model;  // always frozen
  TextEncoder enc;
  ErasureConfig cfg;
  Condition cond_null;
  Condition cond_neg;   // encoded prompt of the erased concept
  Tensor concept_dir;   // unit direction of cond_neg in condition space
  std::string base_digest;

  const ModelConfig& model_cfg() const { return model.cfg; }
  const NoiseSchedule& sched() const { return model.sched; }
  std::string weight_digest() const { return model.weight_digest(); }

  // condition as actually injected into the network after the wrapper
  Condition effective_condition(const Condition& c) const {
    if (cfg.method != ErasureMethod::activation_steer) return c;
    Tensor out = c;
    axpy(out, -cfg.rho * dot(concept_dir, c), concept_dir);
    return out;
  }

  Tensor velocity(const Tensor& xt, const Condition& c, double t) const {
    if (cfg.method == ErasureMethod::neg_prompt) {
      Tensor v = denoise_forward(model, xt, c, t);
      Tensor vn = denoise_forward(model, xt, cond_neg, t);
      Tensor vu = denoise_forward(model, xt, cond_null, t);
      axpy(v, -cfg.gamma, vn);
      axpy(v, cfg.gamma, vu);
      return v;
    }
    return denoise_forward(model, xt, effective_condition(c), t);
  }

  Tensor velocity_uncond(const Tensor& xt, double t) const {
    return velocity(xt, cond_null, t);
  }

  // gradient of a scalar loss w.r.t. the incoming condition, given the
  // upstream gradient w.r.t. the wrapped velocity output. The negative and
  // null branches of neg_prompt use fixed conditions and contribute nothing.
  Tensor velocity_backward(const Tensor& xt, const Condition& c, double t,
                           const Tensor& upstream) const {
    if (cfg.method == ErasureMethod::neg_prompt)
      return denoise_backward(model, xt, c, t, upstream).grad_cond;
    Tensor g = denoise_backward(model, xt, effective_condition(c), t, upstream).grad_cond;
    if (cfg.method == ErasureMethod::activation_steer)
      axpy(g, -cfg.rho * dot(concept_dir, g), concept_dir);
    return g;
  }
};

namespace erasure_detail {

inline Tensor unit_concept_dir(const Condition& cond_neg) {
  const double n = l2_norm(cond_neg);
  if (n < 1e-12) throw NumericError("erasure: concept direction has zero norm");
  return scale(cond_neg, 1.0 / n);
}

inline ErasedModel wrap(const DenoiserModel& base, const TextEncoder& enc,
                        const ErasureConfig& cfg) {
  ErasedModel em;
  em.model = base;
  em.model.frozen = true;
  em.enc = enc;
  em.cfg = cfg;
  em.cond_null = encode_prompt(enc, {0});
  em.cond_neg = encode_prompt(enc, concept_prompt(enc.vocab, cfg.target_concept));
  em.concept_dir = unit_concept_dir(em.cond_neg);
  em.base_digest = base.weight_digest();
  return em;
}

}  // namespace erasure_detail

// Identity wrapper: the base model frozen behind the ErasedModel interface.
inline ErasedModel erase_none(const DenoiserModel& base, const TextEncoder& enc,
                              int target_concept) {
  ErasureConfig cfg;
  cfg.method = ErasureMethod::none;
  cfg.target_concept = target_concept;
  ErasedModel em = erasure_detail::wrap(base, enc, cfg);
  em.model.provenance = "none";
  return em;
}

inline ErasedModel erase_neg_prompt(const DenoiserModel& base, const TextEncoder& enc,
                                    ErasureConfig cfg) {
  cfg.method = ErasureMethod::neg_prompt;
  cfg.validate();
  ErasedModel em = erasure_detail::wrap(base, enc, cfg);
  em.model.provenance = "neg_prompt";
  return em;
}

inline ErasedModel erase_activation_steer(const DenoiserModel& base, const TextEncoder& enc,
                                          ErasureConfig cfg) {
  cfg.method = ErasureMethod::activation_steer;
  cfg.validate();
  ErasedModel em = erasure_detail::wrap(base, enc, cfg);
  em.model.provenance = "activation_steer";
  return em;
}

// Low-rank factor pair for one weight matrix; delta = B * A with rank <= r.
struct LoraPair {
  Tensor a;  // r x in
  Tensor b;  // out x r

  Tensor delta() const { return matmul(b, a); }
};

// Fine-tunes low-rank deltas on the condition-injection and spatial layers so
// target-concept predictions collapse onto the unconditional prediction while
// anchor-concept predictions stay put. The deltas merge into the weights and
// the result re-freezes under a new digest.
inline ErasedModel erase_weight_unlearn(const DenoiserModel& base, const TextEncoder& enc,
                                        ErasureConfig cfg, const Dataset& anchor) {
  cfg.method = ErasureMethod::weight_unlearn;
  cfg.validate();
  if (base.frozen) throw Error("erase_weight_unlearn: base model must be unfrozen at entry");

  DenoiserModel work = base;  // weights mutate here
  const std::size_t r = static_cast<std::size_t>(cfg.unlearn_rank);

  auto make_pair = [&](const Tensor& w, Rng rng) {
    LoraPair p;
    p.a = Tensor(Shape{r, w.cols()});
    const double s = 1.0 / std::sqrt(static_cast<double>(w.cols()));
    for (auto& x : p.a.data) x = s * rng.normal();
    p.b = Tensor(Shape{w.rows(), r});  // zero init so the delta starts at zero
    return p;
  };
  Rng rng(cfg.seed);
  LoraPair p_uc = make_pair(base.w.uc, rng.split(1));
  LoraPair p_w1 = make_pair(base.w.w1, rng.split(2));
  LoraPair p_w2 = make_pair(base.w.w2, rng.split(3));

  auto apply_deltas = [&]() {
    work.w.uc = add(base.w.uc, p_uc.delta());
    work.w.w1 = add(base.w.w1, p_w1.delta());
    work.w.w2 = add(base.w.w2, p_w2.delta());
  };

  OptimizerConfig ocfg;
  ocfg.lr = cfg.unlearn_lr;
  ocfg.warmup_steps = std::min<long>(20, cfg.unlearn_steps);
  ocfg.total_steps = std::max<long>(cfg.unlearn_steps, 1);
  OptimizerState s_uc_a(ocfg, p_uc.a.shape), s_uc_b(ocfg, p_uc.b.shape);
  OptimizerState s_w1_a(ocfg, p_w1.a.shape), s_w1_b(ocfg, p_w1.b.shape);
  OptimizerState s_w2_a(ocfg, p_w2.a.shape), s_w2_b(ocfg, p_w2.b.shape);

  const Condition c_null = encode_prompt(enc, {0});
  const Condition c_tgt = encode_prompt(enc, concept_prompt(enc.vocab, cfg.target_concept));
  std::vector<const DatasetItem*> target_items, anchor_items;
  for (const auto& item : anchor.items)
    (item.concept_id == cfg.target_concept ? target_items : anchor_items).push_back(&item);
  if (cfg.unlearn_steps > 0 && target_items.empty())
    throw ConfigError("erase_weight_unlearn: no target-concept items in dataset");
  std::map<int, Condition> anchor_conds;
  for (const auto* it : anchor_items)
    if (!anchor_conds.count(it->concept_id))
      anchor_conds.emplace(it->concept_id, encode_prompt(enc, it->prompt));

  const double n_el = static_cast<double>(shape_numel(base.cfg.latent_shape()));
  for (long step = 0; step < cfg.unlearn_steps; ++step) {
    apply_deltas();
    Rng sr = rng.split(100 + static_cast<std::uint64_t>(step));
    DenoiserWeights gsum = DenoiserWeights::zeros_like(base.cfg);
    double loss = 0.0;
    for (int bi = 0; bi < cfg.unlearn_batch; ++bi) {
      Rng br = sr.split(static_cast<std::uint64_t>(bi));
      const bool is_target = anchor_items.empty() || br.uniform() < 0.5;
      const DatasetItem& item = is_target
          ? *target_items[br.uniform_index(target_items.size())]
          : *anchor_items[br.uniform_index(anchor_items.size())];
      const double t = base.sched.kind == ScheduleKind::v_prediction
                           ? static_cast<double>(br.uniform_index(base.sched.num_steps))
                           : br.uniform_open();
      Tensor eps = br.normal_tensor(base.cfg.latent_shape());
      Tensor xt = noise_forward(item.latent, eps, t, base.sched);
      const Condition& c = is_target ? c_tgt : anchor_conds.at(item.concept_id);
      // targets come from the untouched base weights
      Tensor target = is_target ? denoise_forward(base, xt, c_null, t)
                                : denoise_forward(base, xt, c, t);
      Tensor pred = denoise_forward(work, xt, c, t);
      Tensor resid = sub(pred, target);
      const double w = is_target ? 1.0 : cfg.retention;
      loss += w * mean_sq(resid);
      Tensor upstream = scale(resid, 2.0 * w / (n_el * cfg.unlearn_batch));
      BackwardResult bres = denoise_backward(work, xt, c, t, upstream, true);
      accumulate(gsum, *bres.grad_weights, 1.0);
    }
    if (!std::isfinite(loss))
      throw NumericError("erase_weight_unlearn: non-finite loss at step " + std::to_string(step));

    // chain full-matrix gradients into the factors: dA = B^T dW, dB = dW A^T
    auto step_pair = [&](LoraPair& p, const Tensor& dw, OptimizerState& sa, OptimizerState& sb) {
      Tensor da(p.a.shape), db(p.b.shape);
      for (std::size_t i = 0; i < p.a.rows(); ++i)
        for (std::size_t j = 0; j < p.a.cols(); ++j) {
          double acc = 0.0;
          for (std::size_t o = 0; o < p.b.rows(); ++o) acc += p.b.at2(o, i) * dw.at2(o, j);
          da.at2(i, j) = acc;
        }
      for (std::size_t o = 0; o < p.b.rows(); ++o)
        for (std::size_t i = 0; i < p.b.cols(); ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j < p.a.cols(); ++j) acc += dw.at2(o, j) * p.a.at2(i, j);
          db.at2(o, i) = acc;
        }
      optimizer_step(p.a, da, sa);
      optimizer_step(p.b, db, sb);
    };
    step_pair(p_uc, gsum.uc, s_uc_a, s_uc_b);
    step_pair(p_w1, gsum.w1, s_w1_a, s_w1_b);
    step_pair(p_w2, gsum.w2, s_w2_a, s_w2_b);
  }
  apply_deltas();

  ErasedModel em = erasure_detail::wrap(work, enc, cfg);
  em.base_digest = base.weight_digest();
  em.model.provenance = "weight_unlearn";
  return em;
}

// Serialization: base checkpoint tensors (model + encoder) plus a wrapper
// record in the container metadata.
inline void save_erased(const ErasedModel& em, const std::filesystem::path& path) {
  Checkpoint ck;
  ck.frozen = true;
  nlohmann::json meta;
  meta["kind"] = "erased_model";
  meta["method"] = to_string(em.cfg.method);
  meta["target_concept"] = em.cfg.target_concept;
  meta["gamma"] = em.cfg.gamma;
  meta["rho"] = em.cfg.rho;
  meta["unlearn_steps"] = em.cfg.unlearn_steps;
  meta["unlearn_batch"] = em.cfg.unlearn_batch;
  meta["unlearn_lr"] = em.cfg.unlearn_lr;
  meta["unlearn_rank"] = em.cfg.unlearn_rank;
  meta["retention"] = em.cfg.retention;
  meta["seed"] = em.cfg.seed;
  meta["base_digest"] = em.base_digest;
  meta["provenance"] = em.model.provenance;
  meta["vocab"] = em.enc.vocab.words;
  const ModelConfig& mc = em.model.cfg;
  meta["model"] = {{"frames", mc.frames},     {"height", mc.height},
                   {"width", mc.width},       {"channels", mc.channels},
                   {"embed_dim", mc.embed_dim}, {"cond_dim", mc.cond_dim},
                   {"hidden", mc.hidden},     {"attn_dim", mc.attn_dim},
                   {"kind", mc.kind == ScheduleKind::v_prediction ? "v_prediction" : "flow_matching"},
                   {"num_steps", mc.num_steps}};
  ck.metadata = meta.dump();

  em.model.w.for_each([&](const char* name, const Tensor& t) {
    ck.tensors.emplace(std::string("model.") + name, t);
  });
  ck.tensors.emplace("enc.embeddings", em.enc.embeddings);
  ck.tensors.emplace("enc.mix_w", em.enc.mix_w);
  ck.tensors.emplace("enc.mix_b", em.enc.mix_b);

  Digest d;
  em.model.w.for_each([&](const char* name, const Tensor& t) {
    d.str(name);
    d.tensor(t);
  });
  ck.weight_digest = d.h;
  save_checkpoint(ck, path);
}

inline ErasedModel load_erased(const std::filesystem::path& path) {
  Checkpoint ck = load_checkpoint(path);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(ck.metadata);
  } catch (const nlohmann::json::exception& e) {
    throw ArtifactError("erased model metadata is not valid JSON: " + std::string(e.what()));
  }
  if (meta.value("kind", "") != "erased_model")
    throw ArtifactError(path.string() + " does not hold an erased model");

  ModelConfig mc;
  const auto& jm = meta.at("model");
  mc.frames = jm.at("frames").get<std::size_t>();
  mc.height = jm.at("height").get<std::size_t>();
  mc.width = jm.at("width").get<std::size_t>();
  mc.channels = jm.at("channels").get<std::size_t>();
  mc.embed_dim = jm.at("embed_dim").get<std::size_t>();
  mc.cond_dim = jm.at("cond_dim").get<std::size_t>();
  mc.hidden = jm.at("hidden").get<std::size_t>();
  mc.attn_dim = jm.at("attn_dim").get<std::size_t>();
  mc.kind = jm.at("kind").get<std::string>() == "flow_matching" ? ScheduleKind::flow_matching
                                                                : ScheduleKind::v_prediction;
  mc.num_steps = jm.at("num_steps").get<int>();

  DenoiserModel model;
  model.cfg = mc;
  model.sched = mc.schedule();
  model.w = DenoiserWeights::zeros_like(mc);
  model.w.for_each([&](const char* name, Tensor& t) {
    auto it = ck.tensors.find(std::string("model.") + name);
    if (it == ck.tensors.end())
      throw ArtifactError(std::string("erased model missing tensor model.") + name);
    if (it->second.shape != t.shape)
      throw ArtifactError(std::string("erased model tensor shape mismatch for ") + name);
    t = it->second;
  });
  model.frozen = true;
  model.provenance = meta.value("provenance", "erased");

  TextEncoder enc;
  enc.vocab.words = meta.at("vocab").get<std::vector<std::string>>();
  auto grab = [&](const char* name) {
    auto it = ck.tensors.find(name);
    if (it == ck.tensors.end()) throw ArtifactError(std::string("erased model missing ") + name);
    return it->second;
  };
  enc.embeddings = grab("enc.embeddings");
  enc.mix_w = grab("enc.mix_w");
  enc.mix_b = grab("enc.mix_b");

  ErasureConfig cfg;
  cfg.method = erasure_method_from(meta.at("method").get<std::string>());
  cfg.target_concept = meta.at("target_concept").get<int>();
  cfg.gamma = meta.at("gamma").get<double>();
  cfg.rho = meta.at("rho").get<double>();
  cfg.unlearn_steps = meta.at("unlearn_steps").get<long>();
  cfg.unlearn_batch = meta.at("unlearn_batch").get<int>();
  cfg.unlearn_lr = meta.at("unlearn_lr").get<double>();
  cfg.unlearn_rank = meta.at("unlearn_rank").get<int>();
  cfg.retention = meta.at("retention").get<double>();
  cfg.seed = meta.at("seed").get<std::uint64_t>();

  ErasedModel em = erasure_detail::wrap(model, enc, cfg);
  em.base_digest = meta.at("base_digest").get<std::string>();
  em.model.provenance = model.provenance;

  Digest d;
  em.model.w.for_each([&](const char* name, const Tensor& t) {
    d.str(name);
    d.tensor(t);
  });
  if (d.h != ck.weight_digest)
    throw ArtifactError("erased model weight digest mismatch in " + path.string());
  return em;
}

// Reference clips come from the unerased model only; the provenance guard
// rejects anything that went through an erasure.
inline Dataset build_reference_set(const DenoiserModel& base, const TextEncoder& enc,
                                   int concept_id, int n, const SamplerConfig& scfg,
                                   const LatentCodec& codec = LatentCodec::identity()) {
  if (base.provenance != "base")
    throw Error("build_reference_set: model provenance is '" + base.provenance +
                "', references require the unerased base model");
  if (n < 0) throw ConfigError("build_reference_set: n must be >= 0");

  const Condition c = encode_prompt(enc, concept_prompt(enc.vocab, concept_id));
  const Condition c_null = encode_prompt(enc, {0});
  const std::string digest = base.weight_digest();

  Dataset ds;
  ds.split = Split::reference;
  Rng rng(scfg.seed);
  for (int i = 0; i < n; ++i) {
    Rng vr = rng.split(static_cast<std::uint64_t>(i));
    Tensor x = sample([&](const Tensor& xt, double t) { return denoise_forward(base, xt, c, t); },
                      [&](const Tensor& xt, double t) { return denoise_forward(base, xt, c_null, t); },
                      scfg, base.sched, base.cfg.latent_shape(), vr);
    DatasetItem item;
    item.id = static_cast<std::uint64_t>(i);
    item.latent = codec.encode(x);
    item.concept_id = concept_id;
    item.prompt = concept_prompt(enc.vocab, concept_id);
    item.generator_digest = digest;
    ds.items.push_back(std::move(item));
  }
  return ds;
}

}  // namespace probe
