#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "probe/denoiser.hpp"
#include "probe/digest.hpp"
#include "probe/distill.hpp"
#include "probe/erasure.hpp"
#include "probe/eval.hpp"
#include "probe/probing.hpp"
#include "probe/training.hpp"
#include "probe/world.hpp"

namespace probe {

// Everything a full experiment needs, stored as a flat dotted-key JSON file.
// One global seed feeds every stage so a single value pins the whole run.
struct ExperimentConfig {
  std::uint64_t seed = 42;

  WorldConfig world;
  int holdout_per_concept = 50;

  ModelConfig model;
  TrainConfig train;

  int ref_count = 20;
  std::string ref_codec = "identity";  // identity | fixed_linear

  ErasureConfig erase;
  ProbeConfig probe;
  SamplerConfig sampler;

  EvalConfig eval;
  DistillConfig distill;
  int distill_t_batch = 8;
  int distill_probes = 16;

  void apply_seed() {
    world.seed = seed;
    train.seed = seed;
    erase.seed = seed;
    probe.seed = seed;
    sampler.seed = seed;
    eval.sampler.seed = seed;
    distill.seed = seed;
  }
};

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["seed"] = c.seed;

  j["world.num_concepts"] = c.world.num_concepts;
  j["world.train_per_concept"] = c.world.train_per_concept;
  j["world.eval_per_concept"] = c.world.eval_per_concept;
  j["world.holdout_per_concept"] = c.holdout_per_concept;
  j["world.noise"] = c.world.noise;
  j["world.context_strength"] = c.world.context_strength;

  j["model.family"] =
      c.model.kind == ScheduleKind::v_prediction ? "v_prediction" : "flow_matching";
  j["model.frames"] = c.model.frames;
  j["model.height"] = c.model.height;
  j["model.width"] = c.model.width;
  j["model.channels"] = c.model.channels;
  j["model.embed_dim"] = c.model.embed_dim;
  j["model.cond_dim"] = c.model.cond_dim;
  j["model.hidden"] = c.model.hidden;
  j["model.attn_dim"] = c.model.attn_dim;
  j["model.num_steps"] = c.model.num_steps;

  j["train.steps"] = c.train.steps;
  j["train.batch"] = c.train.batch;
  j["train.lr"] = c.train.lr;

  j["refs.count"] = c.ref_count;
  j["refs.codec"] = c.ref_codec;

  j["erase.target_concept"] = c.erase.target_concept;
  j["erase.gamma"] = c.erase.gamma;
  j["erase.rho"] = c.erase.rho;
  j["erase.unlearn_steps"] = c.erase.unlearn_steps;
  j["erase.unlearn_batch"] = c.erase.unlearn_batch;
  j["erase.unlearn_lr"] = c.erase.unlearn_lr;
  j["erase.unlearn_rank"] = c.erase.unlearn_rank;
  j["erase.retention"] = c.erase.retention;

  j["probe.lambda"] = c.probe.lambda;
  j["probe.tokens"] = c.probe.tokens;
  j["probe.lr"] = c.probe.lr;
  j["probe.max_steps"] = c.probe.max_steps;
  j["probe.batch"] = c.probe.batch;
  j["probe.init"] = c.probe.init_strategy;
  j["probe.augmentation"] = c.probe.augmentation;

  j["sampler.steps"] = c.sampler.steps;
  j["sampler.cfg_scale"] = c.sampler.cfg_scale;

  j["eval.videos"] = c.eval.videos;
  j["eval.mode"] = to_string(c.eval.mode);
  j["eval.detect_threshold"] = c.eval.detect_threshold;
  j["eval.theta_low"] = c.eval.thresholds.low;
  j["eval.theta_high"] = c.eval.thresholds.high;
  j["eval.theta_range"] = c.eval.thresholds.range;

  j["distill.guidance"] = c.distill.guidance;
  j["distill.steps"] = c.distill.steps;
  j["distill.batch"] = c.distill.batch;
  j["distill.lr"] = c.distill.lr;
  j["distill.t_batch"] = c.distill_t_batch;
  j["distill.probes"] = c.distill_probes;
  return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  for (const auto& [key, _] : j.items()) {
    static const char* known[] = {
        "seed", "world.num_concepts", "world.train_per_concept", "world.eval_per_concept",
        "world.holdout_per_concept", "world.noise", "world.context_strength", "model.family",
        "model.frames", "model.height", "model.width", "model.channels", "model.embed_dim",
        "model.cond_dim", "model.hidden", "model.attn_dim", "model.num_steps", "train.steps",
        "train.batch", "train.lr", "refs.count", "refs.codec", "erase.target_concept",
        "erase.gamma", "erase.rho", "erase.unlearn_steps", "erase.unlearn_batch",
        "erase.unlearn_lr", "erase.unlearn_rank", "erase.retention", "probe.lambda",
        "probe.tokens", "probe.lr", "probe.max_steps", "probe.batch", "probe.init",
        "probe.augmentation", "sampler.steps", "sampler.cfg_scale", "eval.videos", "eval.mode",
        "eval.detect_threshold", "eval.theta_low", "eval.theta_high", "eval.theta_range",
        "distill.guidance", "distill.steps", "distill.batch", "distill.lr", "distill.t_batch",
        "distill.probes"};
    bool ok = false;
    for (const char* k : known) ok |= key == k;
    if (!ok) throw ConfigError("unknown config key: " + key);
  }

  get("seed", c.seed);
  get("world.num_concepts", c.world.num_concepts);
  get("world.train_per_concept", c.world.train_per_concept);
  get("world.eval_per_concept", c.world.eval_per_concept);
  get("world.holdout_per_concept", c.holdout_per_concept);
  get("world.noise", c.world.noise);
  get("world.context_strength", c.world.context_strength);

  if (j.contains("model.family")) {
    const std::string fam = j.at("model.family").get<std::string>();
    if (fam == "v_prediction") c.model.kind = ScheduleKind::v_prediction;
    else if (fam == "flow_matching") c.model.kind = ScheduleKind::flow_matching;
    else throw ConfigError("model.family must be v_prediction or flow_matching, got " + fam);
  }
  get("model.frames", c.model.frames);
  get("model.height", c.model.height);
  get("model.width", c.model.width);
  get("model.channels", c.model.channels);
  get("model.embed_dim", c.model.embed_dim);
  get("model.cond_dim", c.model.cond_dim);
  get("model.hidden", c.model.hidden);
  get("model.attn_dim", c.model.attn_dim);
  get("model.num_steps", c.model.num_steps);

  get("train.steps", c.train.steps);
  get("train.batch", c.train.batch);
  get("train.lr", c.train.lr);

  get("refs.count", c.ref_count);
  get("refs.codec", c.ref_codec);

  get("erase.target_concept", c.erase.target_concept);
  get("erase.gamma", c.erase.gamma);
  get("erase.rho", c.erase.rho);
  get("erase.unlearn_steps", c.erase.unlearn_steps);
  get("erase.unlearn_batch", c.erase.unlearn_batch);
  get("erase.unlearn_lr", c.erase.unlearn_lr);
  get("erase.unlearn_rank", c.erase.unlearn_rank);
  get("erase.retention", c.erase.retention);

  get("probe.lambda", c.probe.lambda);
  get("probe.tokens", c.probe.tokens);
  get("probe.lr", c.probe.lr);
  get("probe.max_steps", c.probe.max_steps);
  get("probe.batch", c.probe.batch);
  get("probe.init", c.probe.init_strategy);
  get("probe.augmentation", c.probe.augmentation);

  get("sampler.steps", c.sampler.steps);
  get("sampler.cfg_scale", c.sampler.cfg_scale);

  get("eval.videos", c.eval.videos);
  if (j.contains("eval.mode")) c.eval.mode = score_mode_from(j.at("eval.mode").get<std::string>());
  get("eval.detect_threshold", c.eval.detect_threshold);
  get("eval.theta_low", c.eval.thresholds.low);
  get("eval.theta_high", c.eval.thresholds.high);
  get("eval.theta_range", c.eval.thresholds.range);

  get("distill.guidance", c.distill.guidance);
  get("distill.steps", c.distill.steps);
  get("distill.batch", c.distill.batch);
  get("distill.lr", c.distill.lr);
  get("distill.t_batch", c.distill_t_batch);
  get("distill.probes", c.distill_probes);

  c.eval.sampler = c.sampler;
  c.probe.target_concept = c.erase.target_concept;
  c.apply_seed();
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse error in " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

inline void save_config(const ExperimentConfig& c, const std::filesystem::path& path) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ArtifactError("cannot write config to " + path.string());
  os << config_to_json(c).dump(2) << "\n";
}

inline std::string config_digest(const ExperimentConfig& c) {
  Digest d;
  d.str(config_to_json(c).dump());
  return d.hex();
}

// Cheap structural checks plus the world separability precheck; runs before
// any expensive compute.
inline void validate_config(const ExperimentConfig& c) {
  if (c.world.num_concepts < 2) throw ConfigError("config: need at least 2 concepts");
  if (c.world.train_per_concept < 1 || c.world.eval_per_concept < 1 || c.holdout_per_concept < 1)
    throw ConfigError("config: dataset sizes must be >= 1");
  if (c.world.noise < 0.0) throw ConfigError("config: world noise must be >= 0");
  if (c.model.frames < 2 || c.model.frame_dim() < 1)
    throw ConfigError("config: degenerate model dimensions");
  if (c.model.hidden < 1 || c.model.attn_dim < 1 || c.model.cond_dim < 1 || c.model.embed_dim < 1)
    throw ConfigError("config: degenerate model dimensions");
  if (c.model.num_steps < 1) throw ConfigError("config: model.num_steps must be >= 1");
  if (c.train.steps < 0 || c.train.batch < 1) throw ConfigError("config: bad training section");
  if (c.ref_count < 0) throw ConfigError("config: refs.count must be >= 0");
  if (c.ref_codec != "identity" && c.ref_codec != "fixed_linear")
    throw ConfigError("config: refs.codec must be identity or fixed_linear");
  if (c.erase.target_concept < 0 || c.erase.target_concept >= c.world.num_concepts)
    throw ConfigError("config: erase.target_concept out of range");
  c.erase.validate();
  c.probe.validate();
  if (c.sampler.steps < 1) throw ConfigError("config: sampler.steps must be >= 1");
  if (c.sampler.cfg_scale < 0.0) throw ConfigError("config: sampler.cfg_scale must be >= 0");
  if (c.eval.videos < 1) throw ConfigError("config: eval.videos must be >= 1");
  if (!(c.eval.detect_threshold >= 0.0 && c.eval.detect_threshold <= 1.0))
    throw ConfigError("config: eval.detect_threshold must lie in [0,1]");
  if (c.eval.thresholds.low >= c.eval.thresholds.high)
    throw ConfigError("config: eval.theta_low must be below eval.theta_high");
  if (c.eval.thresholds.range <= 0.0) throw ConfigError("config: eval.theta_range must be > 0");
  if (c.distill.guidance < 1.0) throw ConfigError("config: distill.guidance must be >= 1");
  if (c.distill_t_batch < 1) throw ConfigError("config: distill.t_batch must be >= 1");
  if (c.distill_probes < 0) throw ConfigError("config: distill.probes must be >= 0");

  // separability precheck: the world constructor rejects concept draws whose
  // templates are not pairwise separable
  make_concepts(c.model, c.world, Rng(c.world.seed));
}

// Seed precedence: explicit CLI flag, then the PROBE_SEED environment
// variable, then whatever the config file says.
inline void apply_seed_overrides(ExperimentConfig& c, bool flag_given, std::uint64_t flag_seed) {
  if (flag_given) {
    c.seed = flag_seed;
  } else if (const char* env = std::getenv("PROBE_SEED")) {
    try {
      c.seed = std::stoull(env);
    } catch (...) {
      throw ConfigError(std::string("PROBE_SEED is not a valid integer: ") + env);
    }
  }
  c.apply_seed();
}

}  // namespace probe
