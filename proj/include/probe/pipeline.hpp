#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "probe/config.hpp"
#include "probe/report.hpp"

#ifndef PROBE_BUILD_ID
#define PROBE_BUILD_ID "unknown"
#endif

namespace probe {

namespace fs = std::filesystem;

inline std::string build_id() { return PROBE_BUILD_ID; }

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::uint64_t config_digest_u64(const ExperimentConfig& c) {
  Digest d;
  d.str(config_to_json(c).dump());
  return d.h;
}

// Artifacts are bound to the slice of the config that could have influenced
// them, so tweaking e.g. probe.lambda does not invalidate the trained base
// model. Scopes nest: world < base < erased < probe < full.
enum class CfgScope { world, base, erased, probe, full };

inline std::uint64_t scoped_digest(const ExperimentConfig& c, CfgScope s) {
  const nlohmann::json all = config_to_json(c);
  nlohmann::json sub;
  auto starts = [](const std::string& k, const char* p) { return k.rfind(p, 0) == 0; };
  for (const auto& [k, v] : all.items()) {
    bool keep = k == "seed" || starts(k, "world.") || starts(k, "model.");
    if (s >= CfgScope::base)
      keep = keep || starts(k, "train.") || starts(k, "refs.") || starts(k, "sampler.") ||
             k == "erase.target_concept";
    if (s >= CfgScope::erased) keep = keep || starts(k, "erase.");
    if (s >= CfgScope::probe) keep = keep || starts(k, "probe.");
    if (s == CfgScope::full) keep = true;
    if (keep) sub[k] = v;
  }
  Digest d;
  d.str(sub.dump());
  return d.h;
}

// Fixed artifact layout under the output root. Every stage writes here and
// reads its dependencies from here.
struct Paths {
  fs::path root;
  explicit Paths(fs::path r) : root(std::move(r)) {}

  fs::path config() const { return root / "config.json"; }
  fs::path world_train() const { return root / "world" / "train.prbl"; }
  fs::path world_holdout() const { return root / "world" / "holdout.prbl"; }
  fs::path world_manifest() const { return root / "world" / "manifest.jsonl"; }
  fs::path embedder() const { return root / "world" / "embedder.prbl"; }
  fs::path base_model() const { return root / "models" / "base.prbl"; }
  fs::path classifier() const { return root / "models" / "classifier.prbl"; }
  fs::path refs() const { return root / "refs" / "refs.prbl"; }
  fs::path erased(const std::string& m) const { return root / "erased" / (m + ".prbl"); }
  fs::path probe_token(const std::string& m) const { return root / "probe" / m / "token.prbl"; }
  fs::path probe_trace(const std::string& m) const { return root / "probe" / m / "trace.csv"; }
  fs::path eval_dir(const std::string& m) const { return root / "eval" / m; }
  fs::path distill_dir() const { return root / "distill"; }
  fs::path summary() const { return root / "report.txt"; }
  fs::path sweep_csv() const { return root / "sweep" / "summary.csv"; }
};

inline void require_artifact(const fs::path& p, const std::string& producer) {
  if (!fs::exists(p))
    throw ArtifactError("missing artifact " + p.string() + "; run '" + producer + "' first");
}

inline void check_config_digest(const Checkpoint& ck, std::uint64_t expected, const fs::path& p) {
  if (ck.config_digest != expected)
    throw ArtifactError(p.string() + ": config digest mismatch, expected " + hex64(expected) +
                        ", artifact was produced under " + hex64(ck.config_digest));
}

// deterministic sub-streams of the global seed, one per component
inline Rng stream(const ExperimentConfig& c, std::uint64_t which) {
  return Rng(c.seed).split(which);
}
constexpr std::uint64_t kStreamEncoder = 101;
constexpr std::uint64_t kStreamModel = 102;
constexpr std::uint64_t kStreamCodec = 103;
constexpr std::uint64_t kStreamEmbedder = 104;
constexpr std::uint64_t kStreamAlignToken = 105;

inline TextEncoder build_encoder(const ExperimentConfig& c) {
  return TextEncoder::init(make_vocabulary(c.world.num_concepts), c.model.embed_dim,
                           c.model.cond_dim, stream(c, kStreamEncoder));
}

inline LatentCodec build_codec(const ExperimentConfig& c) {
  if (c.ref_codec == "identity") return LatentCodec::identity();
  return LatentCodec::fixed_linear(c.model.frame_dim(), stream(c, kStreamCodec));
}

inline FrameEmbedder build_embedder(const ExperimentConfig& c) {
  return FrameEmbedder::init(c.model.cond_dim, c.model.frame_dim(), stream(c, kStreamEmbedder));
}

// -------- dataset containers --------

inline void save_dataset(const Dataset& ds, std::uint64_t cfg_digest, const fs::path& path) {
  Checkpoint ck;
  ck.config_digest = cfg_digest;
  nlohmann::json meta;
  meta["kind"] = "dataset";
  meta["split"] = to_string(ds.split);
  nlohmann::json items = nlohmann::json::array();
  Digest d;
  for (const auto& item : ds.items) {
    items.push_back({{"id", item.id},
                     {"concept", item.concept_id},
                     {"prompt", item.prompt},
                     {"generator_digest", item.generator_digest}});
    d.u64(item.id);
    d.tensor(item.latent);
  }
  meta["items"] = std::move(items);
  ck.metadata = meta.dump();
  ck.weight_digest = d.h;
  char name[32];
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    std::snprintf(name, sizeof(name), "item_%06zu", i);
    ck.tensors.emplace(name, ds.items[i].latent);
  }
  save_checkpoint(ck, path);
}

inline Dataset load_dataset(const fs::path& path, std::uint64_t cfg_digest) {
  Checkpoint ck = load_checkpoint(path);
  check_config_digest(ck, cfg_digest, path);
  nlohmann::json meta = nlohmann::json::parse(ck.metadata);
  if (meta.value("kind", "") != "dataset")
    throw ArtifactError(path.string() + " does not hold a dataset");
  Dataset ds;
  const std::string split = meta.at("split").get<std::string>();
  ds.split = split == "train" ? Split::train : split == "reference" ? Split::reference : Split::eval;
  char name[32];
  std::size_t i = 0;
  Digest d;
  for (const auto& jm : meta.at("items")) {
    std::snprintf(name, sizeof(name), "item_%06zu", i++);
    auto it = ck.tensors.find(name);
    if (it == ck.tensors.end()) throw ArtifactError(path.string() + ": missing tensor " + name);
    DatasetItem item;
    item.id = jm.at("id").get<std::uint64_t>();
    item.concept_id = jm.at("concept").get<int>();
    item.prompt = jm.at("prompt").get<std::vector<TokenId>>();
    item.generator_digest = jm.at("generator_digest").get<std::string>();
    item.latent = it->second;
    d.u64(item.id);
    d.tensor(item.latent);
    ds.items.push_back(std::move(item));
  }
  if (d.h != ck.weight_digest)
    throw ArtifactError(path.string() + ": dataset digest mismatch, expected " +
                        hex64(ck.weight_digest) + ", recomputed " + hex64(d.h));
  return ds;
}

// -------- base model / classifier / embedder containers --------

struct BaseModel {
  DenoiserModel model;
  TextEncoder enc;
};

inline void save_base(const BaseModel& bm, std::uint64_t cfg_digest, const fs::path& path) {
  Checkpoint ck;
  ck.config_digest = cfg_digest;
  ck.frozen = bm.model.frozen;
  nlohmann::json meta;
  meta["kind"] = "base_model";
  meta["provenance"] = bm.model.provenance;
  meta["weight_digest"] = bm.model.weight_digest();
  ck.metadata = meta.dump();
  bm.model.w.for_each(
      [&](const char* name, const Tensor& t) { ck.tensors.emplace(std::string("model.") + name, t); });
  ck.tensors.emplace("enc.embeddings", bm.enc.embeddings);
  ck.tensors.emplace("enc.mix_w", bm.enc.mix_w);
  ck.tensors.emplace("enc.mix_b", bm.enc.mix_b);
  Digest d;
  bm.model.w.for_each([&](const char* name, const Tensor& t) {
    d.str(name);
    d.tensor(t);
  });
  ck.weight_digest = d.h;
  save_checkpoint(ck, path);
}

inline BaseModel load_base(const ExperimentConfig& c, const fs::path& path) {
  Checkpoint ck = load_checkpoint(path);
  check_config_digest(ck, scoped_digest(c, CfgScope::base), path);
  nlohmann::json meta = nlohmann::json::parse(ck.metadata);
  if (meta.value("kind", "") != "base_model")
    throw ArtifactError(path.string() + " does not hold a base model");

  BaseModel bm;
  bm.model.cfg = c.model;
  bm.model.sched = c.model.schedule();
  bm.model.w = DenoiserWeights::zeros_like(c.model);
  bm.model.frozen = ck.frozen;
  bm.model.provenance = meta.value("provenance", "base");
  bm.model.w.for_each([&](const char* name, Tensor& t) {
    auto it = ck.tensors.find(std::string("model.") + name);
    if (it == ck.tensors.end())
      throw ArtifactError(path.string() + ": missing tensor model." + std::string(name));
    if (it->second.shape != t.shape)
      throw ArtifactError(path.string() + ": tensor model." + std::string(name) +
                          " has wrong shape for this config");
    t = it->second;
  });
  Digest d;
  bm.model.w.for_each([&](const char* name, const Tensor& t) {
    d.str(name);
    d.tensor(t);
  });
  if (d.h != ck.weight_digest)
    throw ArtifactError(path.string() + ": weight digest mismatch, expected " +
                        hex64(ck.weight_digest) + ", recomputed " + hex64(d.h));

  bm.enc.vocab = make_vocabulary(c.world.num_concepts);
  for (const char* n : {"enc.embeddings", "enc.mix_w", "enc.mix_b"})
    if (!ck.tensors.count(n)) throw ArtifactError(path.string() + ": missing tensor " + n);
  bm.enc.embeddings = ck.tensors.at("enc.embeddings");
  bm.enc.mix_w = ck.tensors.at("enc.mix_w");
  bm.enc.mix_b = ck.tensors.at("enc.mix_b");
  if (bm.enc.embeddings.rows() != bm.enc.vocab.size())
    throw ArtifactError(path.string() + ": encoder table does not match the vocabulary size");
  return bm;
}

inline void save_classifier(const FrameClassifier& clf, std::uint64_t cfg_digest,
                            const fs::path& path) {
  Checkpoint ck;
  ck.config_digest = cfg_digest;
  ck.frozen = true;
  nlohmann::json meta;
  meta["kind"] = "frame_classifier";
  meta["trained_on_digest"] = clf.trained_on_digest;
  ck.metadata = meta.dump();
  ck.tensors.emplace("w", clf.w);
  ck.tensors.emplace("b", clf.b);
  Digest d;
  d.tensor(clf.w);
  d.tensor(clf.b);
  ck.weight_digest = d.h;
  save_checkpoint(ck, path);
}

inline FrameClassifier load_classifier(const ExperimentConfig& c, const fs::path& path) {
  Checkpoint ck = load_checkpoint(path);
  check_config_digest(ck, scoped_digest(c, CfgScope::world), path);
  nlohmann::json meta = nlohmann::json::parse(ck.metadata);
  if (meta.value("kind", "") != "frame_classifier")
    throw ArtifactError(path.string() + " does not hold a frame classifier");
  FrameClassifier clf;
  clf.w = ck.tensors.at("w");
  clf.b = ck.tensors.at("b");
  clf.trained_on_digest = meta.value("trained_on_digest", "");
  Digest d;
  d.tensor(clf.w);
  d.tensor(clf.b);
  if (d.h != ck.weight_digest)
    throw ArtifactError(path.string() + ": classifier digest mismatch, expected " +
                        hex64(ck.weight_digest) + ", recomputed " + hex64(d.h));
  return clf;
}

inline void save_probe_result(const ProbeResult& res, std::uint64_t cfg_digest,
                              const fs::path& path) {
  Checkpoint ck;
  ck.config_digest = cfg_digest;
  ck.frozen = true;
  nlohmann::json meta;
  meta["kind"] = "pseudo_token";
  meta["init"] = res.token.init_strategy;
  meta["model_digest_before"] = res.model_digest_before;
  meta["model_digest_after"] = res.model_digest_after;
  meta["lambda"] = res.cfg.lambda;
  meta["tokens"] = res.cfg.tokens;
  meta["steps"] = res.cfg.max_steps;
  if (!res.trace.empty()) {
    meta["final_l_rec"] = res.trace.back().l_rec;
    meta["final_l_align"] = res.trace.back().l_align;
    meta["final_l_total"] = res.trace.back().l_total;
  }
  ck.metadata = meta.dump();
  ck.tensors.emplace("rows", res.token.rows);
  Digest d;
  d.tensor(res.token.rows);
  ck.weight_digest = d.h;
  save_checkpoint(ck, path);
}

inline ProbeResult load_probe_result(const ExperimentConfig& c, const fs::path& path) {
  Checkpoint ck = load_checkpoint(path);
  check_config_digest(ck, scoped_digest(c, CfgScope::probe), path);
  nlohmann::json meta = nlohmann::json::parse(ck.metadata);
  if (meta.value("kind", "") != "pseudo_token")
    throw ArtifactError(path.string() + " does not hold a pseudo-token");
  ProbeResult res;
  res.token.rows = ck.tensors.at("rows");
  res.token.init_strategy = meta.value("init", "random");
  res.model_digest_before = meta.value("model_digest_before", "");
  res.model_digest_after = meta.value("model_digest_after", "");
  res.cfg.lambda = meta.value("lambda", 1.0);
  res.cfg.tokens = meta.value("tokens", static_cast<int>(res.token.rows.rows()));
  Digest d;
  d.tensor(res.token.rows);
  if (d.h != ck.weight_digest)
    throw ArtifactError(path.string() + ": pseudo-token digest mismatch, expected " +
                        hex64(ck.weight_digest) + ", recomputed " + hex64(d.h));
  return res;
}

// -------- pipeline stages --------

// Synthesizes the concept world, trains the frame classifier on the train
// split, and freezes the embedder. Fails hard if the classifier cannot
// separate the concepts on held-out data.
inline void run_world_gen(const ExperimentConfig& c, const Paths& p) {
  const std::uint64_t cd = scoped_digest(c, CfgScope::world);
  const Vocabulary vocab = make_vocabulary(c.world.num_concepts);
  const auto concepts = make_concepts(c.model, c.world, Rng(c.world.seed));

  Rng rng(c.world.seed);
  Dataset train = make_split(concepts, c.model, vocab, c.world.train_per_concept, Split::train,
                             rng.split(1));
  Dataset holdout = make_split(concepts, c.model, vocab, c.holdout_per_concept, Split::eval,
                               rng.split(2));
  save_dataset(train, cd, p.world_train());
  save_dataset(holdout, cd, p.world_holdout());

  std::string manifest;
  auto lines = [&](const Dataset& ds, const std::string& file) {
    for (const auto& item : ds.items) {
      nlohmann::json j = {{"id", item.id},
                          {"split", to_string(ds.split)},
                          {"concept", item.concept_id},
                          {"latent", file},
                          {"generator_digest", item.generator_digest}};
      manifest += j.dump() + "\n";
    }
  };
  lines(train, "world/train.prbl");
  lines(holdout, "world/holdout.prbl");
  write_text(p.world_manifest(), manifest);

  FrameClassifier clf = train_classifier(train, c.model, c.world.num_concepts);
  const double acc = classifier_accuracy(clf, holdout, c.model);
  if (acc < 0.95)
    throw NumericError("world-gen: classifier holdout accuracy " + fmt_f(acc, 4) +
                       " is below the 0.95 separability bar; pick another seed or lower noise");
  save_classifier(clf, cd, p.classifier());

  const FrameEmbedder emb = build_embedder(c);
  Checkpoint ck;
  ck.config_digest = cd;
  ck.frozen = true;
  ck.metadata = nlohmann::json{{"kind", "frame_embedder"}}.dump();
  ck.tensors.emplace("proj", emb.proj);
  Digest d;
  d.tensor(emb.proj);
  ck.weight_digest = d.h;
  save_checkpoint(ck, p.embedder());
}

inline FrameEmbedder load_embedder(const ExperimentConfig& c, const fs::path& path) {
  Checkpoint ck = load_checkpoint(path);
  check_config_digest(ck, scoped_digest(c, CfgScope::world), path);
  FrameEmbedder emb = build_embedder(c);
  emb.proj = ck.tensors.at("proj");
  return emb;
}

// Trains the base denoiser on the train split and samples the reference set
// from it while it is still provably unerased.
inline void run_train_base(const ExperimentConfig& c, const Paths& p) {
  const std::uint64_t cd = scoped_digest(c, CfgScope::base);
  require_artifact(p.world_train(), "world-gen");
  Dataset train = load_dataset(p.world_train(), scoped_digest(c, CfgScope::world));

  BaseModel bm;
  bm.enc = build_encoder(c);
  bm.model = DenoiserModel::init(c.model, stream(c, kStreamModel));
  train_denoiser(bm.model, bm.enc, train, c.train);
  save_base(bm, cd, p.base_model());

  const LatentCodec codec = build_codec(c);
  Dataset refs = build_reference_set(bm.model, bm.enc, c.erase.target_concept, c.ref_count,
                                     c.sampler, codec);
  save_dataset(refs, cd, p.refs());
}

inline void run_erase(const ExperimentConfig& c, const Paths& p, const std::string& method) {
  const std::uint64_t cd = scoped_digest(c, CfgScope::erased);
  require_artifact(p.base_model(), "train-base");
  BaseModel bm = load_base(c, p.base_model());

  ErasureConfig ecfg = c.erase;
  ecfg.method = erasure_method_from(method);
  ErasedModel em;
  switch (ecfg.method) {
    case ErasureMethod::none: em = erase_none(bm.model, bm.enc, ecfg.target_concept); break;
    case ErasureMethod::neg_prompt: em = erase_neg_prompt(bm.model, bm.enc, ecfg); break;
    case ErasureMethod::activation_steer:
      em = erase_activation_steer(bm.model, bm.enc, ecfg);
      break;
    case ErasureMethod::weight_unlearn: {
      require_artifact(p.world_train(), "world-gen");
      Dataset train = load_dataset(p.world_train(), scoped_digest(c, CfgScope::world));
      em = erase_weight_unlearn(bm.model, bm.enc, ecfg, train);
      break;
    }
  }
  Checkpoint probe_free;  // save_erased owns the format; stamp the config afterwards
  save_erased(em, p.erased(method));
  probe_free = load_checkpoint(p.erased(method));
  probe_free.config_digest = cd;
  save_checkpoint(probe_free, p.erased(method));
}

inline ErasedModel load_erased_checked(const ExperimentConfig& c, const fs::path& path) {
  Checkpoint ck = load_checkpoint(path);
  check_config_digest(ck, scoped_digest(c, CfgScope::erased), path);
  return load_erased(path);
}

inline ProbeResult run_probe(const ExperimentConfig& c, const Paths& p, const std::string& method) {
  const std::uint64_t cd = scoped_digest(c, CfgScope::probe);
  require_artifact(p.erased(method), "erase");
  require_artifact(p.refs(), "train-base");
  ErasedModel em = load_erased_checked(c, p.erased(method));
  Dataset refs = load_dataset(p.refs(), scoped_digest(c, CfgScope::base));

  ProbeConfig pcfg = c.probe;
  pcfg.target_concept = em.cfg.target_concept;
  ProbeResult res = probe_optimize(em, refs, pcfg, build_codec(c));
  save_probe_result(res, cd, p.probe_token(method));
  write_text(p.probe_trace(method), trace_csv(res));
  return res;
}

inline ThreePointReport run_eval(const ExperimentConfig& c, const Paths& p,
                                 const std::string& method) {
  const std::uint64_t cd = config_digest_u64(c);
  require_artifact(p.base_model(), "train-base");
  require_artifact(p.erased(method), "erase");
  require_artifact(p.probe_token(method), "probe");
  require_artifact(p.classifier(), "world-gen");
  require_artifact(p.embedder(), "world-gen");

  BaseModel bm = load_base(c, p.base_model());
  ErasedModel original = erase_none(bm.model, bm.enc, c.erase.target_concept);
  ErasedModel erased = load_erased_checked(c, p.erased(method));
  ProbeResult pr = load_probe_result(c, p.probe_token(method));
  FrameClassifier clf = load_classifier(c, p.classifier());
  FrameEmbedder emb = load_embedder(c, p.embedder());

  ThreePointReport rep = evaluate_three_point(original, erased, pr, clf, emb, c.eval);
  const fs::path dir = p.eval_dir(method);
  write_text(dir / "report.txt", eval_report_text(rep, hex64(cd), build_id()));
  write_text(dir / "curves.csv", curves_csv(rep, c.eval.mode));
  write_text(dir / "curves.svg", curves_svg(rep));
  return rep;
}

inline ThreePointReport run_transfer(const ExperimentConfig& c, const Paths& p,
                                     const std::string& from, const std::string& to) {
  const std::uint64_t cd = config_digest_u64(c);
  require_artifact(p.base_model(), "train-base");
  require_artifact(p.erased(to), "erase");
  require_artifact(p.probe_token(from), "probe");

  BaseModel bm = load_base(c, p.base_model());
  ErasedModel original = erase_none(bm.model, bm.enc, c.erase.target_concept);
  ErasedModel erased_to = load_erased_checked(c, p.erased(to));
  ProbeResult pr = load_probe_result(c, p.probe_token(from));
  FrameClassifier clf = load_classifier(c, p.classifier());
  FrameEmbedder emb = load_embedder(c, p.embedder());

  ThreePointReport rep = transfer_probe(original, erased_to, pr, clf, emb, c.eval);
  const fs::path dir = p.eval_dir("transfer_" + from + "_to_" + to);
  write_text(dir / "report.txt", eval_report_text(rep, hex64(cd), build_id()));
  write_text(dir / "curves.csv", curves_csv(rep, c.eval.mode));
  write_text(dir / "curves.svg", curves_svg(rep));
  return rep;
}

// Distills a guidance-baked student and measures the gradient disagreement
// between the two probe losses on the base vs the distilled model.
inline void run_distill(const ExperimentConfig& c, const Paths& p) {
  const std::uint64_t cd = scoped_digest(c, CfgScope::base);
  require_artifact(p.base_model(), "train-base");
  require_artifact(p.world_train(), "world-gen");
  require_artifact(p.refs(), "train-base");
  BaseModel bm = load_base(c, p.base_model());
  Dataset train = load_dataset(p.world_train(), scoped_digest(c, CfgScope::world));
  Dataset refs = load_dataset(p.refs(), cd);

  // refs are stored through the codec; alignment consumes raw latents
  const LatentCodec codec = build_codec(c);
  for (auto& item : refs.items) item.latent = codec.decode(item.latent);

  DistilledModel dm = distill(bm.model, bm.enc, train, c.distill);
  BaseModel student{dm.student, bm.enc};
  save_base(student, cd, p.distill_dir() / "student.prbl");

  ErasedModel base_em = erase_none(bm.model, bm.enc, c.erase.target_concept);
  ErasedModel dist_em = distilled_as_erased(dm, bm.enc, c.erase.target_concept);
  PseudoToken v = init_pseudo(bm.enc, c.probe.init_strategy, c.erase.target_concept,
                              c.probe.tokens, stream(c, kStreamAlignToken));

  AlignmentMeasurement a_base = measure_gradient_alignment(
      base_em, v, refs, c.distill_probes, c.distill_t_batch, c.seed, "base");
  AlignmentMeasurement a_dist = measure_gradient_alignment(
      dist_em, v, refs, c.distill_probes, c.distill_t_batch, c.seed, "distilled");

  write_text(p.distill_dir() / "alignment_base.csv", alignment_csv(a_base));
  write_text(p.distill_dir() / "alignment_distilled.csv", alignment_csv(a_dist));
  write_text(p.distill_dir() / "summary.txt",
             alignment_summary_line(a_base) + alignment_summary_line(a_dist));
}

// Collates whatever per-method reports exist into one top-level summary.
inline void run_report(const ExperimentConfig& c, const Paths& p) {
  std::string out;
  out += "pseudo-token probing run summary\n";
  out += "config_digest " + hex64(config_digest_u64(c)) + "\n";
  out += "build " + build_id() + "\n\n";
  bool any = false;
  for (const char* m : {"none", "neg_prompt", "activation_steer", "weight_unlearn"}) {
    const fs::path rp = p.eval_dir(m) / "report.txt";
    if (!fs::exists(rp)) continue;
    any = true;
    std::ifstream is(rp, std::ios::binary);
    out += "==== " + std::string(m) + " ====\n";
    out += std::string(std::istreambuf_iterator<char>(is), {});
    out += "\n";
  }
  if (fs::exists(p.distill_dir() / "summary.txt")) {
    std::ifstream is(p.distill_dir() / "summary.txt", std::ios::binary);
    out += "==== distillation gradient alignment ====\n";
    out += std::string(std::istreambuf_iterator<char>(is), {});
    any = true;
  }
  if (!any) throw ArtifactError("report: no eval or distill artifacts found under " +
                                p.root.string() + "; run eval first");
  write_text(p.summary(), out);
}

// One-axis-at-a-time sensitivity sweep around the configured probe settings,
// always against the neg_prompt erasure.
inline void run_sweep(const ExperimentConfig& c, const Paths& p) {
  const std::uint64_t cd = config_digest_u64(c);
  require_artifact(p.base_model(), "train-base");
  require_artifact(p.erased("neg_prompt"), "erase");
  BaseModel bm = load_base(c, p.base_model());
  ErasedModel original = erase_none(bm.model, bm.enc, c.erase.target_concept);
  ErasedModel erased = load_erased_checked(c, p.erased("neg_prompt"));
  FrameClassifier clf = load_classifier(c, p.classifier());
  FrameEmbedder emb = load_embedder(c, p.embedder());
  const LatentCodec codec = build_codec(c);

  const int max_refs = 200;
  Dataset big_refs = build_reference_set(bm.model, bm.enc, c.erase.target_concept, max_refs,
                                         c.sampler, codec);
  auto take = [&](int n) {
    Dataset d;
    d.split = Split::reference;
    d.items.assign(big_refs.items.begin(), big_refs.items.begin() + n);
    return d;
  };

  std::string csv = "axis,value,final_l_total,potential_detection,potential_semantic\n";
  auto run_one = [&](const std::string& axis, const std::string& value, ProbeConfig pcfg,
                     const Dataset& refs) {
    pcfg.target_concept = c.erase.target_concept;
    ProbeResult res = probe_optimize(erased, refs, pcfg, codec);
    ThreePointReport rep = evaluate_three_point(original, erased, res, clf, emb, c.eval);
    const double lt = res.trace.empty() ? 0.0 : res.trace.back().l_total;
    csv += axis + "," + value + "," + fmt_f(lt, 9) + "," + fmt_f(rep.potential_detection, 6) +
           "," + fmt_f(rep.potential_semantic, 6) + "\n";
  };

  Dataset refs_default = take(std::min(max_refs, c.ref_count));
  for (double lam : {0.0, 0.1, 1.0, 10.0, 20.0}) {
    ProbeConfig pc = c.probe;
    pc.lambda = lam;
    run_one("lambda", fmt_f(lam, 1), pc, refs_default);
  }
  for (int m : {3, 5, 10}) {
    ProbeConfig pc = c.probe;
    pc.tokens = m;
    run_one("tokens", std::to_string(m), pc, refs_default);
  }
  for (int n : {10, 50, 100, 200}) {
    ProbeConfig pc = c.probe;
    run_one("ref_size", std::to_string(n), pc, take(n));
  }
  for (const char* init : {"concept_token", "mean_neutral", "random"}) {
    ProbeConfig pc = c.probe;
    pc.init_strategy = init;
    run_one("init", init, pc, refs_default);
  }
  (void)cd;
  write_text(p.sweep_csv(), csv);
}

}  // namespace probe
