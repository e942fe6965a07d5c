// Acceptance gate: one pass/fail line per criterion, nonzero exit if any
// criterion fails. Criteria 6-9 run the shipped default benchmark (seed 42)
// in process; criterion 10 shells out to the CLI binary twice and compares
// artifact bytes.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "probe/config.hpp"
#include "probe/finite_diff.hpp"
#include "probe/pipeline.hpp"

using namespace probe;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("criterion %2d %-28s %s  %s\n", id, name.c_str(), pass ? "PASS" : "FAIL",
              detail.c_str());
  if (!pass) ++g_failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---- small fixture for criteria 2-5 ----

ModelConfig tiny_model_config(ScheduleKind kind) {
  ModelConfig mc;
  mc.frames = 3;
  mc.height = 2;
  mc.width = 2;
  mc.channels = 1;
  mc.embed_dim = 5;
  mc.cond_dim = 4;
  mc.hidden = 6;
  mc.attn_dim = 3;
  mc.kind = kind;
  mc.num_steps = 10;
  return mc;
}

struct Tiny {
  ModelConfig mc;
  TextEncoder enc;
  DenoiserModel model;
};

Tiny make_tiny(ScheduleKind kind, std::uint64_t seed) {
  Tiny t;
  t.mc = tiny_model_config(kind);
  t.enc = TextEncoder::init(make_vocabulary(3), t.mc.embed_dim, t.mc.cond_dim, Rng(seed));
  t.model = DenoiserModel::init(t.mc, Rng(seed + 1));
  return t;
}

Dataset tiny_refs(const Tiny& t, int n, std::uint64_t seed) {
  Dataset ds;
  ds.split = Split::reference;
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    DatasetItem item;
    item.id = static_cast<std::uint64_t>(i);
    item.concept_id = 0;
    item.prompt = concept_prompt(t.enc.vocab, 0);
    item.latent = rng.split(static_cast<std::uint64_t>(i)).normal_tensor(t.mc.latent_shape());
    item.generator_digest = "synthetic";
    ds.items.push_back(std::move(item));
  }
  return ds;
}

std::vector<ProbeSample> tiny_batch(const Tiny& t, int n, std::uint64_t seed) {
  std::vector<ProbeSample> batch;
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    Rng r = rng.split(static_cast<std::uint64_t>(i));
    ProbeSample s;
    s.z0 = r.normal_tensor(t.mc.latent_shape());
    s.eps = r.normal_tensor(t.mc.latent_shape());
    s.t = t.mc.kind == ScheduleKind::v_prediction
              ? static_cast<double>(r.uniform_index(t.mc.num_steps))
              : r.uniform_open();
    batch.push_back(std::move(s));
  }
  return batch;
}

// ---- shared default benchmark for criteria 6-9 ----

struct Benchmark {
  ExperimentConfig cfg;
  std::vector<ConceptSpec> concepts;
  TextEncoder enc;
  DenoiserModel base;
  Dataset train, refs;
  FrameClassifier clf;
  FrameEmbedder emb;
  ErasedModel original, neg, steer, unlearn;
};

Benchmark build_benchmark() {
  Benchmark b;
  b.cfg = ExperimentConfig{};
  b.cfg.apply_seed();
  validate_config(b.cfg);
  const Vocabulary vocab = make_vocabulary(b.cfg.world.num_concepts);
  b.concepts = make_concepts(b.cfg.model, b.cfg.world, Rng(b.cfg.world.seed));
  Rng wrng(b.cfg.world.seed);
  b.train = make_split(b.concepts, b.cfg.model, vocab, b.cfg.world.train_per_concept,
                       Split::train, wrng.split(1));
  b.clf = train_classifier(b.train, b.cfg.model, b.cfg.world.num_concepts);
  b.emb = FrameEmbedder::init(b.cfg.model.cond_dim, b.cfg.model.frame_dim(),
                              Rng(b.cfg.seed).split(104));
  b.enc = TextEncoder::init(vocab, b.cfg.model.embed_dim, b.cfg.model.cond_dim,
                            Rng(b.cfg.seed).split(101));
  b.base = DenoiserModel::init(b.cfg.model, Rng(b.cfg.seed).split(102));
  train_denoiser(b.base, b.enc, b.train, b.cfg.train);
  b.refs = build_reference_set(b.base, b.enc, b.cfg.erase.target_concept, b.cfg.ref_count,
                               b.cfg.sampler);
  b.original = erase_none(b.base, b.enc, b.cfg.erase.target_concept);
  b.neg = erase_neg_prompt(b.base, b.enc, b.cfg.erase);
  b.steer = erase_activation_steer(b.base, b.enc, b.cfg.erase);
  b.unlearn = erase_weight_unlearn(b.base, b.enc, b.cfg.erase, b.train);
  return b;
}

double detection_rate(const Benchmark& b, const ErasedModel& em, int concept_id) {
  const Condition cond = encode_prompt(em.enc, concept_prompt(em.enc.vocab, concept_id));
  auto videos = eval_detail::sample_pool(em, cond, b.cfg.eval);
  return eval_detail::score_pool("x", videos, b.clf, b.emb, cond, concept_id, b.cfg.model,
                                 b.cfg.eval)
      .detection_rate;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) return "<missing:" + p.string() + ">";
  return std::string(std::istreambuf_iterator<char>(is), {});
}

}  // namespace

// ---- criteria ----

void criterion_1() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (ScheduleKind kind : {ScheduleKind::v_prediction, ScheduleKind::flow_matching}) {
    const NoiseSchedule sched =
        kind == ScheduleKind::v_prediction ? NoiseSchedule::cosine_v_prediction(50)
                                           : NoiseSchedule::flow(50);
    Rng rng(kind == ScheduleKind::v_prediction ? 11u : 12u);
    const Shape shape{2, 2, 2, 1};
    for (int i = 0; i < 1000; ++i) {
      Rng r = rng.split(static_cast<std::uint64_t>(i));
      Tensor x0 = r.normal_tensor(shape);
      Tensor eps = r.normal_tensor(shape);
      const double t = kind == ScheduleKind::v_prediction
                           ? static_cast<double>(r.uniform_index(sched.num_steps))
                           : r.uniform_open();
      Tensor xt = noise_forward(x0, eps, t, sched);
      Tensor v = true_velocity(x0, eps, t, sched);
      Tensor rec = recover_clean(xt, v, t, sched);
      for (std::size_t j = 0; j < rec.size(); ++j)
        worst = std::max(worst, std::abs(rec.data[j] - x0.data[j]));
    }
  }
  const double dt = seconds_since(t0);
  report(1, "round-trip identities", worst < 1e-9 && dt < 1.0,
         "max_abs_err=" + fmt_f(worst, 12) + " runtime=" + fmt_f(dt, 2) + "s (limits 1e-9, 1s)");
}

void criterion_2() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  int configs = 0;
  for (int c = 0; c < 20; ++c) {
    const ScheduleKind kind = c % 2 ? ScheduleKind::flow_matching : ScheduleKind::v_prediction;
    Tiny t = make_tiny(kind, 100 + static_cast<std::uint64_t>(c));
    ErasureConfig ecfg;
    ecfg.target_concept = 0;
    ecfg.gamma = 1.0 + 0.2 * c;
    ecfg.rho = 0.5;
    ErasedModel em = c % 3 == 0   ? erase_none(t.model, t.enc, 0)
                     : c % 3 == 1 ? erase_neg_prompt(t.model, t.enc, ecfg)
                                  : erase_activation_steer(t.model, t.enc, ecfg);
    PseudoToken v = init_pseudo(t.enc, "random", 0, 2, Rng(200 + c));
    const auto tokens = prompt_templates(t.enc.vocab, 2)[0];
    const auto batch = tiny_batch(t, 2, 300 + static_cast<std::uint64_t>(c));
    const double lambda = 0.7;

    auto eval_loss = [&](const Tensor& rows, int which) {
      PseudoToken vv = v;
      vv.rows = rows;
      const double lr = loss_rec(em, vv, batch, tokens).value;
      const double la = loss_align(em, vv, batch, tokens).value;
      return which == 0 ? lr : which == 1 ? la : lr + lambda * la;
    };

    LossGrad gr = loss_rec(em, v, batch, tokens);
    LossGrad ga = loss_align(em, v, batch, tokens);
    Tensor gt = gr.grad;
    axpy(gt, lambda, ga.grad);

    for (int which = 0; which < 3; ++which) {
      const Tensor* analytic = which == 0 ? &gr.grad : which == 1 ? &ga.grad : &gt;
      Tensor fd = finite_diff_grad([&](const Tensor& rows) { return eval_loss(rows, which); },
                                   v.rows, 1e-5);
      worst = std::max(worst, max_rel_error(*analytic, fd, 1e-6));
    }
    ++configs;
  }
  const double dt = seconds_since(t0);
  report(2, "probe-loss gradients vs FD", worst < 1e-4 && configs >= 20 && dt < 30.0,
         "configs=" + std::to_string(configs) + " max_rel_err=" + fmt_f(worst, 8) +
             " runtime=" + fmt_f(dt, 2) + "s (limits 1e-4, 30s)");
}

void criterion_3() {
  bool pass = true;
  std::string detail;
  for (int m = 0; m < 4; ++m) {
    Tiny t = make_tiny(ScheduleKind::v_prediction, 400 + static_cast<std::uint64_t>(m));
    ErasureConfig ecfg;
    ecfg.target_concept = 0;
    ecfg.unlearn_steps = 5;
    Dataset anchor = tiny_refs(t, 4, 401);
    anchor.split = Split::train;
    ErasedModel em = m == 0   ? erase_none(t.model, t.enc, 0)
                     : m == 1 ? erase_neg_prompt(t.model, t.enc, ecfg)
                     : m == 2 ? erase_activation_steer(t.model, t.enc, ecfg)
                              : erase_weight_unlearn(t.model, t.enc, ecfg, anchor);
    const std::string before = em.weight_digest();
    ProbeConfig pcfg;
    pcfg.tokens = 2;
    pcfg.max_steps = 8;
    ProbeResult res = probe_optimize(em, tiny_refs(t, 3, 402), pcfg);
    if (res.model_digest_before != before || res.model_digest_after != before ||
        em.weight_digest() != before) {
      pass = false;
      detail += " digest moved for method " + std::to_string(m) + ";";
    }
    bool rejected = false;
    try {
      Tensor xt = Rng(403).normal_tensor(t.mc.latent_shape());
      Tensor up(t.mc.latent_shape());
      denoise_backward(em.model, xt, em.cond_null, 0.0, up, true);
    } catch (const Error&) {
      rejected = true;
    }
    if (!rejected) {
      pass = false;
      detail += " weight-grad request not rejected for method " + std::to_string(m) + ";";
    }
  }
  report(3, "frozen-model contract", pass,
         pass ? "digests invariant, weight-grad requests rejected, all 4 methods" : detail);
}

void criterion_4() {
  Tiny t = make_tiny(ScheduleKind::flow_matching, 500);
  ErasedModel em = erase_none(t.model, t.enc, 0);
  ProbeConfig pcfg;
  pcfg.tokens = 2;
  pcfg.lambda = 0.7;
  pcfg.max_steps = 50;
  ProbeResult res = probe_optimize(em, tiny_refs(t, 4, 501), pcfg);
  double worst = 0.0;
  for (const auto& row : res.trace)
    worst = std::max(worst, std::abs(row.l_total - (row.l_rec + pcfg.lambda * row.l_align)));
  report(4, "total-loss additivity", worst < 1e-12 && !res.trace.empty(),
         "steps=" + std::to_string(res.trace.size()) + " max_abs_dev=" + fmt_f(worst, 15) +
             " (limit 1e-12)");
}

void criterion_5() {
  bool pass = true;
  std::string detail;
  Rng rng(600);
  for (int rep = 0; rep < 10; ++rep) {
    Rng r = rng.split(static_cast<std::uint64_t>(rep));
    const std::size_t K = 1 + r.uniform_index(32), T = 6 + r.uniform_index(27);
    std::vector<std::vector<FrameScore>> grid(K, std::vector<FrameScore>(T));
    for (std::size_t i = 0; i < K; ++i)
      for (std::size_t j = 0; j < T; ++j) {
        grid[i][j].frame = j;
        grid[i][j].score = 0.5 + 0.5 * std::tanh(r.normal());
      }
    ReactivationCurve c = reactivation_curve(grid);
    for (std::size_t j = 0; j < T; ++j) {
      double naive = 0.0;
      for (std::size_t i = 0; i < K; ++i) naive += grid[i][j].score;
      naive /= static_cast<double>(K);
      if (c.r[j] != naive) {
        pass = false;
        detail += " curve mismatch rep " + std::to_string(rep) + ";";
      }
    }
  }
  auto curve = [&](std::vector<double> v) {
    std::vector<std::vector<FrameScore>> g(1, std::vector<FrameScore>(v.size()));
    for (std::size_t j = 0; j < v.size(); ++j) g[0][j].score = v[j];
    return reactivation_curve(g).signature;
  };
  const Signature step = curve({0.05, 0.05, 0.05, 0.05, 0.5, 0.5, 0.5, 0.5});
  const Signature bump = curve({0.05, 0.05, 0.05, 0.5, 0.5, 0.08, 0.05, 0.05});
  const Signature ramp = curve({0.02, 0.08, 0.15, 0.24, 0.33, 0.42, 0.51, 0.6});
  if (step != Signature::delayed_onset) { pass = false; detail += " step misclassified;"; }
  if (bump != Signature::mid_resurgence) { pass = false; detail += " bump misclassified;"; }
  if (ramp != Signature::progressive) { pass = false; detail += " ramp misclassified;"; }
  report(5, "curve oracle + signatures", pass,
         pass ? "10 random grids exact; step/bump/ramp classified as "
                "delayed_onset/mid_resurgence/progressive"
              : detail);
}

void criterion_6(const Benchmark& b, double setup_seconds) {
  const auto t0 = Clock::now();
  const int target = b.cfg.erase.target_concept;
  const int anchor = target == 0 ? 1 : 0;
  const double base_target = detection_rate(b, b.original, target);
  const double base_anchor = detection_rate(b, b.original, anchor);
  const double r_neg = detection_rate(b, b.neg, target);
  const double r_steer = detection_rate(b, b.steer, target);
  const double r_unl = detection_rate(b, b.unlearn, target);
  const double a_unl = detection_rate(b, b.unlearn, anchor);
  const double dt = seconds_since(t0) + setup_seconds;

  const bool pass = base_target > 0.0 && r_neg <= 0.5 * base_target &&
                    r_steer <= 0.5 * base_target && r_unl <= 0.5 * base_target &&
                    a_unl >= 0.9 * base_anchor && dt < 300.0;
  report(6, "erasure efficacy", pass,
         "baseline=" + fmt_f(base_target, 3) + " neg=" + fmt_f(r_neg, 3) + " steer=" +
             fmt_f(r_steer, 3) + " unlearn=" + fmt_f(r_unl, 3) + " anchor " +
             fmt_f(a_unl, 3) + "/" + fmt_f(base_anchor, 3) + " runtime=" + fmt_f(dt, 1) +
             "s (limit 300s incl. setup)");
}

struct PotentialResults {
  double neg = 0.0, steer = 0.0, unlearn = 0.0;
  double neg_probed_rate = 0.0;
};

PotentialResults criterion_7(const Benchmark& b) {
  PotentialResults out;
  auto potential = [&](const ErasedModel& em) {
    ProbeResult res = probe_optimize(em, b.refs, b.cfg.probe);
    ThreePointReport rep = evaluate_three_point(b.original, em, res, b.clf, b.emb, b.cfg.eval);
    return rep;
  };
  ThreePointReport rn = potential(b.neg);
  ThreePointReport rs = potential(b.steer);
  ThreePointReport ru = potential(b.unlearn);
  out.neg = rn.potential_detection;
  out.steer = rs.potential_detection;
  out.unlearn = ru.potential_detection;
  out.neg_probed_rate = rn.probed.detection_rate;

  // golden-run regression pins for the shipped defaults at seed 42
  const double g_neg = 1.0, g_steer = 0.75, g_unlearn = 0.75;
  const bool pinned = std::abs(out.neg - g_neg) < 1e-9 && std::abs(out.steer - g_steer) < 1e-9 &&
                      std::abs(out.unlearn - g_unlearn) < 1e-9;
  const bool pass = out.neg > 0.0 && out.steer > 0.0 && out.neg >= out.unlearn && pinned;
  report(7, "reactivation direction", pass,
         "potential neg=" + fmt_f(out.neg, 3) + " steer=" + fmt_f(out.steer, 3) + " unlearn=" +
             fmt_f(out.unlearn, 3) + " (pins " + fmt_f(g_neg, 2) + "/" + fmt_f(g_steer, 2) +
             "/" + fmt_f(g_unlearn, 2) + ")");
  return out;
}

void criterion_8(const Benchmark& b, const PotentialResults& pot, const DistilledModel& dm) {
  ProbeConfig p0 = b.cfg.probe;
  p0.lambda = 0.0;
  ProbeResult res0 = probe_optimize(b.neg, b.refs, p0);
  ThreePointReport rep0 = evaluate_three_point(b.original, b.neg, res0, b.clf, b.emb, b.cfg.eval);
  const double base_r1 = pot.neg_probed_rate;  // lambda=1 run from criterion 7
  const double base_r0 = rep0.probed.detection_rate;

  // distilled student: guidance is partly baked in, so evaluate at a reduced
  // external scale where detection rates sit off both saturation rails
  EvalConfig ecfg = b.cfg.eval;
  ecfg.sampler.cfg_scale = 3.0;
  ErasedModel dist_orig = erase_none(dm.student, b.enc, b.cfg.erase.target_concept);
  ErasedModel dist_neg = erase_neg_prompt(dm.student, b.enc, b.cfg.erase);
  ProbeConfig p1 = b.cfg.probe;
  ProbeResult d1 = probe_optimize(dist_neg, b.refs, p1);
  ProbeResult d0 = probe_optimize(dist_neg, b.refs, p0);
  const double dist_r1 =
      evaluate_three_point(dist_orig, dist_neg, d1, b.clf, b.emb, ecfg).probed.detection_rate;
  const double dist_r0 =
      evaluate_three_point(dist_orig, dist_neg, d0, b.clf, b.emb, ecfg).probed.detection_rate;

  const bool pass = base_r1 >= base_r0 && dist_r0 > dist_r1;
  report(8, "lambda ablation direction", pass,
         "base probed rate l1=" + fmt_f(base_r1, 3) + " >= l0=" + fmt_f(base_r0, 3) +
             "; distilled l0=" + fmt_f(dist_r0, 3) + " > l1=" + fmt_f(dist_r1, 3));
}

void criterion_9(const Benchmark& b, const DistilledModel& dm) {
  PseudoToken v = init_pseudo(b.enc, b.cfg.probe.init_strategy, b.cfg.erase.target_concept,
                              b.cfg.probe.tokens, Rng(b.cfg.seed).split(105));
  ErasedModel dist_em = distilled_as_erased(dm, b.enc, b.cfg.erase.target_concept);

  AlignmentMeasurement single =
      measure_gradient_alignment(b.original, v, b.refs, 12, 1, b.cfg.seed, "base");
  double worst = 0.0;
  for (const auto& s : single.samples)
    if (!s.excluded) worst = std::max(worst, std::abs(s.cosine - 1.0));

  AlignmentMeasurement a_base =
      measure_gradient_alignment(b.original, v, b.refs, 16, 8, b.cfg.seed, "base");
  AlignmentMeasurement a_dist =
      measure_gradient_alignment(dist_em, v, b.refs, 16, 8, b.cfg.seed, "distilled");

  const bool pass = worst < 1e-9 && a_dist.mean_cosine < a_base.mean_cosine;
  report(9, "gradient alignment", pass,
         "single-t |cos-1| max=" + fmt_f(worst, 12) + "; mean cos t_batch=8 base=" +
             fmt_f(a_base.mean_cosine, 6) + " > distilled=" + fmt_f(a_dist.mean_cosine, 6));
}

void criterion_10() {
  const auto t0 = Clock::now();
  const fs::path root = fs::temp_directory_path() / "probe_acceptance_e2e";
  fs::remove_all(root);
  auto run_all = [&](const fs::path& out) {
    const std::string base = std::string(PROBE_CLI_PATH) + " ";
    const std::string tail = " --out " + out.string() + " >/dev/null 2>&1";
    std::vector<std::string> cmds = {"world-gen", "train-base",
                                     "erase --method neg_prompt",
                                     "erase --method activation_steer",
                                     "erase --method weight_unlearn",
                                     "probe --method neg_prompt",
                                     "probe --method activation_steer",
                                     "probe --method weight_unlearn",
                                     "eval --method neg_prompt",
                                     "eval --method activation_steer",
                                     "eval --method weight_unlearn",
                                     "distill", "report"};
    for (const auto& c : cmds) {
      const int rc = std::system((base + c + tail).c_str());
      if (!WIFEXITED(rc) || WEXITSTATUS(rc) != 0) return false;
    }
    return true;
  };
  const bool ok_a = run_all(root / "a");
  const bool ok_b = run_all(root / "b");

  bool identical = ok_a && ok_b;
  std::string first_diff;
  if (identical) {
    std::size_t compared = 0;
    for (const auto& entry : fs::recursive_directory_iterator(root / "a")) {
      if (!entry.is_regular_file()) continue;
      const fs::path rel = fs::relative(entry.path(), root / "a");
      if (read_bytes(entry.path()) != read_bytes(root / "b" / rel)) {
        identical = false;
        first_diff = rel.string();
        break;
      }
      ++compared;
    }
    if (identical && compared == 0) identical = false;
  }
  const double dt = seconds_since(t0);
  const bool pass = identical && dt < 900.0;
  report(10, "end-to-end determinism", pass,
         (identical ? "two full pipeline runs byte-identical"
                    : ok_a && ok_b ? "artifact differs: " + first_diff : "pipeline run failed") +
             ", runtime=" + fmt_f(dt, 1) + "s (limit 900s)");
}

int main() {
  std::printf("acceptance gate (build %s)\n", build_id().c_str());
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();

  const auto setup0 = Clock::now();
  Benchmark b = build_benchmark();
  const double setup_s = seconds_since(setup0);
  criterion_6(b, setup_s);
  PotentialResults pot = criterion_7(b);
  DistilledModel dm = distill(b.base, b.enc, b.train, b.cfg.distill);
  criterion_8(b, pot, dm);
  criterion_9(b, dm);
  criterion_10();

  if (g_failures > 0) {
    std::printf("acceptance: %d criterion(s) FAILED\n", g_failures);
    return 1;
  }
  std::printf("acceptance: all criteria passed\n");
  return 0;
}
