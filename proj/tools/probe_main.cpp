// Command-line driver for the pseudo-token probing pipeline.
//
// Stages write artifacts under --out and later stages reload them with
// digest checks, so any subcommand can be rerun in isolation. All stages are
// deterministic in the configured seed; rerunning a stage rewrites its
// artifacts byte for byte.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "probe/pipeline.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out = "out";
  std::uint64_t seed = 0;
  bool seed_given = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "experiment config JSON (defaults used if omitted)");
  cmd->add_option("--out", o.out, "artifact output directory")->capture_default_str();
  cmd->add_option("--seed", o.seed, "global seed override")
      ->each([&o](const std::string&) { o.seed_given = true; });
}

probe::ExperimentConfig load(const CommonOpts& o) {
  probe::ExperimentConfig cfg;
  if (!o.config_path.empty()) cfg = probe::load_config(o.config_path);
  probe::apply_seed_overrides(cfg, o.seed_given, o.seed);
  probe::validate_config(cfg);
  return cfg;
}

void echo_config(const probe::ExperimentConfig& cfg, const probe::Paths& p) {
  probe::save_config(cfg, p.config());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale probing of concept-erased toy video diffusion models"};
  app.require_subcommand(1);

  CommonOpts o;
  std::string method = "neg_prompt";
  std::string from = "neg_prompt", to = "weight_unlearn";
  double lambda_override = -1.0;
  bool lambda_given = false;

  auto* c_world = app.add_subcommand("world-gen", "synthesize the concept world and classifier");
  add_common(c_world, o);
  auto* c_train = app.add_subcommand("train-base", "train the base denoiser and reference set");
  add_common(c_train, o);
  auto* c_erase = app.add_subcommand("erase", "apply one erasure method to the base model");
  add_common(c_erase, o);
  c_erase->add_option("--method", method, "none|neg_prompt|activation_steer|weight_unlearn")
      ->capture_default_str();
  auto* c_probe = app.add_subcommand("probe", "optimize a pseudo-token against an erased model");
  add_common(c_probe, o);
  c_probe->add_option("--method", method, "erasure method to probe")->capture_default_str();
  c_probe->add_option("--lambda", lambda_override, "alignment loss weight override")
      ->each([&lambda_given](const std::string&) { lambda_given = true; });
  auto* c_eval = app.add_subcommand("eval", "three-point evaluation of a probed erasure");
  add_common(c_eval, o);
  c_eval->add_option("--method", method, "erasure method to evaluate")->capture_default_str();
  auto* c_transfer = app.add_subcommand("transfer", "evaluate a token on a different erasure");
  add_common(c_transfer, o);
  c_transfer->add_option("--from", from, "method the token was optimized against")
      ->capture_default_str();
  c_transfer->add_option("--to", to, "method to evaluate the token on")->capture_default_str();
  auto* c_distill = app.add_subcommand("distill", "distill a guided student and measure "
                                                  "probe-loss gradient alignment");
  add_common(c_distill, o);
  auto* c_sweep = app.add_subcommand("sweep", "probe hyperparameter sensitivity sweep");
  add_common(c_sweep, o);
  auto* c_report = app.add_subcommand("report", "collate per-method reports into one summary");
  add_common(c_report, o);

  CLI11_PARSE(app, argc, argv);

  try {
    probe::ExperimentConfig cfg = load(o);
    if (lambda_given) {
      cfg.probe.lambda = lambda_override;
      cfg.probe.validate();
    }
    probe::Paths p{o.out};
    echo_config(cfg, p);

    if (c_world->parsed()) {
      probe::run_world_gen(cfg, p);
      std::cout << "world-gen: wrote " << p.world_train().string() << "\n";
    } else if (c_train->parsed()) {
      probe::run_train_base(cfg, p);
      std::cout << "train-base: wrote " << p.base_model().string() << "\n";
    } else if (c_erase->parsed()) {
      probe::run_erase(cfg, p, method);
      std::cout << "erase: wrote " << p.erased(method).string() << "\n";
    } else if (c_probe->parsed()) {
      probe::ProbeResult res = probe::run_probe(cfg, p, method);
      const auto& last = res.trace.back();
      std::cout << "probe: method=" << method << " final l_total=" << probe::fmt_f(last.l_total, 9)
                << " (l_rec=" << probe::fmt_f(last.l_rec, 9)
                << ", l_align=" << probe::fmt_f(last.l_align, 9) << ")\n";
    } else if (c_eval->parsed()) {
      probe::ThreePointReport rep = probe::run_eval(cfg, p, method);
      std::cout << "eval: method=" << method
                << " potential_detection=" << probe::fmt_f(rep.potential_detection, 6)
                << " erased_rate=" << probe::fmt_f(rep.erased.detection_rate, 6)
                << " probed_rate=" << probe::fmt_f(rep.probed.detection_rate, 6) << "\n";
    } else if (c_transfer->parsed()) {
      probe::ThreePointReport rep = probe::run_transfer(cfg, p, from, to);
      std::cout << "transfer: " << from << " -> " << to
                << " potential_detection=" << probe::fmt_f(rep.potential_detection, 6) << "\n";
    } else if (c_distill->parsed()) {
      probe::run_distill(cfg, p);
      std::cout << "distill: wrote " << (p.distill_dir() / "summary.txt").string() << "\n";
    } else if (c_sweep->parsed()) {
      probe::run_sweep(cfg, p);
      std::cout << "sweep: wrote " << p.sweep_csv().string() << "\n";
    } else if (c_report->parsed()) {
      probe::run_report(cfg, p);
      std::cout << "report: wrote " << p.summary().string() << "\n";
    }
    return 0;
  } catch (const probe::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const probe::ArtifactError& e) {
    std::cerr << "artifact error: " << e.what() << "\n";
    return 3;
  } catch (const probe::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
