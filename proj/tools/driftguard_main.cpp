// Command-line front end: flag parsing only, all behavior lives in the
// library so tests can drive it directly.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "driftguard/cli.hpp"

namespace dg = driftguard;

int main(int argc, char** argv) {
  CLI::App app{"drift-aware two-stage detection pipeline"};
  app.require_subcommand(1);
  app.set_config("--config");

  std::optional<std::uint64_t> seed;
  app.add_option("--seed", seed, "run seed (default 0, or DRIFTGUARD_SEED)")
      ->capture_default_str();

  // prepare
  auto* prepare = app.add_subcommand("prepare", "pair images with labels, split, cut crops");
  dg::PrepareOptions prep;
  std::string ratios_text = "0.8,0.1,0.1";
  prepare->add_option("--images", prep.images, "directory of .ppm images")->required();
  prepare->add_option("--labels", prep.labels, "directory of .txt annotations")->required();
  prepare->add_option("--out", prep.out, "output directory")->required();
  prepare->add_option("--ratios", ratios_text, "train,test,val split ratios");

  // augment
  auto* augment = app.add_subcommand("augment", "write drifted copies of the test split");
  dg::AugmentOptions aug;
  std::vector<std::string> drift_texts;
  augment->add_option("--manifest", aug.manifest, "manifest.json to extend")->required();
  augment->add_option("--drift", drift_texts,
                      "drift spec, e.g. kind=gaussian_noise,sigma=10 (repeatable)");

  // run
  auto* run = app.add_subcommand("run", "evaluate models over a manifest split");
  dg::RunOptions runo;
  std::string split_text = "test";
  std::string reset_text = "auto";
  bool single_vote = false;
  std::string profile_text;
  run->add_option("--manifest", runo.manifest, "manifest.json")->required();
  run->add_option("--split", split_text, "train, test, val or all");
  run->add_option("--threshold", runo.threshold, "detector confidence threshold");
  run->add_flag("--oracle", runo.models.oracle, "ground-truth models");
  run->add_option("--miss-rate", runo.models.miss_rate, "oracle: detection miss rate");
  run->add_option("--misclass-rate", runo.models.misclass_rate,
                  "oracle: wrong-class rate");
  run->add_option("--detector-replay", runo.models.detector_replay,
                  "detector predictions, JSON lines");
  run->add_option("--classifier-replay", runo.models.classifier_replay,
                  "classifier predictions, JSON lines");
  run->add_option("--profile", profile_text,
                  "emulator profile json, or `default`");
  run->add_option("--workers", runo.workers, "worker threads")
      ->check(CLI::PositiveNumber);
  run->add_option("--reset-policy", reset_text, "auto, manual or after:N");
  run->add_flag("--single-vote", single_vote,
                "vote only on the highest-confidence detection");
  run->add_option("--table", runo.table_file, "transition table override file");
  run->add_option("--out", runo.out, "output directory")->required();

  // simulate
  auto* simulate = app.add_subcommand("simulate", "emulator-only statistical run");
  dg::SimulateOptions sim;
  std::string sim_profile_text = "default";
  simulate->add_option("--profile", sim_profile_text,
                       "emulator profile json, or `default`");
  simulate->add_option("--count", sim.count, "number of synthetic frames")
      ->check(CLI::PositiveNumber);
  simulate->add_option("--threshold", sim.threshold, "detector confidence threshold");
  simulate->add_option("--workers", sim.workers, "worker threads")
      ->check(CLI::PositiveNumber);
  simulate->add_option("--out", sim.out, "output directory")->required();

  // report
  auto* report = app.add_subcommand("report", "re-render tables from a ledger");
  dg::ReportOptions rep;
  report->add_option("--ledger", rep.ledger, "ledger.csv")->required();
  report->add_option("--out", rep.out, "output directory");

  // audit
  auto* audit = app.add_subcommand("audit", "verify crops against their sources");
  dg::AuditOptions aud;
  audit->add_option("--index", aud.index, "crops index.csv")->required();
  audit->add_option("--root", aud.root, "directory manifest paths resolve against")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const std::uint64_t resolved = dg::resolve_seed(seed);
    if (prepare->parsed()) {
      prep.ratios = dg::parse_ratios(ratios_text);
      prep.seed = resolved;
      return dg::cmd_prepare(prep, std::cout, std::cerr);
    }
    if (augment->parsed()) {
      for (const auto& text : drift_texts) {
        aug.drifts.push_back(dg::parse_drift_spec(text));
      }
      aug.seed = resolved;
      return dg::cmd_augment(aug, std::cout, std::cerr);
    }
    if (run->parsed()) {
      runo.split = dg::parse_split_choice(split_text);
      runo.reset_policy = dg::parse_reset_policy(reset_text);
      runo.per_detection = !single_vote;
      runo.seed = resolved;
      if (!profile_text.empty()) runo.models.profile = profile_text;
      return dg::cmd_run(runo, std::cout, std::cerr);
    }
    if (simulate->parsed()) {
      sim.profile = sim_profile_text;
      sim.seed = seed ? seed : (std::getenv("DRIFTGUARD_SEED") ? std::optional(resolved)
                                                               : std::nullopt);
      return dg::cmd_simulate(sim, std::cout, std::cerr);
    }
    if (report->parsed()) return dg::cmd_report(rep, std::cout, std::cerr);
    if (audit->parsed()) return dg::cmd_audit(aud, std::cout, std::cerr);
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return dg::kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return dg::kExitInternal;
  }
  return dg::kExitInternal;
}
