#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "driftguard/dataset.hpp"
#include "driftguard/drift.hpp"
#include "driftguard/pipeline.hpp"

namespace driftguard {

/// Exit code contract, stable for scripting.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitUsage = 2;

class CliError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Seed precedence: explicit flag, then the DRIFTGUARD_SEED environment
/// variable, then 0. A malformed environment value throws CliError.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& explicit_seed);

/// "a,b,c" -> ratios; throws CliError unless all parse and sum to 1.
SplitRatios parse_ratios(const std::string& text);

/// "kind=tilt,angle=15" style; exactly the parameter its kind needs.
DriftSpec parse_drift_spec(const std::string& text);

/// "auto", "manual" or "after:N".
ResetPolicy parse_reset_policy(const std::string& text);

/// "train", "test", "val" or "all" (empty optional).
std::optional<Split> parse_split_choice(const std::string& text);

struct PrepareOptions {
  std::filesystem::path images;
  std::filesystem::path labels;
  std::filesystem::path out;
  SplitRatios ratios{};
  std::uint64_t seed = 0;
};

/// Pairs *.ppm with *.txt by stem, validates every file, writes
/// out/manifest.json and the 64x64 crop set under out/crops, then audits
/// what it wrote. Nothing is written unless validation passes.
int cmd_prepare(const PrepareOptions& options, std::ostream& out,
                std::ostream& err);

struct AugmentOptions {
  std::filesystem::path manifest;
  std::vector<DriftSpec> drifts;
  std::uint64_t seed = 0;
};

/// Applies every drift spec to each standard test-split entry, writing
/// drifted images and rewritten labels next to the originals and recording
/// the per-file seed in the manifest. Reruns overwrite rather than
/// duplicate, so the command is idempotent.
int cmd_augment(const AugmentOptions& options, std::ostream& out,
                std::ostream& err);

/// Exactly one model source must be chosen.
struct ModelChoice {
  bool oracle = false;
  double miss_rate = 0.0;
  double misclass_rate = 0.0;
  std::optional<std::filesystem::path> detector_replay;
  std::optional<std::filesystem::path> classifier_replay;
  std::optional<std::filesystem::path> profile;
};

struct RunOptions {
  std::filesystem::path manifest;
  std::optional<Split> split = Split::test;
  ModelChoice models;
  double threshold = 0.25;
  std::uint64_t seed = 0;
  int workers = 1;
  ResetPolicy reset_policy{};
  bool per_detection = true;
  std::optional<std::filesystem::path> table_file;
  std::filesystem::path out;
};

/// Writes ledger.csv, ledger.json, report.txt and report.json under
/// options.out; replay runs additionally get detection.json with mAP@0.5
/// over the replayed boxes. Replay coverage is checked up front: any image
/// or crop without a record is listed and the run refuses to start.
int cmd_run(const RunOptions& options, std::ostream& out, std::ostream& err);

struct SimulateOptions {
  std::optional<std::filesystem::path> profile;  // default: built-in
  long count = 600;
  std::optional<std::uint64_t> seed;  // overrides the profile's seed
  double threshold = 0.25;
  int workers = 1;
  std::filesystem::path out;
};

/// Emulator-only run over `count` synthetic frames (no image I/O): truth
/// classes cycle round-robin, one object per frame. Same outputs as
/// cmd_run, plus the profile's calibration check table.
int cmd_simulate(const SimulateOptions& options, std::ostream& out,
                 std::ostream& err);

struct ReportOptions {
  std::filesystem::path ledger;  // ledger.csv
  std::optional<std::filesystem::path> out;
};

int cmd_report(const ReportOptions& options, std::ostream& out,
               std::ostream& err);

struct AuditOptions {
  std::filesystem::path index;
  std::filesystem::path root;
};

int cmd_audit(const AuditOptions& options, std::ostream& out,
              std::ostream& err);

}  // namespace driftguard
