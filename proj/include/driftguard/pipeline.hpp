#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "driftguard/automaton.hpp"
#include "driftguard/dataset.hpp"
#include "driftguard/models.hpp"

namespace driftguard {

enum class VerdictKind { accepted, safe_state, no_detection };
enum class SafeReason { sensor_failure, model_disagreement };

struct Verdict {
  VerdictKind kind = VerdictKind::no_detection;
  std::optional<ClassLabel> accepted_class;  // set iff kind == accepted
  std::optional<SafeReason> reason;          // set iff kind == safe_state

  bool operator==(const Verdict&) const = default;
};

std::string to_string(const Verdict& verdict);
std::optional<Verdict> verdict_from_string(std::string_view text);

/// One frame offered to the controller. `image` may be null even when
/// acquisition succeeded (emulated runs carry no pixels); `acquired` false
/// models a sensor failure before any model runs.
struct SensorFrame {
  bool acquired = true;
  const ImageBuffer* image = nullptr;
  ImageContext ctx;
};

/// Everything one frame produced: the full automaton walk, the verdict, the
/// voted model outputs and their per-stage latencies. `truth` is the class
/// of the annotation best overlapping the voted detection. `overhead_ms` is
/// measured wall time and deliberately excluded from serialized output.
struct CycleResult {
  std::string image_id;
  RunTrace trace;
  Verdict verdict;
  std::optional<Detection> detector_output;
  std::optional<ClassPrediction> classifier_output;
  std::optional<ClassLabel> truth;
  double detector_latency_ms = 0.0;
  double classifier_latency_ms = 0.0;
  double overhead_ms = 0.0;
  bool drift_alarm = false;
  /// Ledger bucket: a JointCategory name, "no_detection" or "sensor_failure".
  std::string category;
  std::optional<std::string> error;
};

struct ResetPolicy {
  enum class Mode {
    automatic,  // reset signal arrives immediately; batch runs never stall
    manual,     // no reset signal: the stream halts at the first safe state
    after_n,    // held in the safe state while the next n frames pass by
  };
  Mode mode = Mode::automatic;
  int n = 1;  // after_n only; >= 1

  bool operator==(const ResetPolicy&) const = default;
};

struct CycleConfig {
  double threshold = 0.25;
  /// One vote per detection (any disagreement wins) instead of voting only
  /// on the highest-confidence detection.
  bool per_detection = true;
  /// Null selects the default table. Must validate cleanly if provided.
  const TransitionTable* table = nullptr;
};

/// Runs the controller over one frame. The walk starts at S0 with the
/// acquisition bit; detections at or above the threshold are voted in list
/// order (their list index is the classifier's crop key); the trace ends at
/// the verdict state: the final S5 when every vote agrees, S4 on the first
/// disagreement or failure, S0 after the no-detection return. Model
/// exceptions never escape: the frame degrades to a sensor_failure verdict
/// with trace S0->S4 and the message captured in `error`.
CycleResult run_cycle(const SensorFrame& frame, const Detector& detector,
                      const Classifier& classifier, const CycleConfig& config);

double end_to_end_latency(const CycleResult& result);

/// Aggregate counters; field names are the on-disk contract.
struct LedgerCounters {
  long agree_correct = 0;
  long detector_only_correct = 0;
  long classifier_only_correct = 0;
  long both_wrong_agree = 0;
  long both_wrong_disagree = 0;
  long no_detection = 0;
  long sensor_failure = 0;

  long alarms() const {
    return detector_only_correct + classifier_only_correct + both_wrong_disagree;
  }
  long total() const {
    return agree_correct + detector_only_correct + classifier_only_correct +
           both_wrong_agree + both_wrong_disagree + no_detection + sensor_failure;
  }

  bool operator==(const LedgerCounters&) const = default;
};

struct LedgerRow {
  std::string image;
  std::optional<ClassLabel> truth;
  std::optional<ClassLabel> detector;
  std::optional<ClassLabel> classifier;
  bool agree = false;
  Verdict verdict;
  std::string category;
  double detector_ms = 0.0;
  double classifier_ms = 0.0;
  std::string trace;

  bool operator==(const LedgerRow&) const = default;
};

struct OutcomeLedger {
  std::vector<LedgerRow> rows;
  LedgerCounters counters;

  void add(const CycleResult& result);
  void add_row(const LedgerRow& row);
};

/// Recomputes counters from rows; must equal ledger.counters.
LedgerCounters fold_rows(const std::vector<LedgerRow>& rows);

class LedgerError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// CSV: one row per frame, header
/// image,truth,detector,classifier,agree,verdict,category,detector_ms,classifier_ms,trace
/// Latencies carry three decimals; identical runs produce identical bytes.
std::string ledger_rows_to_csv(const std::vector<LedgerRow>& rows);
std::vector<LedgerRow> ledger_rows_from_csv(std::string_view text);

/// JSON aggregate block with the counter names plus derived "alarms" and
/// the row count.
std::string ledger_counters_to_json(const LedgerCounters& counters, long rows);
LedgerCounters ledger_counters_from_json(std::string_view text);

void save_ledger(const OutcomeLedger& ledger, const std::filesystem::path& csv,
                 const std::filesystem::path& json);
OutcomeLedger load_ledger(const std::filesystem::path& csv);

struct StreamConfig {
  double threshold = 0.25;
  ResetPolicy reset_policy{};
  bool per_detection = true;
  std::uint64_t seed = 0;
  int workers = 1;
  const TransitionTable* table = nullptr;
};

struct StreamIssue {
  std::string image;
  std::string message;
};

struct StreamResult {
  OutcomeLedger ledger;
  std::vector<CycleResult> results;  // frame order, processed frames only
  std::vector<StreamIssue> issues;
  std::vector<std::string> skipped;  // frames dropped while held in S4
};

/// Runs every manifest entry of the chosen split (all entries when split is
/// empty). Frames are processed by `workers` independent threads; results
/// are folded in manifest order, so worker count never changes any output.
/// Reset policies act during the ordered fold: manual stops the stream at
/// the first safe state, after_n drops the following n frames.
StreamResult run_stream(const DatasetManifest& manifest,
                        std::optional<Split> split, const Detector& detector,
                        const Classifier& classifier, const StreamConfig& config,
                        const std::filesystem::path& root);

/// Same fold over preconstructed frames; the image-free entry point used by
/// emulated simulations.
StreamResult run_frames(const std::vector<SensorFrame>& frames,
                        const Detector& detector, const Classifier& classifier,
                        const StreamConfig& config);

}  // namespace driftguard
