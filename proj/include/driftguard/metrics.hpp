#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "driftguard/dataset.hpp"
#include "driftguard/geometry.hpp"
#include "driftguard/models.hpp"
#include "driftguard/pipeline.hpp"

namespace driftguard {

class MetricsError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Rows are truth, columns are predictions; the extra last column counts
/// samples the model produced nothing for ("none").
struct ConfusionMatrix {
  std::array<std::array<long, kClassCount + 1>, kClassCount> counts{};

  void add(ClassLabel truth, std::optional<ClassLabel> predicted);
  void merge(const ConfusionMatrix& other);
  long total() const;
  long diagonal() const;

  bool operator==(const ConfusionMatrix&) const = default;
};

struct PerClassMetrics {
  ClassLabel label = ClassLabel::round_30;
  long support = 0;  // truth instances
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::optional<double> ap;  // detection scoring only
};

/// Macro averages run over classes present in truth; absent classes carry
/// no vote. Per-class F1 is the harmonic mean of that class's precision and
/// recall; the macro F1 averages those, it is not derived from the macro
/// precision/recall pair.
struct MetricsReport {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::vector<PerClassMetrics> per_class;
  std::optional<double> map50;
  long samples = 0;
  ConfusionMatrix confusion;
};

using LabelPair = std::pair<ClassLabel, std::optional<ClassLabel>>;

MetricsReport score_classification(const std::vector<LabelPair>& pairs);

/// Ledger view: one pair per row that carries a truth class; the hybrid's
/// prediction is the accepted class, or none when the frame ended anywhere
/// but acceptance. Defined as pair extraction + the overload above, so the
/// two paths cannot disagree.
MetricsReport score_classification(const OutcomeLedger& ledger);
std::vector<LabelPair> ledger_label_pairs(const OutcomeLedger& ledger);

/// One image's replayed detections next to its ground truth.
struct DetectionSample {
  std::string image;
  std::vector<std::pair<ClassLabel, BoundingBox>> truths;
  std::vector<Detection> detections;
};

/// mAP@iou_threshold with greedy confidence-ordered matching (each truth
/// matched at most once) and all-point precision-recall interpolation.
/// Confidence ties break by sample order then detection order. AP is 0 for
/// a truth-bearing class with no detections; classes without truths are
/// skipped. `samples` counts truth instances; `accuracy` reports the
/// fraction of truths matched.
MetricsReport score_detection(const std::vector<DetectionSample>& samples,
                              double iou_threshold = 0.5);

/// Everything the evaluation run shows against the published reference
/// columns: per-stage metrics, both hybrid readings, the joint-outcome
/// counters and the statistical target comparison.
struct TableReport {
  MetricsReport detector;
  MetricsReport classifier;
  /// Primary hybrid view: accepted-and-correct over every truth-bearing row.
  MetricsReport hybrid;
  /// Secondary view: correct over accepted rows only (alarm rows excluded
  /// from the denominator). The reference hybrid accuracy cannot be
  /// reproduced under any single definition, so both readings are printed.
  double decision_quality_accuracy = 0.0;
  long accepted_rows = 0;
  LedgerCounters counters;
  long rows = 0;
  /// Observed proportions vs reference targets, matched within binomial
  /// 3 sigma of the target at this row count.
  std::vector<TargetCheck> target_checks;
};

TableReport reproduce_tables(const OutcomeLedger& ledger);

/// Fixed-layout text, values at four decimals.
std::string format_tables(const TableReport& report);
/// Full-precision JSON document.
std::string tables_to_json(const TableReport& report);

}  // namespace driftguard
