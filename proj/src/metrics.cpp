#include "driftguard/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"

namespace driftguard {

void ConfusionMatrix::add(ClassLabel truth, std::optional<ClassLabel> predicted) {
  const auto row = static_cast<std::size_t>(truth);
  const std::size_t col =
      predicted ? static_cast<std::size_t>(*predicted) : kClassCount;
  ++counts[row][col];
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  for (std::size_t r = 0; r < kClassCount; ++r) {
    for (std::size_t c = 0; c <= kClassCount; ++c) {
      counts[r][c] += other.counts[r][c];
    }
  }
}

long ConfusionMatrix::total() const {
  long sum = 0;
  for (const auto& row : counts) {
    for (const long v : row) sum += v;
  }
  return sum;
}

long ConfusionMatrix::diagonal() const {
  long sum = 0;
  for (std::size_t c = 0; c < kClassCount; ++c) sum += counts[c][c];
  return sum;
}

MetricsReport score_classification(const std::vector<LabelPair>& pairs) {
  if (pairs.empty()) throw MetricsError("no samples to score");

  MetricsReport report;
  for (const auto& [truth, predicted] : pairs) {
    report.confusion.add(truth, predicted);
  }
  report.samples = static_cast<long>(pairs.size());
  report.accuracy = static_cast<double>(report.confusion.diagonal()) /
                    static_cast<double>(report.samples);

  for (int c = 0; c < kClassCount; ++c) {
    long support = 0;
    for (std::size_t col = 0; col <= kClassCount; ++col) {
      support += report.confusion.counts[c][col];
    }
    if (support == 0) continue;

    long predicted_c = 0;
    for (std::size_t r = 0; r < kClassCount; ++r) {
      predicted_c += report.confusion.counts[r][c];
    }
    const long tp = report.confusion.counts[c][c];

    PerClassMetrics pc;
    pc.label = static_cast<ClassLabel>(c);
    pc.support = support;
    pc.precision = predicted_c > 0
                       ? static_cast<double>(tp) / static_cast<double>(predicted_c)
                       : 0.0;
    pc.recall = static_cast<double>(tp) / static_cast<double>(support);
    pc.f1 = pc.precision + pc.recall > 0.0
                ? 2.0 * pc.precision * pc.recall / (pc.precision + pc.recall)
                : 0.0;
    report.per_class.push_back(pc);
  }

  for (const auto& pc : report.per_class) {
    report.macro_precision += pc.precision;
    report.macro_recall += pc.recall;
    report.macro_f1 += pc.f1;
  }
  const auto n = static_cast<double>(report.per_class.size());
  report.macro_precision /= n;
  report.macro_recall /= n;
  report.macro_f1 /= n;
  return report;
}

std::vector<LabelPair> ledger_label_pairs(const OutcomeLedger& ledger) {
  std::vector<LabelPair> pairs;
  for (const auto& row : ledger.rows) {
    if (!row.truth) continue;
    pairs.emplace_back(*row.truth, row.verdict.kind == VerdictKind::accepted
                                       ? row.verdict.accepted_class
                                       : std::nullopt);
  }
  return pairs;
}

MetricsReport score_classification(const OutcomeLedger& ledger) {
  return score_classification(ledger_label_pairs(ledger));
}

MetricsReport score_detection(const std::vector<DetectionSample>& samples,
                              double iou_threshold) {
  MetricsReport report;

  long total_truths = 0;
  long total_matched = 0;
  double ap_sum = 0.0;
  int classes_with_truths = 0;

  for (int c = 0; c < kClassCount; ++c) {
    const auto label = static_cast<ClassLabel>(c);

    long truth_count = 0;
    for (const auto& s : samples) {
      for (const auto& [tl, tb] : s.truths) {
        if (tl == label) ++truth_count;
      }
    }
    if (truth_count == 0) continue;
    ++classes_with_truths;
    total_truths += truth_count;

    struct Ranked {
      double confidence;
      std::size_t sample;
      std::size_t index;
    };
    std::vector<Ranked> ranked;
    for (std::size_t si = 0; si < samples.size(); ++si) {
      const auto& dets = samples[si].detections;
      for (std::size_t di = 0; di < dets.size(); ++di) {
        if (dets[di].label == label) {
          ranked.push_back({dets[di].confidence, si, di});
        }
      }
    }
    std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
      if (a.confidence != b.confidence) return a.confidence > b.confidence;
      if (a.sample != b.sample) return a.sample < b.sample;
      return a.index < b.index;
    });

    std::vector<std::vector<bool>> matched(samples.size());
    for (std::size_t si = 0; si < samples.size(); ++si) {
      matched[si].assign(samples[si].truths.size(), false);
    }

    long tp = 0, fp = 0;
    std::vector<double> precisions, recalls;
    for (const auto& r : ranked) {
      const auto& s = samples[r.sample];
      const auto& box = s.detections[r.index].box;
      double best_iou = 0.0;
      std::size_t best_truth = 0;
      bool found = false;
      for (std::size_t ti = 0; ti < s.truths.size(); ++ti) {
        if (s.truths[ti].first != label || matched[r.sample][ti]) continue;
        const double overlap = iou(box, s.truths[ti].second);
        if (overlap >= iou_threshold && overlap > best_iou) {
          best_iou = overlap;
          best_truth = ti;
          found = true;
        }
      }
      if (found) {
        matched[r.sample][best_truth] = true;
        ++tp;
      } else {
        ++fp;
      }
      precisions.push_back(static_cast<double>(tp) /
                           static_cast<double>(tp + fp));
      recalls.push_back(static_cast<double>(tp) /
                        static_cast<double>(truth_count));
    }
    total_matched += tp;

    // All-point interpolation: integrate the running-max precision
    // envelope (taken from the right) over recall.
    double ap = 0.0;
    double envelope = 0.0;
    std::vector<double> env(precisions.size());
    for (std::size_t i = precisions.size(); i-- > 0;) {
      envelope = std::max(envelope, precisions[i]);
      env[i] = envelope;
    }
    double prev_recall = 0.0;
    for (std::size_t i = 0; i < precisions.size(); ++i) {
      ap += (recalls[i] - prev_recall) * env[i];
      prev_recall = recalls[i];
    }
    ap_sum += ap;

    PerClassMetrics pc;
    pc.label = label;
    pc.support = truth_count;
    pc.precision = tp + fp > 0
                       ? static_cast<double>(tp) / static_cast<double>(tp + fp)
                       : 0.0;
    pc.recall = static_cast<double>(tp) / static_cast<double>(truth_count);
    pc.f1 = pc.precision + pc.recall > 0.0
                ? 2.0 * pc.precision * pc.recall / (pc.precision + pc.recall)
                : 0.0;
    pc.ap = ap;
    report.per_class.push_back(pc);
  }

  if (classes_with_truths == 0) throw MetricsError("no ground truth to score");

  for (const auto& pc : report.per_class) {
    report.macro_precision += pc.precision;
    report.macro_recall += pc.recall;
    report.macro_f1 += pc.f1;
  }
  const auto n = static_cast<double>(classes_with_truths);
  report.macro_precision /= n;
  report.macro_recall /= n;
  report.macro_f1 /= n;
  report.map50 = ap_sum / n;
  report.samples = total_truths;
  report.accuracy =
      static_cast<double>(total_matched) / static_cast<double>(total_truths);
  return report;
}

namespace {

std::vector<LabelPair> stage_pairs(const OutcomeLedger& ledger, bool detector) {
  std::vector<LabelPair> pairs;
  for (const auto& row : ledger.rows) {
    if (!row.truth) continue;
    pairs.emplace_back(*row.truth, detector ? row.detector : row.classifier);
  }
  return pairs;
}

/// Matched within 3 sigma of a Binomial(n, target) proportion.
TargetCheck statistical_check(std::string name, double value, double target,
                              long n) {
  const double sigma =
      std::sqrt(target * (1.0 - target) / static_cast<double>(n));
  return {std::move(name), value, target, std::abs(value - target) <= 3.0 * sigma};
}

}  // namespace

TableReport reproduce_tables(const OutcomeLedger& ledger) {
  if (ledger.rows.empty()) throw MetricsError("empty ledger");

  TableReport report;
  report.counters = ledger.counters;
  report.rows = static_cast<long>(ledger.rows.size());
  report.detector = score_classification(stage_pairs(ledger, true));
  report.classifier = score_classification(stage_pairs(ledger, false));
  report.hybrid = score_classification(ledger);

  long accepted = 0, accepted_correct = 0;
  for (const auto& row : ledger.rows) {
    if (row.verdict.kind != VerdictKind::accepted) continue;
    ++accepted;
    if (row.truth && row.verdict.accepted_class == row.truth) ++accepted_correct;
  }
  report.accepted_rows = accepted;
  report.decision_quality_accuracy =
      accepted > 0 ? static_cast<double>(accepted_correct) /
                         static_cast<double>(accepted)
                   : 0.0;

  const auto n = static_cast<double>(report.rows);
  const auto& c = report.counters;
  const auto add = [&](std::string name, double numerator, double target) {
    report.target_checks.push_back(statistical_check(
        std::move(name), numerator / n, target, report.rows));
  };
  add("detector_accuracy", c.agree_correct + c.detector_only_correct, 488.0 / 600.0);
  add("classifier_accuracy", c.agree_correct + c.classifier_only_correct,
      571.0 / 600.0);
  add("detector_only_rate", c.detector_only_correct, 15.0 / 600.0);
  add("classifier_only_rate", c.classifier_only_correct, 105.0 / 600.0);
  add("single_model_disagreement_rate",
      c.detector_only_correct + c.classifier_only_correct, 120.0 / 600.0);
  add("agree_wrong_rate", c.both_wrong_agree, 2.0 / 600.0);
  add("alarm_rate", c.alarms(), 120.0 / 600.0);
  add("hybrid_accuracy", c.agree_correct, 583.0 / 600.0);
  return report;
}

namespace {

std::string f4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

void stage_line(std::ostringstream& out, const char* name,
                const MetricsReport& m) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "  %-12s %9s %9s %9s %9s %9ld\n", name,
                f4(m.accuracy).c_str(), f4(m.macro_precision).c_str(),
                f4(m.macro_recall).c_str(), f4(m.macro_f1).c_str(), m.samples);
  out << buf;
}

}  // namespace

std::string format_tables(const TableReport& report) {
  std::ostringstream out;
  out << "stage metrics (macro averages over truth-present classes)\n";
  out << "  model         accuracy   macro_p   macro_r  macro_f1   samples\n";
  stage_line(out, "detector", report.detector);
  stage_line(out, "classifier", report.classifier);
  stage_line(out, "hybrid", report.hybrid);
  out << "  decision-quality accuracy " << f4(report.decision_quality_accuracy)
      << " over " << report.accepted_rows
      << " accepted rows (alarms excluded from denominator)\n";

  out << "\njoint outcome counters (" << report.rows << " rows)\n";
  const auto& c = report.counters;
  const auto counter = [&](const char* name, long v) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "  %-24s %7ld\n", name, v);
    out << buf;
  };
  counter("agree_correct", c.agree_correct);
  counter("detector_only_correct", c.detector_only_correct);
  counter("classifier_only_correct", c.classifier_only_correct);
  counter("both_wrong_agree", c.both_wrong_agree);
  counter("both_wrong_disagree", c.both_wrong_disagree);
  counter("no_detection", c.no_detection);
  counter("sensor_failure", c.sensor_failure);
  counter("alarms", c.alarms());

  out << "\nreference comparison (match = within binomial 3 sigma of target)\n";
  out << "  name                             observed    target     delta  match\n";
  for (const auto& t : report.target_checks) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "  %-32s %8s  %8s  %+8.4f  %s\n",
                  t.name.c_str(), f4(t.value).c_str(), f4(t.target).c_str(),
                  t.value - t.target, t.matched ? "yes" : "NO");
    out << buf;
  }
  return out.str();
}

namespace {

nlohmann::json metrics_to_json(const MetricsReport& m) {
  nlohmann::json j;
  j["accuracy"] = m.accuracy;
  j["macro_precision"] = m.macro_precision;
  j["macro_recall"] = m.macro_recall;
  j["macro_f1"] = m.macro_f1;
  j["samples"] = m.samples;
  if (m.map50) j["map50"] = *m.map50;
  j["per_class"] = nlohmann::json::array();
  for (const auto& pc : m.per_class) {
    nlohmann::json jp;
    jp["class"] = std::string(class_name(pc.label));
    jp["support"] = pc.support;
    jp["precision"] = pc.precision;
    jp["recall"] = pc.recall;
    jp["f1"] = pc.f1;
    if (pc.ap) jp["ap"] = *pc.ap;
    j["per_class"].push_back(std::move(jp));
  }
  j["confusion"] = nlohmann::json::array();
  for (const auto& row : m.confusion.counts) {
    j["confusion"].push_back(row);
  }
  return j;
}

}  // namespace

std::string tables_to_json(const TableReport& report) {
  nlohmann::json j;
  j["detector"] = metrics_to_json(report.detector);
  j["classifier"] = metrics_to_json(report.classifier);
  j["hybrid"] = metrics_to_json(report.hybrid);
  j["decision_quality_accuracy"] = report.decision_quality_accuracy;
  j["accepted_rows"] = report.accepted_rows;
  j["rows"] = report.rows;
  const auto& c = report.counters;
  j["counters"] = {{"agree_correct", c.agree_correct},
                   {"detector_only_correct", c.detector_only_correct},
                   {"classifier_only_correct", c.classifier_only_correct},
                   {"both_wrong_agree", c.both_wrong_agree},
                   {"both_wrong_disagree", c.both_wrong_disagree},
                   {"no_detection", c.no_detection},
                   {"sensor_failure", c.sensor_failure},
                   {"alarms", c.alarms()}};
  j["target_checks"] = nlohmann::json::array();
  for (const auto& t : report.target_checks) {
    j["target_checks"].push_back({{"name", t.name},
                                  {"value", t.value},
                                  {"target", t.target},
                                  {"matched", t.matched}});
  }
  return j.dump(2) + "\n";
}

}  // namespace driftguard
