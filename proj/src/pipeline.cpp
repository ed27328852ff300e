#include "driftguard/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace driftguard {

namespace {

constexpr InputSymbol k0 = InputSymbol::zero;
constexpr InputSymbol k1 = InputSymbol::one;

std::optional<ClassLabel> first_truth(const ImageContext& ctx) {
  if (ctx.annotations.empty()) return std::nullopt;
  return ctx.annotations.front().label;
}

/// Any failure inside the cycle degrades to this: the controller saw the
/// frame, could not process it, and parked in the safe state.
CycleResult failure_result(const SensorFrame& frame, const TransitionTable& table,
                           std::string message) {
  CycleResult r;
  r.image_id = frame.ctx.id;
  r.trace.apply(table, k0);
  r.verdict = {VerdictKind::safe_state, std::nullopt, SafeReason::sensor_failure};
  r.truth = first_truth(frame.ctx);
  r.category = "sensor_failure";
  r.error = std::move(message);
  return r;
}

struct Vote {
  int index = 0;
  Detection detection;
  ClassPrediction prediction;
  std::optional<ClassLabel> truth;
  bool agree = false;
  JointCategory category = JointCategory::agree_correct;
};

JointCategory categorize(const Vote& v) {
  const bool det_right = v.truth && v.detection.label == *v.truth;
  const bool cls_right = v.truth && v.prediction.label == *v.truth;
  if (v.agree) {
    return det_right ? JointCategory::agree_correct
                     : JointCategory::both_wrong_agree;
  }
  if (det_right) return JointCategory::detector_only_correct;
  if (cls_right) return JointCategory::classifier_only_correct;
  return JointCategory::both_wrong_disagree;
}

}  // namespace

std::string to_string(const Verdict& verdict) {
  switch (verdict.kind) {
    case VerdictKind::accepted:
      return "accepted:" + std::string(class_name(*verdict.accepted_class));
    case VerdictKind::safe_state:
      return std::string("safe_state:") +
             (*verdict.reason == SafeReason::sensor_failure
                  ? "sensor_failure"
                  : "model_disagreement");
    case VerdictKind::no_detection:
      return "no_detection";
  }
  return "?";
}

std::optional<Verdict> verdict_from_string(std::string_view text) {
  if (text == "no_detection") return Verdict{VerdictKind::no_detection, {}, {}};
  if (text == "safe_state:sensor_failure") {
    return Verdict{VerdictKind::safe_state, {}, SafeReason::sensor_failure};
  }
  if (text == "safe_state:model_disagreement") {
    return Verdict{VerdictKind::safe_state, {}, SafeReason::model_disagreement};
  }
  constexpr std::string_view prefix = "accepted:";
  if (text.substr(0, prefix.size()) == prefix) {
    const auto label = class_from_name(text.substr(prefix.size()));
    if (label) return Verdict{VerdictKind::accepted, *label, {}};
  }
  return std::nullopt;
}

CycleResult run_cycle(const SensorFrame& frame, const Detector& detector,
                      const Classifier& classifier, const CycleConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  const TransitionTable& table = config.table ? *config.table : default_table();
  const auto finish = [&](CycleResult r) {
    r.overhead_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
    return r;
  };

  if (!frame.acquired) {
    return finish(failure_result(frame, table, "acquisition failed"));
  }

  CycleResult r;
  r.image_id = frame.ctx.id;
  r.trace.apply(table, k1);  // S0: frame acquired

  std::vector<Detection> detections;
  try {
    detections = detector.detect(frame.image, frame.ctx);
  } catch (const std::exception& e) {
    return finish(failure_result(frame, table,
                                 std::string("detector: ") + e.what()));
  }
  for (const auto& d : detections) r.detector_latency_ms += d.latency_ms;

  std::vector<int> voted;
  for (int i = 0; i < static_cast<int>(detections.size()); ++i) {
    if (detections[i].confidence >= config.threshold) voted.push_back(i);
  }
  if (voted.empty()) {
    r.trace.apply(table, k0);  // S1: nothing to vote on, back to collect
    r.verdict = {VerdictKind::no_detection, std::nullopt, std::nullopt};
    r.truth = first_truth(frame.ctx);
    r.category = "no_detection";
    return finish(r);
  }
  if (!config.per_detection) {
    int best = voted.front();
    for (const int i : voted) {
      if (detections[i].confidence > detections[best].confidence) best = i;
    }
    voted = {best};
  }

  std::vector<BoundingBox> truth_boxes;
  for (const auto& a : frame.ctx.annotations) {
    try {
      truth_boxes.push_back(denormalize(a.box, frame.ctx.width, frame.ctx.height));
    } catch (const DegenerateBoxError&) {
      truth_boxes.push_back({0, 0, 0, 0});  // never matches
    }
  }

  std::vector<Vote> votes;
  for (const int index : voted) {
    const Detection& det = detections[index];
    if (r.trace.current == StateId::S5) {
      r.trace.apply(table, k1);  // S5: cycle complete, back to collect
      r.trace.apply(table, k1);  // S0: same frame, next object
    }
    r.trace.apply(table, k1);  // S1: detection in hand, go verify

    Vote v;
    v.index = index;
    v.detection = det;
    double best_iou = 0.0;
    for (std::size_t a = 0; a < truth_boxes.size(); ++a) {
      const double overlap = iou(det.box, truth_boxes[a]);
      if (overlap > best_iou) {
        best_iou = overlap;
        v.truth = frame.ctx.annotations[a].label;
      }
    }

    try {
      std::optional<ImageBuffer> crop64;
      if (frame.image) crop64 = resize_64(crop(*frame.image, det.box));
      CropContext ctx{frame.ctx.id, index, v.truth};
      v.prediction = classifier.classify(crop64 ? &*crop64 : nullptr, ctx);
    } catch (const std::exception& e) {
      return finish(failure_result(frame, table,
                                   std::string("classifier: ") + e.what()));
    }
    r.classifier_latency_ms += v.prediction.latency_ms;

    r.trace.apply(table, k1);  // S2: verification stage produced a class
    v.agree = v.detection.label == v.prediction.label;
    v.category = categorize(v);
    r.trace.apply(table, v.agree ? k1 : k0);  // S3: the vote
    votes.push_back(v);
    if (!v.agree) break;  // first disagreement parks the frame
  }

  // Attribute the row to the worst vote: the disagreement that tripped S4,
  // else an agreeing-but-wrong vote, else the highest-confidence vote.
  const Vote* primary = nullptr;
  for (const auto& v : votes) {
    if (!v.agree) primary = &v;
  }
  if (!primary) {
    for (const auto& v : votes) {
      if (v.category == JointCategory::both_wrong_agree) {
        primary = &v;
        break;
      }
    }
  }
  if (!primary) {
    primary = &votes.front();
    for (const auto& v : votes) {
      if (v.detection.confidence > primary->detection.confidence) primary = &v;
    }
  }

  r.detector_output = primary->detection;
  r.classifier_output = primary->prediction;
  r.truth = primary->truth;
  r.category = std::string(to_string(primary->category));
  if (primary->agree) {
    r.verdict = {VerdictKind::accepted, primary->detection.label, std::nullopt};
  } else {
    r.verdict = {VerdictKind::safe_state, std::nullopt,
                 SafeReason::model_disagreement};
    r.drift_alarm = true;
  }
  return finish(r);
}

double end_to_end_latency(const CycleResult& result) {
  return result.detector_latency_ms + result.classifier_latency_ms +
         result.overhead_ms;
}

void OutcomeLedger::add(const CycleResult& result) {
  LedgerRow row;
  row.image = result.image_id;
  row.truth = result.truth;
  if (result.detector_output) row.detector = result.detector_output->label;
  if (result.classifier_output) row.classifier = result.classifier_output->label;
  row.agree = result.detector_output && result.classifier_output &&
              result.detector_output->label == result.classifier_output->label;
  row.verdict = result.verdict;
  row.category = result.category;
  row.detector_ms = result.detector_latency_ms;
  row.classifier_ms = result.classifier_latency_ms;
  row.trace = result.trace.to_string();
  add_row(row);
}

void OutcomeLedger::add_row(const LedgerRow& row) {
  rows.push_back(row);
  if (row.category == "no_detection") {
    ++counters.no_detection;
  } else if (row.category == "sensor_failure") {
    ++counters.sensor_failure;
  } else if (const auto cat = joint_category_from_string(row.category)) {
    switch (*cat) {
      case JointCategory::agree_correct: ++counters.agree_correct; break;
      case JointCategory::detector_only_correct:
        ++counters.detector_only_correct;
        break;
      case JointCategory::classifier_only_correct:
        ++counters.classifier_only_correct;
        break;
      case JointCategory::both_wrong_agree: ++counters.both_wrong_agree; break;
      case JointCategory::both_wrong_disagree:
        ++counters.both_wrong_disagree;
        break;
    }
  } else {
    throw LedgerError("unknown ledger category `" + row.category + "`");
  }
}

LedgerCounters fold_rows(const std::vector<LedgerRow>& rows) {
  OutcomeLedger scratch;
  for (const auto& row : rows) scratch.add_row(row);
  return scratch.counters;
}

namespace {

std::string class_or_none(const std::optional<ClassLabel>& label) {
  return label ? std::string(class_name(*label)) : "none";
}

std::optional<ClassLabel> class_or_none_from(const std::string& text, int line) {
  if (text == "none") return std::nullopt;
  const auto label = class_from_name(text);
  if (!label) {
    throw LedgerError("ledger csv: line " + std::to_string(line) +
                      ": unknown class `" + text + "`");
  }
  return label;
}

std::string fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

constexpr std::string_view kLedgerHeader =
    "image,truth,detector,classifier,agree,verdict,category,detector_ms,"
    "classifier_ms,trace";

}  // namespace

std::string ledger_rows_to_csv(const std::vector<LedgerRow>& rows) {
  std::string out{kLedgerHeader};
  out += '\n';
  for (const auto& r : rows) {
    if (r.image.find_first_of(",\n\r") != std::string::npos) {
      throw LedgerError("image id not representable in csv: " + r.image);
    }
    out += r.image;
    out += ',';
    out += class_or_none(r.truth);
    out += ',';
    out += class_or_none(r.detector);
    out += ',';
    out += class_or_none(r.classifier);
    out += ',';
    out += r.agree ? '1' : '0';
    out += ',';
    out += to_string(r.verdict);
    out += ',';
    out += r.category;
    out += ',';
    out += fixed3(r.detector_ms);
    out += ',';
    out += fixed3(r.classifier_ms);
    out += ',';
    out += r.trace;
    out += '\n';
  }
  return out;
}

std::vector<LedgerRow> ledger_rows_from_csv(std::string_view text) {
  std::istringstream lines{std::string(text)};
  std::string line;
  if (!std::getline(lines, line)) throw LedgerError("ledger csv: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kLedgerHeader) throw LedgerError("ledger csv: bad header");

  std::vector<LedgerRow> rows;
  int lineno = 1;
  while (std::getline(lines, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    std::vector<std::string> f;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      f.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (f.size() != 10) {
      throw LedgerError("ledger csv: line " + std::to_string(lineno) +
                        ": expected 10 fields");
    }

    LedgerRow row;
    row.image = f[0];
    row.truth = class_or_none_from(f[1], lineno);
    row.detector = class_or_none_from(f[2], lineno);
    row.classifier = class_or_none_from(f[3], lineno);
    if (f[4] != "0" && f[4] != "1") {
      throw LedgerError("ledger csv: line " + std::to_string(lineno) +
                        ": agree flag must be 0 or 1");
    }
    row.agree = f[4] == "1";
    const auto verdict = verdict_from_string(f[5]);
    if (!verdict) {
      throw LedgerError("ledger csv: line " + std::to_string(lineno) +
                        ": bad verdict `" + f[5] + "`");
    }
    row.verdict = *verdict;
    row.category = f[6];
    try {
      row.detector_ms = std::stod(f[7]);
      row.classifier_ms = std::stod(f[8]);
    } catch (const std::exception&) {
      throw LedgerError("ledger csv: line " + std::to_string(lineno) +
                        ": bad latency value");
    }
    row.trace = f[9];
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ledger_counters_to_json(const LedgerCounters& c, long rows) {
  nlohmann::json j;
  j["agree_correct"] = c.agree_correct;
  j["detector_only_correct"] = c.detector_only_correct;
  j["classifier_only_correct"] = c.classifier_only_correct;
  j["both_wrong_agree"] = c.both_wrong_agree;
  j["both_wrong_disagree"] = c.both_wrong_disagree;
  j["no_detection"] = c.no_detection;
  j["sensor_failure"] = c.sensor_failure;
  j["alarms"] = c.alarms();
  j["rows"] = rows;
  return j.dump(2) + "\n";
}

LedgerCounters ledger_counters_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw LedgerError(std::string("ledger json: ") + e.what());
  }
  LedgerCounters c;
  try {
    c.agree_correct = j.at("agree_correct").get<long>();
    c.detector_only_correct = j.at("detector_only_correct").get<long>();
    c.classifier_only_correct = j.at("classifier_only_correct").get<long>();
    c.both_wrong_agree = j.at("both_wrong_agree").get<long>();
    c.both_wrong_disagree = j.at("both_wrong_disagree").get<long>();
    c.no_detection = j.at("no_detection").get<long>();
    c.sensor_failure = j.at("sensor_failure").get<long>();
    if (j.at("alarms").get<long>() != c.alarms()) {
      throw LedgerError("ledger json: alarms inconsistent with counters");
    }
  } catch (const nlohmann::json::exception& e) {
    throw LedgerError(std::string("ledger json: ") + e.what());
  }
  return c;
}

void save_ledger(const OutcomeLedger& ledger, const std::filesystem::path& csv,
                 const std::filesystem::path& json) {
  std::ofstream csv_out(csv, std::ios::binary | std::ios::trunc);
  if (!csv_out) throw LedgerError("cannot write " + csv.string());
  csv_out << ledger_rows_to_csv(ledger.rows);

  std::ofstream json_out(json, std::ios::binary | std::ios::trunc);
  if (!json_out) throw LedgerError("cannot write " + json.string());
  json_out << ledger_counters_to_json(ledger.counters,
                                      static_cast<long>(ledger.rows.size()));
}

OutcomeLedger load_ledger(const std::filesystem::path& csv) {
  std::ifstream in(csv, std::ios::binary);
  if (!in) throw LedgerError("cannot open " + csv.string());
  std::string text{std::istreambuf_iterator<char>(in),
                   std::istreambuf_iterator<char>()};
  OutcomeLedger ledger;
  for (const auto& row : ledger_rows_from_csv(text)) ledger.add_row(row);
  return ledger;
}

namespace {

/// Runs fn(i) for i in [0, n) across `workers` threads, results landing in
/// index order. Work distribution is dynamic but outputs depend only on i.
std::vector<CycleResult> compute_indexed(
    std::size_t n, int workers,
    const std::function<CycleResult(std::size_t)>& fn) {
  std::vector<CycleResult> out(n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }

  std::atomic<std::size_t> cursor{0};
  std::vector<std::exception_ptr> failures(
      static_cast<std::size_t>(workers));
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = cursor.fetch_add(1); i < n;
             i = cursor.fetch_add(1)) {
          out[i] = fn(i);
        }
      } catch (...) {
        failures[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : failures) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

StreamResult fold_results(std::vector<CycleResult> results,
                          const StreamConfig& config) {
  StreamResult stream;
  int hold = 0;
  bool stopped = false;
  for (auto& result : results) {
    if (stopped) break;
    if (hold > 0) {
      --hold;
      stream.skipped.push_back(result.image_id);
      continue;
    }
    if (result.error) stream.issues.push_back({result.image_id, *result.error});
    stream.ledger.add(result);
    const bool safe = result.verdict.kind == VerdictKind::safe_state;
    stream.results.push_back(std::move(result));
    if (safe) {
      switch (config.reset_policy.mode) {
        case ResetPolicy::Mode::automatic: break;
        case ResetPolicy::Mode::manual: stopped = true; break;
        case ResetPolicy::Mode::after_n: hold = config.reset_policy.n; break;
      }
    }
  }
  return stream;
}

// Executing a defective table would throw mid-walk; reject it up front.
void require_valid_table(const TransitionTable* table) {
  if (table && !validate(*table).ok()) {
    throw std::invalid_argument("transition table fails validation");
  }
}

}  // namespace

StreamResult run_stream(const DatasetManifest& manifest,
                        std::optional<Split> split, const Detector& detector,
                        const Classifier& classifier, const StreamConfig& config,
                        const std::filesystem::path& root) {
  require_valid_table(config.table);
  std::vector<const ManifestEntry*> selected;
  for (const auto& e : manifest.entries) {
    if (!split || e.split == *split) selected.push_back(&e);
  }

  const CycleConfig cycle_config{config.threshold, config.per_detection,
                                 config.table};
  const auto resolve = [&root](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : root / path;
  };

  auto results = compute_indexed(
      selected.size(), config.workers, [&](std::size_t i) -> CycleResult {
        const ManifestEntry& entry = *selected[i];
        SensorFrame frame;
        frame.ctx.id = std::filesystem::path(entry.image).stem().string();

        ImageBuffer image;
        try {
          image = load_ppm(resolve(entry.image));
          std::ifstream in(resolve(entry.labels), std::ios::binary);
          if (!in) throw DatasetError("cannot open " + entry.labels);
          const std::string text{std::istreambuf_iterator<char>(in),
                                 std::istreambuf_iterator<char>()};
          frame.ctx.annotations = parse_annotation(text);
        } catch (const std::exception& e) {
          frame.acquired = false;
          auto result = run_cycle(frame, detector, classifier, cycle_config);
          result.error = e.what();
          return result;
        }
        frame.ctx.width = image.width;
        frame.ctx.height = image.height;
        frame.image = &image;
        return run_cycle(frame, detector, classifier, cycle_config);
      });
  return fold_results(std::move(results), config);
}

StreamResult run_frames(const std::vector<SensorFrame>& frames,
                        const Detector& detector, const Classifier& classifier,
                        const StreamConfig& config) {
  require_valid_table(config.table);
  const CycleConfig cycle_config{config.threshold, config.per_detection,
                                 config.table};
  auto results =
      compute_indexed(frames.size(), config.workers, [&](std::size_t i) {
        return run_cycle(frames[i], detector, classifier, cycle_config);
      });
  return fold_results(std::move(results), config);
}

}  // namespace driftguard
