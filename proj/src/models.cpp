#include "driftguard/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"

namespace driftguard {

namespace {

using nlohmann::json;

std::string cycle_key(const std::string& image_id, int detection_index) {
  return image_id + "#" + std::to_string(detection_index);
}

/// Ascending list of all classes except `truth` (and optionally `also_not`).
std::vector<ClassLabel> other_classes(ClassLabel truth,
                                      std::optional<ClassLabel> also_not = {}) {
  std::vector<ClassLabel> out;
  for (int c = 0; c < kClassCount; ++c) {
    const auto label = static_cast<ClassLabel>(c);
    if (label == truth || (also_not && label == *also_not)) continue;
    out.push_back(label);
  }
  return out;
}

ClassLabel draw_wrong(SplitMix64& stream, ClassLabel truth,
                      const std::optional<std::array<std::array<double, kClassCount>,
                                                     kClassCount>>& bias) {
  if (bias) {
    const auto& row = (*bias)[static_cast<std::size_t>(truth)];
    double total = 0.0;
    for (int c = 0; c < kClassCount; ++c) {
      if (static_cast<ClassLabel>(c) != truth && row[c] > 0.0) total += row[c];
    }
    if (total > 0.0) {
      const double u = stream.next_unit() * total;
      double cum = 0.0;
      for (int c = 0; c < kClassCount; ++c) {
        if (static_cast<ClassLabel>(c) == truth || row[c] <= 0.0) continue;
        cum += row[c];
        if (u <= cum) return static_cast<ClassLabel>(c);
      }
    }
    // Degenerate bias row: fall through to the uniform draw.
  }
  const auto pool = other_classes(truth);
  return pool[stream.next_below(pool.size())];
}

}  // namespace

void require_crop_64(const ImageBuffer* crop) {
  if (crop && (crop->width != 64 || crop->height != 64)) {
    throw ModelError("classifier input must be 64x64, got " +
                     std::to_string(crop->width) + "x" +
                     std::to_string(crop->height));
  }
}

OracleDetector::OracleDetector(ErrorInjection injection)
    : injection_(std::move(injection)) {}

std::vector<Detection> OracleDetector::detect(const ImageBuffer*,
                                              const ImageContext& ctx) const {
  std::vector<Detection> out;
  for (std::size_t i = 0; i < ctx.annotations.size(); ++i) {
    const auto& a = ctx.annotations[i];
    SplitMix64 stream(derive_seed(
        injection_.seed, ctx.id + ":det:" + std::to_string(i)));
    if (stream.next_unit() < injection_.miss_rate) continue;
    Detection d;
    d.label = stream.next_unit() < injection_.misclass_rate
                  ? draw_wrong(stream, a.label, injection_.confusion_bias)
                  : a.label;
    d.box = denormalize(a.box, ctx.width, ctx.height);
    out.push_back(d);
  }
  return out;
}

OracleClassifier::OracleClassifier(ErrorInjection injection)
    : injection_(std::move(injection)) {}

ClassPrediction OracleClassifier::classify(const ImageBuffer* crop,
                                           const CropContext& ctx) const {
  require_crop_64(crop);
  if (!ctx.truth) {
    throw ModelError("no ground truth available for crop " + ctx.image_id +
                     "_" + std::to_string(ctx.detection_index));
  }
  SplitMix64 stream(derive_seed(
      injection_.seed, ctx.image_id + ":cls:" + std::to_string(ctx.detection_index)));
  ClassPrediction p;
  p.label = stream.next_unit() < injection_.misclass_rate
                ? draw_wrong(stream, *ctx.truth, injection_.confusion_bias)
                : *ctx.truth;
  return p;
}

namespace {

/// Reads a JSON-lines file, invoking fn(line number, parsed object).
template <typename Fn>
void for_each_jsonl(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open replay file: " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ModelError(path.string() + ":" + std::to_string(lineno) + ": " +
                       e.what());
    }
    try {
      fn(lineno, j);
    } catch (const json::exception& e) {
      throw ModelError(path.string() + ":" + std::to_string(lineno) + ": " +
                       e.what());
    }
  }
}

ClassLabel class_from_json(const json& j, const char* key) {
  const int id = j.at(key).get<int>();
  const auto label = class_from_id(id);
  if (!label) throw ModelError("class_id " + std::to_string(id) + " outside [0, 6]");
  return *label;
}

double confidence_from_json(const json& j) {
  const double c = j.at("confidence").get<double>();
  if (c < 0.0 || c > 1.0) {
    throw ModelError("confidence " + std::to_string(c) + " outside [0, 1]");
  }
  return c;
}

}  // namespace

ReplayDetector::ReplayDetector(
    std::unordered_map<std::string, std::vector<Record>> records)
    : records_(std::move(records)) {}

ReplayDetector ReplayDetector::from_file(const std::filesystem::path& path) {
  std::unordered_map<std::string, std::vector<Record>> records;
  for_each_jsonl(path, [&](int lineno, const json& j) {
    const auto image = j.at("image").get<std::string>();
    if (records.count(image)) {
      throw ModelError(path.string() + ":" + std::to_string(lineno) +
                       ": duplicate record for image `" + image + "`");
    }
    auto& list = records[image];
    for (const auto& jd : j.at("detections")) {
      Record r;
      r.label = class_from_json(jd, "class_id");
      r.confidence = confidence_from_json(jd);
      r.box = {jd.at("cx").get<double>(), jd.at("cy").get<double>(),
               jd.at("w").get<double>(), jd.at("h").get<double>()};
      if (r.box.w <= 0.0 || r.box.h <= 0.0) {
        throw ModelError(path.string() + ":" + std::to_string(lineno) +
                         ": detection with empty box");
      }
      list.push_back(r);
    }
  });
  return ReplayDetector(std::move(records));
}

const std::vector<ReplayDetector::Record>* ReplayDetector::find(
    const std::string& image_id) const {
  const auto it = records_.find(image_id);
  return it == records_.end() ? nullptr : &it->second;
}

std::vector<Detection> ReplayDetector::detect(const ImageBuffer*,
                                              const ImageContext& ctx) const {
  const auto it = records_.find(ctx.id);
  if (it == records_.end()) {
    throw ModelError("no replay record for image `" + ctx.id + "`");
  }
  std::vector<Detection> out;
  for (const auto& r : it->second) {
    Detection d;
    d.label = r.label;
    d.confidence = r.confidence;
    d.box = denormalize(r.box, ctx.width, ctx.height);
    out.push_back(d);
  }
  return out;
}

ReplayClassifier::ReplayClassifier(
    std::unordered_map<std::string, ClassPrediction> records)
    : records_(std::move(records)) {}

ReplayClassifier ReplayClassifier::from_file(const std::filesystem::path& path) {
  std::unordered_map<std::string, ClassPrediction> records;
  for_each_jsonl(path, [&](int lineno, const json& j) {
    const auto key =
        std::filesystem::path(j.at("crop").get<std::string>()).filename().string();
    if (records.count(key)) {
      throw ModelError(path.string() + ":" + std::to_string(lineno) +
                       ": duplicate record for crop `" + key + "`");
    }
    ClassPrediction p;
    p.label = class_from_json(j, "class_id");
    p.confidence = confidence_from_json(j);
    records.emplace(key, p);
  });
  return ReplayClassifier(std::move(records));
}

bool ReplayClassifier::has(const std::string& crop_key) const {
  return records_.count(crop_key) != 0;
}

ClassPrediction ReplayClassifier::classify(const ImageBuffer* crop,
                                           const CropContext& ctx) const {
  require_crop_64(crop);
  const std::string key =
      ctx.image_id + "_" + std::to_string(ctx.detection_index) + ".ppm";
  const auto it = records_.find(key);
  if (it == records_.end()) {
    throw ModelError("no replay record for crop `" + key + "`");
  }
  return it->second;
}

std::string_view to_string(JointCategory category) {
  switch (category) {
    case JointCategory::agree_correct: return "agree_correct";
    case JointCategory::detector_only_correct: return "detector_only_correct";
    case JointCategory::classifier_only_correct: return "classifier_only_correct";
    case JointCategory::both_wrong_agree: return "both_wrong_agree";
    case JointCategory::both_wrong_disagree: return "both_wrong_disagree";
  }
  return "?";
}

std::optional<JointCategory> joint_category_from_string(std::string_view name) {
  for (int i = 0; i < kJointCategoryCount; ++i) {
    const auto c = static_cast<JointCategory>(i);
    if (name == to_string(c)) return c;
  }
  return std::nullopt;
}

void validate_profile(const EmulatorProfile& profile) {
  double sum = 0.0;
  for (const double p : profile.category_probs) {
    if (p < 0.0) throw ProfileError("category probability below 0");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ProfileError("category probabilities sum to " + std::to_string(sum) +
                       ", expected 1");
  }
  if (profile.detector_latency_mean_ms < 0.0 ||
      profile.classifier_latency_mean_ms < 0.0) {
    throw ProfileError("latency means must be >= 0");
  }
}

EmulatorProfile fit_profile(const std::array<long, kJointCategoryCount>& counts,
                            long n, std::uint64_t seed) {
  if (n < 1) throw ProfileError("sample count must be >= 1");
  long sum = 0;
  for (const long c : counts) {
    if (c < 0) throw ProfileError("negative category count");
    sum += c;
  }
  if (sum != n) {
    throw ProfileError("category counts sum to " + std::to_string(sum) +
                       ", expected " + std::to_string(n));
  }

  EmulatorProfile profile;
  profile.seed = seed;
  for (int i = 0; i < kJointCategoryCount; ++i) {
    profile.category_probs[i] =
        static_cast<double>(counts[i]) / static_cast<double>(n);
  }

  // Reference proportions from the published drift evaluation over 600
  // samples. They are mutually inconsistent, so every profile misses at
  // least one; the checks make the gap explicit instead of hiding it.
  const double c0 = profile.category_probs[0], c1 = profile.category_probs[1],
               c2 = profile.category_probs[2], c3 = profile.category_probs[3];
  const auto check = [&](std::string name, double value, double target) {
    profile.target_checks.push_back(
        {std::move(name), value, target, std::abs(value - target) <= 1e-9});
  };
  check("detector_accuracy", c0 + c1, 488.0 / 600.0);
  check("classifier_accuracy", c0 + c2, 571.0 / 600.0);
  check("detector_only_rate", c1, 15.0 / 600.0);
  check("classifier_only_rate", c2, 105.0 / 600.0);
  check("single_model_disagreement_rate", c1 + c2, 120.0 / 600.0);
  check("agree_wrong_rate", c3, 2.0 / 600.0);
  check("hybrid_accuracy", c0, 583.0 / 600.0);
  return profile;
}

EmulatorProfile default_drift_profile(std::uint64_t seed) {
  return fit_profile({466, 15, 105, 2, 12}, 600, seed);
}

std::string profile_to_json(const EmulatorProfile& profile) {
  json j;
  for (int i = 0; i < kJointCategoryCount; ++i) {
    j["probabilities"][std::string(to_string(static_cast<JointCategory>(i)))] =
        profile.category_probs[i];
  }
  j["latency_means_ms"] = {{"detector", profile.detector_latency_mean_ms},
                           {"classifier", profile.classifier_latency_mean_ms}};
  j["seed"] = profile.seed;
  if (!profile.target_checks.empty()) {
    j["target_checks"] = json::array();
    for (const auto& t : profile.target_checks) {
      j["target_checks"].push_back({{"name", t.name},
                                    {"value", t.value},
                                    {"target", t.target},
                                    {"matched", t.matched}});
    }
  }
  return j.dump(2) + "\n";
}

EmulatorProfile profile_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ProfileError(std::string("profile: ") + e.what());
  }

  EmulatorProfile profile;
  profile.category_probs = {0, 0, 0, 0, 0};
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "probabilities") {
        for (const auto& [name, prob] : value.items()) {
          const auto cat = joint_category_from_string(name);
          if (!cat) throw ProfileError("profile: unknown category `" + name + "`");
          profile.category_probs[static_cast<int>(*cat)] = prob.get<double>();
        }
      } else if (key == "latency_means_ms") {
        for (const auto& [name, mean] : value.items()) {
          if (name == "detector")
            profile.detector_latency_mean_ms = mean.get<double>();
          else if (name == "classifier")
            profile.classifier_latency_mean_ms = mean.get<double>();
          else
            throw ProfileError("profile: unknown latency key `" + name + "`");
        }
      } else if (key == "seed") {
        profile.seed = value.get<std::uint64_t>();
      } else if (key == "target_checks") {
        for (const auto& jt : value) {
          profile.target_checks.push_back({jt.at("name").get<std::string>(),
                                           jt.at("value").get<double>(),
                                           jt.at("target").get<double>(),
                                           jt.at("matched").get<bool>()});
        }
      } else {
        throw ProfileError("profile: unknown key `" + key + "`");
      }
    }
  } catch (const json::exception& e) {
    throw ProfileError(std::string("profile: ") + e.what());
  }
  validate_profile(profile);
  return profile;
}

EmulatorProfile load_profile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ProfileError("cannot open profile: " + path.string());
  std::string text{std::istreambuf_iterator<char>(in),
                   std::istreambuf_iterator<char>()};
  return profile_from_json(text);
}

void save_profile(const EmulatorProfile& profile,
                  const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ProfileError("cannot write profile: " + path.string());
  out << profile_to_json(profile);
}

JointOutcome sample_outcome(const EmulatorProfile& profile, ClassLabel truth,
                            const BoundingBox& truth_box, SplitMix64& stream) {
  JointOutcome out;

  const double u = stream.next_unit();
  double cum = 0.0;
  out.category = JointCategory::both_wrong_disagree;
  for (int i = 0; i < kJointCategoryCount; ++i) {
    cum += profile.category_probs[i];
    if (u <= cum) {
      out.category = static_cast<JointCategory>(i);
      break;
    }
  }

  ClassLabel det_label = truth;
  ClassLabel cls_label = truth;
  switch (out.category) {
    case JointCategory::agree_correct:
      break;
    case JointCategory::detector_only_correct: {
      const auto pool = other_classes(truth);
      cls_label = pool[stream.next_below(pool.size())];
      break;
    }
    case JointCategory::classifier_only_correct: {
      const auto pool = other_classes(truth);
      det_label = pool[stream.next_below(pool.size())];
      break;
    }
    case JointCategory::both_wrong_agree: {
      const auto pool = other_classes(truth);
      det_label = cls_label = pool[stream.next_below(pool.size())];
      break;
    }
    case JointCategory::both_wrong_disagree: {
      const auto pool = other_classes(truth);
      det_label = pool[stream.next_below(pool.size())];
      const auto pool2 = other_classes(truth, det_label);
      cls_label = pool2[stream.next_below(pool2.size())];
      break;
    }
  }

  out.detection.label = det_label;
  out.detection.box = truth_box;
  out.detection.confidence = 0.5 + 0.5 * stream.next_unit();
  out.prediction.label = cls_label;
  out.prediction.confidence = 0.5 + 0.5 * stream.next_unit();

  const auto [z0, z1] = stream.next_normal_pair();
  const double dm = profile.detector_latency_mean_ms;
  const double cm = profile.classifier_latency_mean_ms;
  out.detection.latency_ms = std::max(0.0, dm + 0.1 * dm * z0);
  out.prediction.latency_ms = std::max(0.0, cm + 0.1 * cm * z1);
  return out;
}

namespace {

JointOutcome outcome_for(const EmulatorProfile& profile,
                         const std::string& image_id, int index,
                         ClassLabel truth, const BoundingBox& truth_box) {
  SplitMix64 stream(derive_seed(profile.seed, cycle_key(image_id, index)));
  return sample_outcome(profile, truth, truth_box, stream);
}

class EmulatedDetector : public Detector {
 public:
  explicit EmulatedDetector(std::shared_ptr<const EmulatorProfile> profile)
      : profile_(std::move(profile)) {}

  std::vector<Detection> detect(const ImageBuffer*,
                                const ImageContext& ctx) const override {
    std::vector<Detection> out;
    for (std::size_t i = 0; i < ctx.annotations.size(); ++i) {
      const auto& a = ctx.annotations[i];
      const auto box = denormalize(a.box, ctx.width, ctx.height);
      out.push_back(outcome_for(*profile_, ctx.id, static_cast<int>(i),
                                a.label, box)
                        .detection);
    }
    return out;
  }

 private:
  std::shared_ptr<const EmulatorProfile> profile_;
};

class EmulatedClassifier : public Classifier {
 public:
  explicit EmulatedClassifier(std::shared_ptr<const EmulatorProfile> profile)
      : profile_(std::move(profile)) {}

  ClassPrediction classify(const ImageBuffer* crop,
                           const CropContext& ctx) const override {
    require_crop_64(crop);
    if (!ctx.truth) {
      throw ModelError("no ground truth available for crop " + ctx.image_id +
                       "_" + std::to_string(ctx.detection_index));
    }
    // The box plays no part in the draw sequence, so a placeholder keeps
    // this side's stream in lockstep with the detector's.
    return outcome_for(*profile_, ctx.image_id, ctx.detection_index,
                       *ctx.truth, BoundingBox{0, 0, 1, 1})
        .prediction;
  }

 private:
  std::shared_ptr<const EmulatorProfile> profile_;
};

}  // namespace

EmulatedModelPair::EmulatedModelPair(EmulatorProfile profile)
    : profile_(std::move(profile)) {
  validate_profile(profile_);
  auto shared = std::make_shared<const EmulatorProfile>(profile_);
  detector_ = std::make_unique<EmulatedDetector>(shared);
  classifier_ = std::make_unique<EmulatedClassifier>(shared);
}

}  // namespace driftguard
