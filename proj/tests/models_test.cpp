#include "driftguard/models.hpp"

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "driftguard/rng.hpp"

using namespace driftguard;
namespace fs = std::filesystem;

namespace {

ImageContext two_object_context() {
  ImageContext ctx;
  ctx.id = "frame_007";
  ctx.width = 640;
  ctx.height = 480;
  ctx.annotations = {
      {ClassLabel::stop, {0.5, 0.5, 0.5, 0.5}},
      {ClassLabel::round_60, {0.25, 0.25, 0.2, 0.2}},
  };
  return ctx;
}

struct ScratchDir {
  fs::path path;
  explicit ScratchDir(const char* name)
      : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~ScratchDir() { fs::remove_all(path); }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

}  // namespace

TEST_SUITE("models") {

TEST_CASE("oracle detector echoes ground truth in annotation order") {
  const auto ctx = two_object_context();
  const OracleDetector oracle;
  const auto detections = oracle.detect(nullptr, ctx);
  REQUIRE(detections.size() == 2);
  CHECK(detections[0].label == ClassLabel::stop);
  CHECK(detections[0].box == BoundingBox{160, 120, 480, 360});
  CHECK(detections[0].confidence == 1.0);
  CHECK(detections[1].label == ClassLabel::round_60);
  CHECK(detections[1].box == denormalize({0.25, 0.25, 0.2, 0.2}, 640, 480));
}

TEST_CASE("oracle error injection at the extremes") {
  const auto ctx = two_object_context();

  const OracleDetector always_miss({1.0, 0.0, std::nullopt, 0});
  CHECK(always_miss.detect(nullptr, ctx).empty());

  const OracleDetector always_wrong({0.0, 1.0, std::nullopt, 0});
  const auto wrong = always_wrong.detect(nullptr, ctx);
  REQUIRE(wrong.size() == 2);
  CHECK(wrong[0].label != ClassLabel::stop);
  CHECK(wrong[1].label != ClassLabel::round_60);
}

TEST_CASE("oracle injection is per-image deterministic") {
  const auto ctx = two_object_context();
  const OracleDetector a({0.5, 0.5, std::nullopt, 9});
  const OracleDetector b({0.5, 0.5, std::nullopt, 9});
  CHECK(a.detect(nullptr, ctx) == b.detect(nullptr, ctx));
}

TEST_CASE("confusion bias steers every wrong label") {
  // All wrong mass on square_90.
  std::array<std::array<double, kClassCount>, kClassCount> bias{};
  for (auto& row : bias) row[static_cast<int>(ClassLabel::square_90)] = 1.0;

  const OracleDetector skewed({0.0, 1.0, bias, 3});
  for (const auto& d : skewed.detect(nullptr, two_object_context())) {
    CHECK(d.label == ClassLabel::square_90);
  }
}

TEST_CASE("oracle classifier needs truth and a 64x64 crop") {
  const OracleClassifier oracle;
  CropContext ctx{"frame_007", 0, ClassLabel::stop};
  CHECK(oracle.classify(nullptr, ctx).label == ClassLabel::stop);

  const auto crop = ImageBuffer::filled(64, 64, 1, 2, 3);
  CHECK(oracle.classify(&crop, ctx).label == ClassLabel::stop);

  const auto small = ImageBuffer::filled(32, 32, 1, 2, 3);
  CHECK_THROWS_AS(oracle.classify(&small, ctx), ModelError);

  CropContext no_truth{"frame_007", 0, std::nullopt};
  CHECK_THROWS_AS(oracle.classify(nullptr, no_truth), ModelError);
}

TEST_CASE("replay detector serves records and reports gaps") {
  ScratchDir scratch("dg_replay_det");
  const auto path = scratch.path / "detector.jsonl";
  write_text(path,
             "{\"image\": \"a\", \"detections\": [{\"class_id\": 6, "
             "\"confidence\": 0.9, \"cx\": 0.5, \"cy\": 0.5, \"w\": 0.5, "
             "\"h\": 0.5}]}\n"
             "{\"image\": \"b\", \"detections\": []}\n");
  const auto replay = ReplayDetector::from_file(path);

  ImageContext ctx;
  ctx.id = "a";
  ctx.width = 640;
  ctx.height = 480;
  const auto detections = replay.detect(nullptr, ctx);
  REQUIRE(detections.size() == 1);
  CHECK(detections[0].label == ClassLabel::stop);
  CHECK(detections[0].confidence == 0.9);
  CHECK(detections[0].box == BoundingBox{160, 120, 480, 360});

  ctx.id = "b";
  CHECK(replay.detect(nullptr, ctx).empty());

  CHECK(replay.find("a") != nullptr);
  CHECK(replay.find("missing") == nullptr);
  ctx.id = "missing";
  CHECK_THROWS_AS(replay.detect(nullptr, ctx), ModelError);
}

TEST_CASE("replay classifier keys on the crop filename") {
  ScratchDir scratch("dg_replay_cls");
  const auto path = scratch.path / "classifier.jsonl";
  write_text(path,
             "{\"crop\": \"crops/a_0.ppm\", \"class_id\": 2, \"confidence\": 0.8}\n");
  const auto replay = ReplayClassifier::from_file(path);

  CHECK(replay.has("a_0.ppm"));
  CHECK_FALSE(replay.has("a_1.ppm"));

  const auto p = replay.classify(nullptr, {"a", 0, std::nullopt});
  CHECK(p.label == ClassLabel::round_90);
  CHECK(p.confidence == 0.8);
  CHECK_THROWS_AS(replay.classify(nullptr, {"a", 1, std::nullopt}), ModelError);
}

TEST_CASE("replay files are validated line by line") {
  ScratchDir scratch("dg_replay_bad");
  const auto check_throws = [&](const char* name, const std::string& text,
                                const char* needle) {
    const auto path = scratch.path / name;
    write_text(path, text);
    try {
      ReplayDetector::from_file(path);
      FAIL("expected ModelError for " << name);
    } catch (const ModelError& e) {
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };

  check_throws("dup.jsonl",
               "{\"image\": \"a\", \"detections\": []}\n"
               "{\"image\": \"a\", \"detections\": []}\n",
               ":2: duplicate record");
  check_throws("class.jsonl",
               "{\"image\": \"a\", \"detections\": [{\"class_id\": 9, "
               "\"confidence\": 0.5, \"cx\": 0.5, \"cy\": 0.5, \"w\": 0.1, "
               "\"h\": 0.1}]}\n",
               "outside [0, 6]");
  check_throws("conf.jsonl",
               "{\"image\": \"a\", \"detections\": [{\"class_id\": 1, "
               "\"confidence\": 1.5, \"cx\": 0.5, \"cy\": 0.5, \"w\": 0.1, "
               "\"h\": 0.1}]}\n",
               "outside [0, 1]");
  check_throws("junk.jsonl", "not json\n", ":1:");
  check_throws("field.jsonl", "{\"image\": \"a\"}\n", ":1:");
}

TEST_CASE("fit_profile turns counts into proportions") {
  const auto profile = fit_profile({466, 15, 105, 2, 12}, 600, 5);
  CHECK(profile.seed == 5);
  CHECK(profile.category_probs[0] == doctest::Approx(466.0 / 600.0).epsilon(1e-12));
  CHECK(profile.category_probs[1] == doctest::Approx(0.025).epsilon(1e-12));
  CHECK(profile.category_probs[2] == doctest::Approx(0.175).epsilon(1e-12));
  CHECK(profile.category_probs[3] == doctest::Approx(2.0 / 600.0).epsilon(1e-12));
  CHECK(profile.category_probs[4] == doctest::Approx(0.02).epsilon(1e-12));
}

TEST_CASE("the shipped calibration hits five reference figures, misses two") {
  // The published counts are mutually inconsistent; no profile can match
  // all seven. The chosen completion keeps the classifier marginal and the
  // disagreement figures, and the checks say so.
  const auto profile = default_drift_profile();
  REQUIRE(profile.target_checks.size() == 7);

  const auto find = [&](std::string_view name) -> const TargetCheck& {
    for (const auto& t : profile.target_checks) {
      if (t.name == name) return t;
    }
    throw std::logic_error("no check named " + std::string(name));
  };

  CHECK_FALSE(find("detector_accuracy").matched);
  CHECK(find("detector_accuracy").value ==
        doctest::Approx(481.0 / 600.0).epsilon(1e-12));
  CHECK(find("detector_accuracy").target ==
        doctest::Approx(488.0 / 600.0).epsilon(1e-12));
  CHECK(find("classifier_accuracy").matched);
  CHECK(find("detector_only_rate").matched);
  CHECK(find("classifier_only_rate").matched);
  CHECK(find("single_model_disagreement_rate").matched);
  CHECK(find("agree_wrong_rate").matched);
  CHECK_FALSE(find("hybrid_accuracy").matched);
  CHECK(find("hybrid_accuracy").target ==
        doctest::Approx(583.0 / 600.0).epsilon(1e-12));
}

TEST_CASE("fit_profile rejects inconsistent counts") {
  CHECK_THROWS_AS(fit_profile({1, 0, 0, 0, 0}, 2, 0), ProfileError);
  CHECK_THROWS_AS(fit_profile({-1, 1, 0, 0, 0}, 0, 0), ProfileError);
  CHECK_THROWS_AS(fit_profile({0, 0, 0, 0, 0}, 0, 0), ProfileError);
}

TEST_CASE("validate_profile guards the probability simplex") {
  EmulatorProfile profile = default_drift_profile();
  CHECK_NOTHROW(validate_profile(profile));

  profile.category_probs[0] -= 0.1;
  CHECK_THROWS_AS(validate_profile(profile), ProfileError);

  // Negative cell with the sum still 1: the sign check must fire.
  profile = default_drift_profile();
  profile.category_probs[0] += 2.0 * profile.category_probs[1];
  profile.category_probs[1] = -profile.category_probs[1];
  CHECK_THROWS_AS(validate_profile(profile), ProfileError);

  profile = default_drift_profile();
  profile.detector_latency_mean_ms = -1.0;
  CHECK_THROWS_AS(validate_profile(profile), ProfileError);
}

TEST_CASE("profile json round-trips byte-identically") {
  const auto profile = default_drift_profile(11);
  const auto text = profile_to_json(profile);
  const auto back = profile_from_json(text);
  CHECK(back.category_probs == profile.category_probs);
  CHECK(back.seed == profile.seed);
  CHECK(back.target_checks.size() == profile.target_checks.size());
  CHECK(profile_to_json(back) == text);
}

TEST_CASE("profile json rejects unknown keys and bad simplices") {
  CHECK_THROWS_AS(profile_from_json("{\"probability\": {}}"), ProfileError);
  CHECK_THROWS_AS(profile_from_json("{\"probabilities\": {\"nap\": 1.0}}"),
                  ProfileError);
  // Valid JSON, but the probabilities do not sum to 1.
  CHECK_THROWS_AS(
      profile_from_json("{\"probabilities\": {\"agree_correct\": 0.5}}"),
      ProfileError);
}

TEST_CASE("sample_outcome respects the drawn category") {
  const auto profile = default_drift_profile();
  const BoundingBox box{10, 10, 50, 50};
  SplitMix64 stream(2024);

  std::array<long, kJointCategoryCount> seen{};
  for (int i = 0; i < 3000; ++i) {
    const auto truth = static_cast<ClassLabel>(i % kClassCount);
    const auto outcome = sample_outcome(profile, truth, box, stream);
    ++seen[static_cast<int>(outcome.category)];

    const bool det_right = outcome.detection.label == truth;
    const bool cls_right = outcome.prediction.label == truth;
    switch (outcome.category) {
      case JointCategory::agree_correct:
        CHECK(det_right);
        CHECK(cls_right);
        break;
      case JointCategory::detector_only_correct:
        CHECK(det_right);
        CHECK_FALSE(cls_right);
        break;
      case JointCategory::classifier_only_correct:
        CHECK_FALSE(det_right);
        CHECK(cls_right);
        break;
      case JointCategory::both_wrong_agree:
        CHECK_FALSE(det_right);
        CHECK(outcome.detection.label == outcome.prediction.label);
        break;
      case JointCategory::both_wrong_disagree:
        CHECK_FALSE(det_right);
        CHECK_FALSE(cls_right);
        CHECK(outcome.detection.label != outcome.prediction.label);
        break;
    }

    CHECK(outcome.detection.box == box);
    CHECK(outcome.detection.confidence >= 0.5);
    CHECK(outcome.detection.confidence < 1.0);
    CHECK(outcome.prediction.confidence >= 0.5);
    CHECK(outcome.detection.latency_ms >= 0.0);
    CHECK(outcome.prediction.latency_ms >= 0.0);
  }
  // Every category shows up at these odds (P(none) < 1e-4 for the rarest).
  for (const long count : seen) CHECK(count > 0);
}

TEST_CASE("category frequencies pass a chi-square fit") {
  const auto profile = default_drift_profile();
  SplitMix64 stream(99);
  const long n = 100000;
  std::array<long, kJointCategoryCount> observed{};
  for (long i = 0; i < n; ++i) {
    const auto outcome =
        sample_outcome(profile, ClassLabel::stop, {0, 0, 1, 1}, stream);
    ++observed[static_cast<int>(outcome.category)];
  }
  double chi2 = 0.0;
  for (int i = 0; i < kJointCategoryCount; ++i) {
    const double expected = profile.category_probs[i] * n;
    const double d = observed[i] - expected;
    chi2 += d * d / expected;
  }
  // df = 4, p = 0.001 critical value.
  CHECK(chi2 < 18.467);
}

TEST_CASE("latency draws center on the profile means") {
  const auto profile = default_drift_profile();
  SplitMix64 stream(123);
  const int n = 20000;
  double det_sum = 0.0, cls_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto outcome =
        sample_outcome(profile, ClassLabel::round_30, {0, 0, 1, 1}, stream);
    det_sum += outcome.detection.latency_ms;
    cls_sum += outcome.prediction.latency_ms;
  }
  CHECK(det_sum / n == doctest::Approx(2.4).epsilon(0.01));
  CHECK(cls_sum / n == doctest::Approx(28.34).epsilon(0.01));
}

TEST_CASE("emulated pair re-derives one joint outcome from both sides") {
  const EmulatedModelPair pair(default_drift_profile(7));
  const auto ctx = two_object_context();

  // Classifier first: call order must not matter.
  std::array<ClassPrediction, 2> predictions;
  for (int k = 0; k < 2; ++k) {
    predictions[k] = pair.classifier().classify(
        nullptr, {ctx.id, k, ctx.annotations[k].label});
  }
  const auto detections = pair.detector().detect(nullptr, ctx);
  REQUIRE(detections.size() == 2);

  for (int k = 0; k < 2; ++k) {
    SplitMix64 stream(derive_seed(7, ctx.id + "#" + std::to_string(k)));
    const auto expected = sample_outcome(
        default_drift_profile(7), ctx.annotations[k].label,
        denormalize(ctx.annotations[k].box, ctx.width, ctx.height), stream);
    CHECK(detections[k] == expected.detection);
    CHECK(predictions[k].label == expected.prediction.label);
    CHECK(predictions[k].confidence == expected.prediction.confidence);
    CHECK(predictions[k].latency_ms == expected.prediction.latency_ms);
  }
}

TEST_CASE("joint category names round-trip") {
  for (int i = 0; i < kJointCategoryCount; ++i) {
    const auto c = static_cast<JointCategory>(i);
    CHECK(joint_category_from_string(to_string(c)) == c);
  }
  CHECK_FALSE(joint_category_from_string("nearly_correct").has_value());
}

}  // TEST_SUITE
