#include "driftguard/dataset.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "doctest.h"
#include "driftguard/rng.hpp"

using namespace driftguard;
namespace fs = std::filesystem;

namespace {

ImageBuffer random_image(int w, int h, std::uint64_t seed) {
  ImageBuffer img;
  img.width = w;
  img.height = h;
  img.pixels.resize(static_cast<std::size_t>(w) * h * 3);
  SplitMix64 rng(seed);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.next_below(256));
  return img;
}

std::vector<ManifestEntry> plain_entries(int n) {
  std::vector<ManifestEntry> entries;
  for (int i = 0; i < n; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "img%03d", i);
    entries.push_back({std::string(name) + ".ppm", std::string(name) + ".txt",
                       Split::train, std::nullopt});
  }
  return entries;
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

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("class table round-trips") {
  CHECK(class_name(ClassLabel::round_30) == "round_30");
  CHECK(class_name(ClassLabel::stop) == "stop");
  for (int i = 0; i < kClassCount; ++i) {
    const auto label = class_from_id(i);
    REQUIRE(label.has_value());
    CHECK(class_from_name(class_name(*label)) == *label);
  }
  CHECK_FALSE(class_from_id(7).has_value());
  CHECK_FALSE(class_from_id(-1).has_value());
  CHECK_FALSE(class_from_name("yield").has_value());
}

TEST_CASE("annotation parsing accepts well-formed lines") {
  const auto one = parse_annotation("6 0.5 0.5 0.5 0.5\n");
  REQUIRE(one.size() == 1);
  CHECK(one[0].label == ClassLabel::stop);
  CHECK(one[0].box == NormalizedBox{0.5, 0.5, 0.5, 0.5});

  const auto multi = parse_annotation("0 0.25 0.25 0.1 0.2\n\n3 0.75 0.5 0.3 0.4");
  REQUIRE(multi.size() == 2);
  CHECK(multi[0].label == ClassLabel::round_30);
  CHECK(multi[1].label == ClassLabel::square_30);

  CHECK(parse_annotation("").empty());
  CHECK(parse_annotation("\n\n").empty());
}

TEST_CASE("annotation parsing collects every bad line") {
  const std::string text =
      "0 0.5 0.5 0.5 0.5\n"
      "7 0.5 0.5 0.5 0.5\n"    // class out of range
      "1 1.5 0.5 0.5 0.5\n"    // center out of range
      "2 0.5 0.5 0 0.5\n"      // zero extent
      "3 0.5 0.5 0.5\n"        // missing field
      "x 0.5 0.5 0.5 0.5\n";   // class not an integer
  try {
    parse_annotation(text);
    FAIL("expected AnnotationParseError");
  } catch (const AnnotationParseError& e) {
    REQUIRE(e.issues().size() == 5);
    CHECK(e.issues()[0].line == 2);
    CHECK(e.issues()[1].line == 3);
    CHECK(e.issues()[2].line == 4);
    CHECK(e.issues()[3].line == 5);
    CHECK(e.issues()[4].line == 6);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("annotation format round-trips") {
  const std::vector<Annotation> annotations = {
      {ClassLabel::round_60, {0.5, 0.25, 0.125, 0.375}},
      {ClassLabel::stop, {0.1, 0.9, 0.2, 0.05}},
  };
  CHECK(parse_annotation(format_annotation(annotations)) == annotations);
}

TEST_CASE("denormalize scales and rounds outward") {
  CHECK(denormalize({0.5, 0.5, 0.5, 0.5}, 640, 480) ==
        BoundingBox{160, 120, 480, 360});
  // Fractional edges round away from the box center.
  CHECK(denormalize({0.5, 0.5, 0.3, 0.3}, 10, 10) == BoundingBox{3, 3, 7, 7});
  // 0.35 - 0.15 lands just below 0.2 in binary; outward rounding keeps the
  // whole analytic box covered rather than snapping to it.
  CHECK(denormalize({0.35, 0.35, 0.3, 0.3}, 10, 10) == BoundingBox{1, 1, 5, 5});
}

TEST_CASE("denormalize clamps overhang and rejects empty remains") {
  CHECK(denormalize({0.0, 0.5, 0.5, 0.5}, 100, 100) ==
        BoundingBox{0, 25, 25, 75});
  // A box entirely right of the raster clamps to nothing. Reachable only
  // from out-of-contract centers; in-range annotations always keep area.
  CHECK_THROWS_AS(denormalize({2.0, 0.5, 0.5, 0.5}, 100, 100),
                  DegenerateBoxError);
}

TEST_CASE("normalize inverts denormalize on aligned boxes") {
  const NormalizedBox box{0.5, 0.5, 0.5, 0.5};
  CHECK(normalize(denormalize(box, 640, 480), 640, 480) == box);
}

TEST_CASE("crop copies the exact region") {
  const auto img = random_image(10, 8, 21);
  const BoundingBox box{2, 3, 6, 7};
  const auto piece = crop(img, box);
  CHECK(piece.width == 4);
  CHECK(piece.height == 4);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) {
      for (int c = 0; c < 3; ++c) {
        CHECK(piece.at(x, y, c) == img.at(box.x1 + x, box.y1 + y, c));
      }
    }
  }
  CHECK_THROWS_AS(crop(img, BoundingBox{8, 0, 12, 4}), DatasetError);
}

TEST_CASE("resize keeps corners and solid colors") {
  const auto img = random_image(13, 9, 31);
  const auto out = resize_bilinear(img, 64, 64);
  CHECK(out.width == 64);
  CHECK(out.height == 64);
  for (int c = 0; c < 3; ++c) {
    CHECK(out.at(0, 0, c) == img.at(0, 0, c));
    CHECK(out.at(63, 0, c) == img.at(12, 0, c));
    CHECK(out.at(0, 63, c) == img.at(0, 8, c));
    CHECK(out.at(63, 63, c) == img.at(12, 8, c));
  }

  const auto gray = ImageBuffer::filled(5, 3, 77, 88, 99);
  const auto up = resize_bilinear(gray, 64, 64);
  for (const int x : {0, 31, 63}) {
    CHECK(up.at(x, 17, 0) == 77);
    CHECK(up.at(x, 17, 1) == 88);
    CHECK(up.at(x, 17, 2) == 99);
  }

  CHECK(resize_bilinear(img, 13, 9) == img);
  CHECK(resize_64(img).width == 64);
}

TEST_CASE("split slices rounded shares, train takes the rest") {
  const auto ten = split_dataset(plain_entries(10), SplitRatios{}, 0);
  CHECK(ten.counts == SplitCounts{8, 1, 1});

  const auto big = split_dataset(plain_entries(2017), SplitRatios{}, 0);
  CHECK(big.counts == SplitCounts{1613, 202, 202});
  CHECK(big.entries.size() == 2017);
}

TEST_CASE("split shuffle is the pinned fisher-yates walk") {
  // Mirrored by hand from the SplitMix64 word stream for seed 1.
  std::vector<ManifestEntry> entries;
  for (const char* stem : {"e", "d", "c", "b", "a"}) {
    entries.push_back({std::string(stem) + ".ppm", std::string(stem) + ".txt",
                       Split::train, std::nullopt});
  }
  const auto manifest =
      split_dataset(std::move(entries), SplitRatios{0.6, 0.2, 0.2}, 1);
  REQUIRE(manifest.entries.size() == 5);
  std::map<std::string, Split> got;
  for (const auto& e : manifest.entries) got[e.image] = e.split;
  CHECK(got["a.ppm"] == Split::val);
  CHECK(got["b.ppm"] == Split::train);
  CHECK(got["c.ppm"] == Split::train);
  CHECK(got["d.ppm"] == Split::test);
  CHECK(got["e.ppm"] == Split::train);
}

TEST_CASE("split output is ordered by image path and seed-stable") {
  const auto a = split_dataset(plain_entries(20), SplitRatios{}, 7);
  const auto b = split_dataset(plain_entries(20), SplitRatios{}, 7);
  const auto c = split_dataset(plain_entries(20), SplitRatios{}, 8);
  CHECK(a == b);
  CHECK(a != c);
  for (std::size_t i = 1; i < a.entries.size(); ++i) {
    CHECK(a.entries[i - 1].image < a.entries[i].image);
  }
}

TEST_CASE("drifted entries are pinned to test") {
  auto entries = plain_entries(10);
  entries.push_back({"img003_tilt_15.ppm", "img003_tilt_15.txt", Split::train,
                     DriftSpec{DriftKind::tilt, 0.0, 1.0, 15.0, 5}});
  const auto manifest = split_dataset(std::move(entries), SplitRatios{}, 0);
  CHECK(manifest.counts == SplitCounts{8, 2, 1});
  for (const auto& e : manifest.entries) {
    if (e.drift) CHECK(e.split == Split::test);
  }
}

TEST_CASE("split input validation") {
  CHECK_THROWS_AS(split_dataset({}, SplitRatios{}, 0), DatasetError);
  CHECK_THROWS_AS(split_dataset(plain_entries(10), SplitRatios{0.5, 0.2, 0.2}, 0),
                  DatasetError);
  CHECK_THROWS_AS(split_dataset(plain_entries(2), SplitRatios{}, 0),
                  DatasetError);
}

TEST_CASE("manifest json round-trips byte-identically") {
  auto entries = plain_entries(6);
  entries.push_back({"img001_gaussian_noise_10.ppm", "img001_gaussian_noise_10.txt",
                     Split::train,
                     DriftSpec{DriftKind::gaussian_noise, 10.0, 1.0, 0.0, 42}});
  const auto manifest = split_dataset(std::move(entries), SplitRatios{}, 3);

  const auto text = manifest_to_json(manifest);
  const auto back = manifest_from_json(text);
  CHECK(back == manifest);
  CHECK(manifest_to_json(back) == text);
}

TEST_CASE("manifest json rejects unknown keys") {
  const auto manifest = split_dataset(plain_entries(5), SplitRatios{}, 0);
  auto text = manifest_to_json(manifest);
  text.insert(text.rfind('}'), ",\"extra\": 1");
  CHECK_THROWS_AS(manifest_from_json(text), DatasetError);
}

TEST_CASE("classifier dataset build, audit and tampering") {
  ScratchDir scratch("dg_dataset_build");
  const auto images = scratch.path / "images";
  const auto labels = scratch.path / "labels";
  fs::create_directories(images);
  fs::create_directories(labels);

  std::vector<ManifestEntry> entries;
  for (int i = 0; i < 4; ++i) {
    char stem[16];
    std::snprintf(stem, sizeof(stem), "img%03d", i);
    save_ppm(random_image(96, 72, 100 + i), images / (std::string(stem) + ".ppm"));
    std::ofstream label(labels / (std::string(stem) + ".txt"));
    label << "0 0.5 0.5 0.5 0.5\n6 0.25 0.25 0.2 0.2\n";
    entries.push_back({"images/" + std::string(stem) + ".ppm",
                       "labels/" + std::string(stem) + ".txt", Split::train,
                       std::nullopt});
  }

  const auto manifest = split_dataset(std::move(entries), SplitRatios{0.5, 0.25, 0.25}, 0);
  const auto out_dir = scratch.path / "crops";
  const auto report = build_classifier_dataset(manifest, scratch.path, out_dir);
  CHECK(report.issues.empty());
  CHECK(report.images_processed == 4);
  CHECK(report.crops_written == 8);
  CHECK(fs::exists(out_dir / "img000_0_round_30.ppm"));
  CHECK(fs::exists(out_dir / "img000_1_stop.ppm"));
  for (const auto& row : report.rows) {
    const auto img = load_ppm(out_dir / row.crop_path);
    CHECK(img.width == 64);
    CHECK(img.height == 64);
  }

  const auto index_path = out_dir / "index.csv";
  REQUIRE(fs::exists(index_path));
  {
    std::ifstream in(index_path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "crop_path,source_image,class_id,x1,y1,x2,y2");
  }

  auto audit = audit_classifier_dataset(index_path, scratch.path);
  CHECK(audit.ok());
  CHECK(audit.rows_checked == 8);

  // Flip one byte in a crop; the audit must name exactly that file.
  const auto victim = out_dir / "img002_0_round_30.ppm";
  auto img = load_ppm(victim);
  img.pixels[40] ^= 0x01;
  save_ppm(img, victim);
  audit = audit_classifier_dataset(index_path, scratch.path);
  CHECK_FALSE(audit.ok());
  REQUIRE(audit.issues.size() == 1);
  CHECK(audit.issues[0].crop_path == "img002_0_round_30.ppm");

  // A deleted crop is reported too.
  fs::remove(victim);
  audit = audit_classifier_dataset(index_path, scratch.path);
  REQUIRE(audit.issues.size() == 1);
  CHECK(audit.issues[0].crop_path == "img002_0_round_30.ppm");
}

TEST_CASE("classifier dataset build reports broken inputs and continues") {
  ScratchDir scratch("dg_dataset_badbuild");
  save_ppm(random_image(50, 50, 1), scratch.path / "good.ppm");
  {
    std::ofstream label(scratch.path / "good.txt");
    label << "2 0.5 0.5 0.4 0.4\n";
  }
  {
    std::ofstream label(scratch.path / "missing.txt");
    label << "0 0.5 0.5 0.4 0.4\n";
  }

  DatasetManifest manifest;
  manifest.entries = {
      {"good.ppm", "good.txt", Split::train, std::nullopt},
      {"missing.ppm", "missing.txt", Split::train, std::nullopt},
  };
  manifest.counts = {2, 0, 0};

  const auto report = build_classifier_dataset(manifest, scratch.path,
                                               scratch.path / "crops");
  CHECK(report.crops_written == 1);
  REQUIRE(report.issues.size() == 1);
  CHECK(report.issues[0].path == "missing.ppm");
}

TEST_CASE("crop index csv round-trips") {
  const std::vector<CropRecord> rows = {
      {"a_0_stop.ppm", "images/a.ppm", 6, {1, 2, 3, 4}},
      {"b_1_round_60.ppm", "images/b.ppm", 1, {10, 20, 30, 40}},
  };
  CHECK(index_from_csv(index_to_csv(rows)) == rows);
}

}  // TEST_SUITE
