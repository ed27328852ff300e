#include "driftguard/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "driftguard/rng.hpp"

namespace driftguard {

namespace {

constexpr std::array<std::string_view, kClassCount> kClassNames = {
    "round_30", "round_60", "round_90", "square_30",
    "square_60", "square_90", "stop"};

// Shortest round-trip decimal for doubles; keeps rewritten label and
// manifest files byte-stable.
std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

std::string_view class_name(ClassLabel label) {
  return kClassNames[static_cast<std::size_t>(label)];
}

std::optional<ClassLabel> class_from_id(int id) {
  if (id < 0 || id >= kClassCount) return std::nullopt;
  return static_cast<ClassLabel>(id);
}

std::optional<ClassLabel> class_from_name(std::string_view name) {
  for (int i = 0; i < kClassCount; ++i) {
    if (name == kClassNames[i]) return static_cast<ClassLabel>(i);
  }
  return std::nullopt;
}

AnnotationParseError::AnnotationParseError(std::vector<AnnotationIssue> issues)
    : std::runtime_error(issues.empty()
                             ? "annotation parse error"
                             : "annotation parse error at line " +
                                   std::to_string(issues.front().line) + ": " +
                                   issues.front().message),
      issues_(std::move(issues)) {}

std::vector<Annotation> parse_annotation(std::string_view text) {
  std::vector<Annotation> out;
  std::vector<AnnotationIssue> issues;

  std::istringstream lines{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream fields(line);
    std::vector<std::string> toks;
    std::string tok;
    while (fields >> tok) toks.push_back(tok);
    if (toks.empty()) continue;
    if (toks.size() != 5) {
      issues.push_back({lineno, "expected 5 fields, got " +
                                    std::to_string(toks.size())});
      continue;
    }

    int class_id = 0;
    {
      const char* b = toks[0].data();
      const char* e = b + toks[0].size();
      const auto [ptr, ec] = std::from_chars(b, e, class_id);
      if (ec != std::errc() || ptr != e) {
        issues.push_back({lineno, "class id `" + toks[0] + "` is not an integer"});
        continue;
      }
    }
    const auto label = class_from_id(class_id);
    if (!label) {
      issues.push_back({lineno, "class id " + std::to_string(class_id) +
                                    " outside [0, 6]"});
      continue;
    }

    double values[4];
    bool bad = false;
    for (int i = 0; i < 4; ++i) {
      const std::string& t = toks[i + 1];
      const auto [ptr, ec] =
          std::from_chars(t.data(), t.data() + t.size(), values[i]);
      if (ec != std::errc() || ptr != t.data() + t.size()) {
        issues.push_back({lineno, "field `" + t + "` is not a number"});
        bad = true;
        break;
      }
    }
    if (bad) continue;

    const double cx = values[0], cy = values[1], w = values[2], h = values[3];
    if (cx < 0.0 || cx > 1.0 || cy < 0.0 || cy > 1.0) {
      issues.push_back({lineno, "center outside [0, 1]"});
      continue;
    }
    if (w <= 0.0 || w > 1.0 || h <= 0.0 || h > 1.0) {
      issues.push_back({lineno, "extent outside (0, 1]"});
      continue;
    }
    out.push_back({*label, {cx, cy, w, h}});
  }

  if (!issues.empty()) throw AnnotationParseError(std::move(issues));
  return out;
}

std::string format_annotation(const std::vector<Annotation>& annotations) {
  std::string out;
  for (const auto& a : annotations) {
    out += std::to_string(static_cast<int>(a.label));
    out += ' ';
    out += format_double(a.box.cx);
    out += ' ';
    out += format_double(a.box.cy);
    out += ' ';
    out += format_double(a.box.w);
    out += ' ';
    out += format_double(a.box.h);
    out += '\n';
  }
  return out;
}

BoundingBox denormalize(const NormalizedBox& box, int width, int height) {
  const double raw_x1 = (box.cx - box.w / 2.0) * width;
  const double raw_y1 = (box.cy - box.h / 2.0) * height;
  const double raw_x2 = (box.cx + box.w / 2.0) * width;
  const double raw_y2 = (box.cy + box.h / 2.0) * height;

  const double cx1 = std::clamp(raw_x1, 0.0, static_cast<double>(width));
  const double cy1 = std::clamp(raw_y1, 0.0, static_cast<double>(height));
  const double cx2 = std::clamp(raw_x2, 0.0, static_cast<double>(width));
  const double cy2 = std::clamp(raw_y2, 0.0, static_cast<double>(height));

  BoundingBox out;
  out.x1 = static_cast<int>(std::floor(cx1));
  out.y1 = static_cast<int>(std::floor(cy1));
  out.x2 = static_cast<int>(std::ceil(cx2));
  out.y2 = static_cast<int>(std::ceil(cy2));
  if (out.x1 >= out.x2 || out.y1 >= out.y2) {
    throw DegenerateBoxError("box degenerate after clamping");
  }
  return out;
}

NormalizedBox normalize(const BoundingBox& box, int width, int height) {
  NormalizedBox out;
  out.cx = (box.x1 + box.x2) / 2.0 / width;
  out.cy = (box.y1 + box.y2) / 2.0 / height;
  out.w = static_cast<double>(box.width()) / width;
  out.h = static_cast<double>(box.height()) / height;
  return out;
}

ImageBuffer crop(const ImageBuffer& img, const BoundingBox& box) {
  if (box.x1 < 0 || box.y1 < 0 || box.x2 > img.width || box.y2 > img.height ||
      box.x1 >= box.x2 || box.y1 >= box.y2) {
    throw DatasetError("crop box out of bounds");
  }
  ImageBuffer out;
  out.width = box.width();
  out.height = box.height();
  out.pixels.resize(static_cast<std::size_t>(out.width) * out.height * 3);
  for (int y = 0; y < out.height; ++y) {
    const auto src = img.pixels.begin() + img.index(box.x1, box.y1 + y, 0);
    std::copy(src, src + static_cast<std::ptrdiff_t>(out.width) * 3,
              out.pixels.begin() + out.index(0, y, 0));
  }
  return out;
}

ImageBuffer resize_bilinear(const ImageBuffer& img, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) throw DatasetError("resize target must be >= 1x1");
  if (out_w == img.width && out_h == img.height) return img;

  ImageBuffer out;
  out.width = out_w;
  out.height = out_h;
  out.pixels.resize(static_cast<std::size_t>(out_w) * out_h * 3);
  for (int y = 0; y < out_h; ++y) {
    // Corner-aligned mapping; the products stay integral where they should,
    // so corners and same-size copies are exact.
    const double sy =
        out_h > 1 ? static_cast<double>(y) * (img.height - 1) / (out_h - 1) : 0.0;
    for (int x = 0; x < out_w; ++x) {
      const double sx =
          out_w > 1 ? static_cast<double>(x) * (img.width - 1) / (out_w - 1) : 0.0;
      const auto rgb = bilinear_sample(img, sx, sy);
      out.at(x, y, 0) = rgb[0];
      out.at(x, y, 1) = rgb[1];
      out.at(x, y, 2) = rgb[2];
    }
  }
  return out;
}

ImageBuffer resize_64(const ImageBuffer& img) { return resize_bilinear(img, 64, 64); }

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::test: return "test";
    case Split::val: return "val";
  }
  return "?";
}

std::optional<Split> split_from_string(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "test") return Split::test;
  if (name == "val") return Split::val;
  return std::nullopt;
}

DatasetManifest split_dataset(std::vector<ManifestEntry> entries,
                              const SplitRatios& ratios, std::uint64_t seed) {
  if (entries.empty()) throw DatasetError("no entries to split");
  if (ratios.train < 0 || ratios.test < 0 || ratios.val < 0 ||
      std::abs(ratios.train + ratios.test + ratios.val - 1.0) > 1e-9) {
    throw DatasetError("split ratios must be nonnegative and sum to 1");
  }

  std::vector<ManifestEntry> standard;
  std::vector<ManifestEntry> drifted;
  for (auto& e : entries) {
    (e.drift ? drifted : standard).push_back(std::move(e));
  }

  const int positive_splits = (ratios.train > 0) + (ratios.test > 0) + (ratios.val > 0);
  if (!standard.empty() &&
      standard.size() < static_cast<std::size_t>(positive_splits)) {
    throw DatasetError("fewer entries than splits");
  }

  std::sort(standard.begin(), standard.end(),
            [](const auto& a, const auto& b) { return a.image < b.image; });

  // Fisher-Yates on the path-sorted list; the walk is part of the manifest
  // contract, so the index draw stays plain modulo.
  SplitMix64 rng(seed);
  for (std::size_t i = standard.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next_below(i));
    std::swap(standard[i - 1], standard[j]);
  }

  const auto n = static_cast<long>(standard.size());
  const long n_test = std::lround(n * ratios.test);
  const long n_val = std::lround(n * ratios.val);
  const long n_train = n - n_test - n_val;
  for (long i = 0; i < n; ++i) {
    standard[static_cast<std::size_t>(i)].split =
        i < n_train ? Split::train : (i < n_train + n_test ? Split::test : Split::val);
  }
  for (auto& e : drifted) e.split = Split::test;

  DatasetManifest manifest;
  manifest.seed = seed;
  manifest.entries = std::move(standard);
  manifest.entries.insert(manifest.entries.end(),
                          std::make_move_iterator(drifted.begin()),
                          std::make_move_iterator(drifted.end()));
  std::sort(manifest.entries.begin(), manifest.entries.end(),
            [](const auto& a, const auto& b) { return a.image < b.image; });
  for (const auto& e : manifest.entries) {
    switch (e.split) {
      case Split::train: ++manifest.counts.train; break;
      case Split::test: ++manifest.counts.test; break;
      case Split::val: ++manifest.counts.val; break;
    }
  }
  return manifest;
}

namespace {

using nlohmann::json;

json drift_to_json(const DriftSpec& spec) {
  json j;
  j["kind"] = std::string(to_string(spec.kind));
  switch (spec.kind) {
    case DriftKind::gaussian_noise: j["sigma"] = spec.sigma; break;
    case DriftKind::brightness: j["gain"] = spec.gain; break;
    case DriftKind::tilt: j["angle"] = spec.angle; break;
  }
  j["seed"] = spec.seed;
  return j;
}

DriftSpec drift_from_json(const json& j) {
  DriftSpec spec;
  const auto kind = drift_kind_from_string(j.at("kind").get<std::string>());
  if (!kind) throw DatasetError("manifest: unknown drift kind");
  spec.kind = *kind;
  for (const auto& [key, value] : j.items()) {
    if (key == "kind") continue;
    if (key == "sigma") spec.sigma = value.get<double>();
    else if (key == "gain") spec.gain = value.get<double>();
    else if (key == "angle") spec.angle = value.get<double>();
    else if (key == "seed") spec.seed = value.get<std::uint64_t>();
    else throw DatasetError("manifest: unknown drift key `" + key + "`");
  }
  return spec;
}

}  // namespace

std::string manifest_to_json(const DatasetManifest& manifest) {
  json j;
  j["seed"] = manifest.seed;
  j["counts"] = {{"train", manifest.counts.train},
                 {"test", manifest.counts.test},
                 {"val", manifest.counts.val}};
  j["resize_interpolation"] = manifest.resize_interpolation;
  j["entries"] = json::array();
  for (const auto& e : manifest.entries) {
    json je;
    je["image"] = e.image;
    je["labels"] = e.labels;
    je["split"] = std::string(to_string(e.split));
    if (e.drift) je["drift"] = drift_to_json(*e.drift);
    j["entries"].push_back(std::move(je));
  }
  return j.dump(2) + "\n";
}

DatasetManifest manifest_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DatasetError(std::string("manifest: ") + e.what());
  }

  DatasetManifest manifest;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "seed") manifest.seed = value.get<std::uint64_t>();
      else if (key == "resize_interpolation")
        manifest.resize_interpolation = value.get<std::string>();
      else if (key == "counts") {
        for (const auto& [ck, cv] : value.items()) {
          if (ck == "train") manifest.counts.train = cv.get<int>();
          else if (ck == "test") manifest.counts.test = cv.get<int>();
          else if (ck == "val") manifest.counts.val = cv.get<int>();
          else throw DatasetError("manifest: unknown counts key `" + ck + "`");
        }
      } else if (key == "entries") {
        for (const auto& je : value) {
          ManifestEntry e;
          for (const auto& [ek, ev] : je.items()) {
            if (ek == "image") e.image = ev.get<std::string>();
            else if (ek == "labels") e.labels = ev.get<std::string>();
            else if (ek == "split") {
              const auto s = split_from_string(ev.get<std::string>());
              if (!s) throw DatasetError("manifest: bad split tag");
              e.split = *s;
            } else if (ek == "drift") {
              e.drift = drift_from_json(ev);
            } else {
              throw DatasetError("manifest: unknown entry key `" + ek + "`");
            }
          }
          manifest.entries.push_back(std::move(e));
        }
      } else {
        throw DatasetError("manifest: unknown key `" + key + "`");
      }
    }
  } catch (const json::exception& e) {
    throw DatasetError(std::string("manifest: ") + e.what());
  }
  return manifest;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open manifest: " + path.string());
  std::string text{std::istreambuf_iterator<char>(in),
                   std::istreambuf_iterator<char>()};
  return manifest_from_json(text);
}

void save_manifest(const DatasetManifest& manifest,
                   const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DatasetError("cannot write manifest: " + path.string());
  out << manifest_to_json(manifest);
}

}  // namespace driftguard
