#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "driftguard/drift.hpp"
#include "driftguard/geometry.hpp"
#include "driftguard/image.hpp"

namespace driftguard {

/// The seven sign classes, ids fixed in this listing order. The order is
/// part of every file format (annotations, replay records, crop names).
enum class ClassLabel : int {
  round_30 = 0,
  round_60 = 1,
  round_90 = 2,
  square_30 = 3,
  square_60 = 4,
  square_90 = 5,
  stop = 6,
};

inline constexpr int kClassCount = 7;

std::string_view class_name(ClassLabel label);
std::optional<ClassLabel> class_from_id(int id);
std::optional<ClassLabel> class_from_name(std::string_view name);

struct Annotation {
  ClassLabel label = ClassLabel::round_30;
  NormalizedBox box;

  bool operator==(const Annotation&) const = default;
};

/// Annotation parsing: one `class cx cy w h` line per object.
struct AnnotationIssue {
  int line;
  std::string message;
};

class AnnotationParseError : public std::runtime_error {
 public:
  explicit AnnotationParseError(std::vector<AnnotationIssue> issues);
  const std::vector<AnnotationIssue>& issues() const { return issues_; }

 private:
  std::vector<AnnotationIssue> issues_;
};

/// Parses annotation text, throwing AnnotationParseError with every bad line
/// if any line is malformed. Empty text yields an empty list.
std::vector<Annotation> parse_annotation(std::string_view text);

std::string format_annotation(const std::vector<Annotation>& annotations);

class DegenerateBoxError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Normalized -> pixel box: scale, clamp to the image, then round outward
/// (floor the mins, ceil the maxes). Throws DegenerateBoxError when clamping
/// leaves no area.
BoundingBox denormalize(const NormalizedBox& box, int width, int height);

/// Inverse of denormalize up to rounding; used when labels are rewritten
/// after geometric drift.
NormalizedBox normalize(const BoundingBox& box, int width, int height);

/// Exact pixel copy of the box region. The box must already be in bounds.
ImageBuffer crop(const ImageBuffer& img, const BoundingBox& box);

/// Bilinear resample to out_w x out_h with corner-aligned sampling, so
/// output corners reproduce input corners exactly.
ImageBuffer resize_bilinear(const ImageBuffer& img, int out_w, int out_h);

/// The classifier's fixed input size.
ImageBuffer resize_64(const ImageBuffer& img);

enum class Split { train, test, val };

std::string_view to_string(Split split);
std::optional<Split> split_from_string(std::string_view name);

struct ManifestEntry {
  std::string image;   // path, relative to the manifest's directory
  std::string labels;  // annotation file path, same convention
  Split split = Split::train;
  std::optional<DriftSpec> drift;

  bool operator==(const ManifestEntry&) const = default;
};

struct SplitCounts {
  int train = 0;
  int test = 0;
  int val = 0;

  bool operator==(const SplitCounts&) const = default;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::uint64_t seed = 0;
  SplitCounts counts;
  std::string resize_interpolation = "bilinear";

  bool operator==(const DatasetManifest&) const = default;
};

struct SplitRatios {
  double train = 0.8;
  double test = 0.1;
  double val = 0.1;
};

class DatasetError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Deterministic split: entries are ordered by image path, shuffled with a
/// SplitMix64 Fisher-Yates walk on `seed`, then sliced [train|test|val].
/// Test and val sizes are the rounded ratio shares; train takes the rest.
/// Drifted entries never enter the shuffle: they are forced to test.
DatasetManifest split_dataset(std::vector<ManifestEntry> entries,
                              const SplitRatios& ratios, std::uint64_t seed);

std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(std::string_view text);

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest,
                   const std::filesystem::path& path);

/// One crop emitted by the classifier-dataset builder. `crop_path` is
/// relative to the index file's directory; `source_image` is the manifest
/// path verbatim; the box is in source pixel coordinates.
struct CropRecord {
  std::string crop_path;
  std::string source_image;
  int class_id = 0;
  BoundingBox box;

  bool operator==(const CropRecord&) const = default;
};

struct BuildIssue {
  std::string path;
  std::string message;
};

struct BuildReport {
  std::vector<CropRecord> rows;
  std::vector<BuildIssue> issues;
  int images_processed = 0;
  int crops_written = 0;
};

/// Cuts every annotated box out of every manifest image, resizes each crop
/// to 64x64 and writes it under out_dir as <imagestem>_<k>_<classname>.ppm,
/// where k is the annotation's index within its label file. Also writes
/// out_dir/index.csv. Unreadable images, bad label files and degenerate
/// boxes become issues; the build continues past them. Relative manifest
/// paths are resolved against root.
BuildReport build_classifier_dataset(const DatasetManifest& manifest,
                                     const std::filesystem::path& root,
                                     const std::filesystem::path& out_dir);

/// Header line: crop_path,source_image,class_id,x1,y1,x2,y2
std::string index_to_csv(const std::vector<CropRecord>& rows);
std::vector<CropRecord> index_from_csv(std::string_view text);

struct AuditIssue {
  std::string crop_path;
  std::string message;
};

struct AuditReport {
  int rows_checked = 0;
  std::vector<AuditIssue> issues;

  bool ok() const { return issues.empty(); }
};

/// Recomputes every crop listed in the index from its source image and
/// compares bytes with the file on disk. Missing crops, unreadable sources
/// and byte mismatches all become issues.
AuditReport audit_classifier_dataset(const std::filesystem::path& index_path,
                                     const std::filesystem::path& root);

}  // namespace driftguard
