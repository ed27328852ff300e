#include <charconv>
#include <fstream>
#include <sstream>
#include <string>

#include "driftguard/dataset.hpp"

namespace driftguard {

namespace {

namespace fs = std::filesystem;

fs::path resolve(const fs::path& root, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : root / path;
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open " + path.string());
  return std::string{std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>()};
}

void check_csv_safe(const std::string& field) {
  if (field.find_first_of(",\n\r") != std::string::npos) {
    throw DatasetError("path not representable in index csv: " + field);
  }
}

}  // namespace

BuildReport build_classifier_dataset(const DatasetManifest& manifest,
                                     const fs::path& root,
                                     const fs::path& out_dir) {
  fs::create_directories(out_dir);

  BuildReport report;
  for (const auto& entry : manifest.entries) {
    ImageBuffer img;
    std::vector<Annotation> annotations;
    try {
      img = load_ppm(resolve(root, entry.image));
      annotations = parse_annotation(read_text_file(resolve(root, entry.labels)));
    } catch (const std::exception& e) {
      report.issues.push_back({entry.image, e.what()});
      continue;
    }
    ++report.images_processed;

    const std::string stem = fs::path(entry.image).stem().string();
    for (std::size_t k = 0; k < annotations.size(); ++k) {
      const auto& a = annotations[k];
      BoundingBox box;
      try {
        box = denormalize(a.box, img.width, img.height);
      } catch (const DegenerateBoxError& e) {
        report.issues.push_back(
            {entry.image + ":" + std::to_string(k), e.what()});
        continue;
      }
      const std::string name = stem + "_" + std::to_string(k) + "_" +
                               std::string(class_name(a.label)) + ".ppm";
      save_ppm(resize_64(crop(img, box)), out_dir / name);
      report.rows.push_back(
          {name, entry.image, static_cast<int>(a.label), box});
      ++report.crops_written;
    }
  }

  std::ofstream out(out_dir / "index.csv", std::ios::binary | std::ios::trunc);
  if (!out) throw DatasetError("cannot write index.csv");
  out << index_to_csv(report.rows);
  return report;
}

std::string index_to_csv(const std::vector<CropRecord>& rows) {
  std::string out = "crop_path,source_image,class_id,x1,y1,x2,y2\n";
  for (const auto& r : rows) {
    check_csv_safe(r.crop_path);
    check_csv_safe(r.source_image);
    out += r.crop_path;
    out += ',';
    out += r.source_image;
    out += ',';
    out += std::to_string(r.class_id);
    out += ',';
    out += std::to_string(r.box.x1);
    out += ',';
    out += std::to_string(r.box.y1);
    out += ',';
    out += std::to_string(r.box.x2);
    out += ',';
    out += std::to_string(r.box.y2);
    out += '\n';
  }
  return out;
}

std::vector<CropRecord> index_from_csv(std::string_view text) {
  std::istringstream lines{std::string(text)};
  std::string line;
  if (!std::getline(lines, line)) throw DatasetError("index csv: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "crop_path,source_image,class_id,x1,y1,x2,y2") {
    throw DatasetError("index csv: bad header");
  }

  std::vector<CropRecord> rows;
  int lineno = 1;
  while (std::getline(lines, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (fields.size() != 7) {
      throw DatasetError("index csv: line " + std::to_string(lineno) +
                         ": expected 7 fields");
    }

    CropRecord row;
    row.crop_path = fields[0];
    row.source_image = fields[1];
    int* dests[5] = {&row.class_id, &row.box.x1, &row.box.y1, &row.box.x2,
                     &row.box.y2};
    for (int i = 0; i < 5; ++i) {
      const std::string& f = fields[i + 2];
      const auto [ptr, ec] =
          std::from_chars(f.data(), f.data() + f.size(), *dests[i]);
      if (ec != std::errc() || ptr != f.data() + f.size()) {
        throw DatasetError("index csv: line " + std::to_string(lineno) +
                           ": `" + f + "` is not an integer");
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

AuditReport audit_classifier_dataset(const fs::path& index_path,
                                     const fs::path& root) {
  const auto rows = index_from_csv(read_text_file(index_path));
  const fs::path index_dir = index_path.parent_path();

  AuditReport report;
  for (const auto& row : rows) {
    ++report.rows_checked;

    std::vector<std::uint8_t> actual;
    try {
      const auto path = index_dir / row.crop_path;
      std::ifstream in(path, std::ios::binary);
      if (!in) throw DatasetError("crop file missing");
      actual.assign(std::istreambuf_iterator<char>(in),
                    std::istreambuf_iterator<char>());
    } catch (const std::exception& e) {
      report.issues.push_back({row.crop_path, e.what()});
      continue;
    }

    try {
      const ImageBuffer img = load_ppm(resolve(root, row.source_image));
      const auto expected = write_ppm(resize_64(crop(img, row.box)));
      if (expected != actual) {
        report.issues.push_back({row.crop_path, "bytes differ from recomputed crop"});
      }
    } catch (const std::exception& e) {
      report.issues.push_back({row.crop_path, e.what()});
    }
  }
  return report;
}

}  // namespace driftguard
