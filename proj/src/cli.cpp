#include "driftguard/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "driftguard/metrics.hpp"
#include "driftguard/models.hpp"
#include "driftguard/rng.hpp"

namespace driftguard {

namespace {

namespace fs = std::filesystem;

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CliError("cannot open " + path.string());
  return std::string{std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>()};
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CliError("cannot write " + path.string());
  out << text;
}

fs::path resolve(const fs::path& root, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : root / path;
}

/// Manifest entries store paths relative to the manifest's directory when a
/// relative form exists; identical layouts get identical manifests.
std::string store_path(const fs::path& target, const fs::path& base) {
  std::error_code ec;
  const fs::path rel = fs::relative(target, base, ec);
  if (ec || rel.empty()) return target.string();
  return rel.generic_string();
}

/// Maps exceptions onto the exit-code contract: domain/input failures are
/// usage errors, anything else is internal.
template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const std::runtime_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& explicit_seed) {
  if (explicit_seed) return *explicit_seed;
  const char* env = std::getenv("DRIFTGUARD_SEED");
  if (!env || !*env) return 0;
  std::uint64_t value = 0;
  const char* end = env + std::string_view(env).size();
  const auto [ptr, ec] = std::from_chars(env, end, value);
  if (ec != std::errc() || ptr != end) {
    throw CliError(std::string("DRIFTGUARD_SEED is not an unsigned integer: `") +
                   env + "`");
  }
  return value;
}

SplitRatios parse_ratios(const std::string& text) {
  std::vector<double> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = text.find(',', start);
    const std::string tok = text.substr(start, comma - start);
    try {
      std::size_t used = 0;
      parts.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw CliError("ratio `" + tok + "` is not a number");
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (parts.size() != 3) {
    throw CliError("--ratios needs three comma-separated values (train,test,val)");
  }
  SplitRatios r{parts[0], parts[1], parts[2]};
  if (r.train < 0 || r.test < 0 || r.val < 0 ||
      std::abs(r.train + r.test + r.val - 1.0) > 1e-9) {
    throw CliError("split ratios must be nonnegative and sum to 1");
  }
  return r;
}

DriftSpec parse_drift_spec(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::string tok = text.substr(start, comma - start);
    const std::size_t eq = tok.find('=');
    if (tok.empty() || eq == std::string::npos || eq == 0) {
      throw CliError("--drift expects key=value pairs, got `" + tok + "`");
    }
    if (!kv.emplace(tok.substr(0, eq), tok.substr(eq + 1)).second) {
      throw CliError("--drift repeats key `" + tok.substr(0, eq) + "`");
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }

  const auto take = [&](const char* key) -> std::optional<std::string> {
    const auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  const auto number = [](const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw CliError("--drift " + key + " value `" + v + "` is not a number");
    }
  };

  const auto kind_text = take("kind");
  if (!kind_text) throw CliError("--drift needs kind=...");
  const auto kind = drift_kind_from_string(*kind_text);
  if (!kind) throw CliError("unknown drift kind `" + *kind_text + "`");

  DriftSpec spec;
  spec.kind = *kind;
  switch (*kind) {
    case DriftKind::gaussian_noise: {
      const auto v = take("sigma");
      if (!v) throw CliError("gaussian_noise needs sigma=...");
      spec.sigma = number("sigma", *v);
      if (spec.sigma < 0) throw CliError("sigma must be >= 0");
      break;
    }
    case DriftKind::brightness: {
      const auto v = take("gain");
      if (!v) throw CliError("brightness needs gain=...");
      spec.gain = number("gain", *v);
      if (spec.gain <= 0) throw CliError("gain must be > 0");
      break;
    }
    case DriftKind::tilt: {
      const auto v = take("angle");
      if (!v) throw CliError("tilt needs angle=...");
      spec.angle = number("angle", *v);
      if (spec.angle < -180.0 || spec.angle > 180.0) {
        throw CliError("angle must be in [-180, 180]");
      }
      break;
    }
  }
  if (!kv.empty()) {
    throw CliError("--drift key `" + kv.begin()->first + "` does not apply to " +
                   std::string(to_string(spec.kind)));
  }
  return spec;
}

ResetPolicy parse_reset_policy(const std::string& text) {
  if (text == "auto") return {ResetPolicy::Mode::automatic, 1};
  if (text == "manual") return {ResetPolicy::Mode::manual, 1};
  constexpr std::string_view prefix = "after:";
  if (text.rfind(prefix, 0) == 0) {
    const std::string n_text = text.substr(prefix.size());
    int n = 0;
    const auto [ptr, ec] =
        std::from_chars(n_text.data(), n_text.data() + n_text.size(), n);
    if (ec == std::errc() && ptr == n_text.data() + n_text.size() && n >= 1) {
      return {ResetPolicy::Mode::after_n, n};
    }
  }
  throw CliError("--reset-policy must be auto, manual or after:N (N >= 1)");
}

std::optional<Split> parse_split_choice(const std::string& text) {
  if (text == "all") return std::nullopt;
  const auto split = split_from_string(text);
  if (!split) throw CliError("--split must be train, test, val or all");
  return split;
}

int cmd_prepare(const PrepareOptions& options, std::ostream& out,
                std::ostream& err) {
  return guarded(err, [&]() -> int {
    if (!fs::is_directory(options.images)) {
      throw CliError("--images is not a directory: " + options.images.string());
    }
    if (!fs::is_directory(options.labels)) {
      throw CliError("--labels is not a directory: " + options.labels.string());
    }

    const auto scan = [](const fs::path& dir, const char* ext) {
      std::map<std::string, fs::path> by_stem;
      for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ext) {
          by_stem.emplace(e.path().stem().string(), e.path());
        }
      }
      return by_stem;
    };
    const auto images = scan(options.images, ".ppm");
    const auto labels = scan(options.labels, ".txt");

    std::vector<std::string> orphans;
    for (const auto& [stem, path] : images) {
      if (!labels.count(stem)) orphans.push_back("image without labels: " + path.string());
    }
    for (const auto& [stem, path] : labels) {
      if (!images.count(stem)) orphans.push_back("labels without image: " + path.string());
    }
    if (!orphans.empty()) {
      for (const auto& o : orphans) err << o << "\n";
      err << "error: " << orphans.size() << " unpaired file(s)\n";
      return kExitUsage;
    }
    if (images.empty()) throw CliError("no .ppm/.txt pairs found");

    std::vector<std::string> problems;
    std::vector<ManifestEntry> entries;
    for (const auto& [stem, image_path] : images) {
      const fs::path label_path = labels.at(stem);
      try {
        const ImageBuffer img = load_ppm(image_path);
        const auto annotations = parse_annotation(read_text_file(label_path));
        for (std::size_t k = 0; k < annotations.size(); ++k) {
          try {
            denormalize(annotations[k].box, img.width, img.height);
          } catch (const DegenerateBoxError& e) {
            problems.push_back(label_path.string() + ": object " +
                               std::to_string(k) + ": " + e.what());
          }
        }
      } catch (const AnnotationParseError& e) {
        for (const auto& issue : e.issues()) {
          problems.push_back(label_path.string() + ":" +
                             std::to_string(issue.line) + ": " + issue.message);
        }
        continue;
      } catch (const std::exception& e) {
        problems.push_back(image_path.string() + ": " + e.what());
        continue;
      }
      entries.push_back({store_path(image_path, options.out),
                         store_path(label_path, options.out), Split::train,
                         std::nullopt});
    }
    if (!problems.empty()) {
      for (const auto& p : problems) err << p << "\n";
      err << "error: " << problems.size() << " invalid input file(s)\n";
      return kExitUsage;
    }

    const DatasetManifest manifest =
        split_dataset(std::move(entries), options.ratios, options.seed);
    fs::create_directories(options.out);
    save_manifest(manifest, options.out / "manifest.json");
    out << "manifest: " << (options.out / "manifest.json").string() << " ("
        << manifest.counts.train << " train / " << manifest.counts.test
        << " test / " << manifest.counts.val << " val)\n";

    const BuildReport build =
        build_classifier_dataset(manifest, options.out, options.out / "crops");
    if (!build.issues.empty()) {
      for (const auto& i : build.issues) err << i.path << ": " << i.message << "\n";
      err << "error: " << build.issues.size() << " crop build failure(s)\n";
      return kExitUsage;
    }
    out << "crops: " << build.crops_written << " written from "
        << build.images_processed << " images\n";

    const AuditReport audit = audit_classifier_dataset(
        options.out / "crops" / "index.csv", options.out);
    if (!audit.ok()) {
      for (const auto& i : audit.issues) err << i.crop_path << ": " << i.message << "\n";
      err << "internal error: audit failed on freshly written crops\n";
      return kExitInternal;
    }
    out << "audit: " << audit.rows_checked << " crops verified, all exact\n";
    return kExitOk;
  });
}

int cmd_augment(const AugmentOptions& options, std::ostream& out,
                std::ostream& err) {
  return guarded(err, [&]() -> int {
    DatasetManifest manifest = load_manifest(options.manifest);
    const fs::path root = options.manifest.parent_path();
    if (options.drifts.empty()) {
      out << "no drift specs; manifest unchanged\n";
      return kExitOk;
    }

    std::vector<ManifestEntry> additions;
    for (const auto& entry : manifest.entries) {
      if (entry.drift || entry.split != Split::test) continue;

      const ImageBuffer img = load_ppm(resolve(root, entry.image));
      const auto annotations =
          parse_annotation(read_text_file(resolve(root, entry.labels)));

      for (const DriftSpec& base : options.drifts) {
        const std::string tag = drift_tag(base);
        DriftSpec spec = base;
        spec.seed = derive_seed(options.seed, entry.image + "|" + tag);

        const fs::path image_rel(entry.image);
        const fs::path labels_rel(entry.labels);
        const fs::path new_image_rel =
            image_rel.parent_path() /
            (image_rel.stem().string() + "_" + tag + ".ppm");
        const fs::path new_labels_rel =
            labels_rel.parent_path() /
            (image_rel.stem().string() + "_" + tag + ".txt");

        save_ppm(apply_drift(img, spec), resolve(root, new_image_rel.string()));

        std::vector<Annotation> drifted_annotations;
        for (const auto& a : annotations) {
          if (spec.kind == DriftKind::tilt) {
            const auto moved = transform_bbox(
                denormalize(a.box, img.width, img.height), spec.angle,
                img.width, img.height);
            if (!moved) continue;  // rotated out of frame
            drifted_annotations.push_back(
                {a.label, normalize(*moved, img.width, img.height)});
          } else {
            drifted_annotations.push_back(a);
          }
        }
        write_text_file(resolve(root, new_labels_rel.string()),
                        format_annotation(drifted_annotations));

        additions.push_back({new_image_rel.generic_string(),
                             new_labels_rel.generic_string(), Split::test,
                             spec});
      }
    }

    // Idempotent rerun: an existing entry for the same drifted image is
    // replaced, never duplicated.
    std::erase_if(manifest.entries, [&](const ManifestEntry& e) {
      return std::any_of(additions.begin(), additions.end(),
                         [&](const ManifestEntry& a) { return a.image == e.image; });
    });
    manifest.entries.insert(manifest.entries.end(), additions.begin(),
                            additions.end());
    std::sort(manifest.entries.begin(), manifest.entries.end(),
              [](const auto& a, const auto& b) { return a.image < b.image; });
    manifest.counts = {};
    for (const auto& e : manifest.entries) {
      switch (e.split) {
        case Split::train: ++manifest.counts.train; break;
        case Split::test: ++manifest.counts.test; break;
        case Split::val: ++manifest.counts.val; break;
      }
    }
    save_manifest(manifest, options.manifest);
    out << "drifted entries written: " << additions.size() << "\n";
    return kExitOk;
  });
}

namespace {

struct Models {
  std::unique_ptr<Detector> detector;
  std::unique_ptr<Classifier> classifier;
  std::optional<EmulatedModelPair> pair;
  const Detector* det = nullptr;
  const Classifier* cls = nullptr;
};

Models build_models(const ModelChoice& choice, std::uint64_t seed) {
  const int replay = choice.detector_replay || choice.classifier_replay;
  const int chosen = int(choice.oracle) + replay + int(bool(choice.profile));
  if (chosen != 1) {
    throw CliError(
        "choose exactly one model source: --oracle, --profile, or "
        "--detector-replay with --classifier-replay");
  }

  Models m;
  if (choice.oracle) {
    ErrorInjection injection{choice.miss_rate, choice.misclass_rate,
                             std::nullopt, seed};
    m.detector = std::make_unique<OracleDetector>(injection);
    m.classifier = std::make_unique<OracleClassifier>(injection);
    m.det = m.detector.get();
    m.cls = m.classifier.get();
  } else if (replay) {
    if (!choice.detector_replay || !choice.classifier_replay) {
      throw CliError("replay needs both --detector-replay and --classifier-replay");
    }
    m.detector = std::make_unique<ReplayDetector>(
        ReplayDetector::from_file(*choice.detector_replay));
    m.classifier = std::make_unique<ReplayClassifier>(
        ReplayClassifier::from_file(*choice.classifier_replay));
    m.det = m.detector.get();
    m.cls = m.classifier.get();
  } else {
    // "default" (or an empty value) selects the built-in calibration.
    EmulatorProfile profile =
        choice.profile->empty() || *choice.profile == "default"
            ? default_drift_profile(seed)
            : load_profile(*choice.profile);
    m.pair.emplace(std::move(profile));
    m.det = &m.pair->detector();
    m.cls = &m.pair->classifier();
  }
  return m;
}

void write_reports(const fs::path& out_dir, const StreamResult& stream,
                   std::ostream& out) {
  fs::create_directories(out_dir);
  save_ledger(stream.ledger, out_dir / "ledger.csv", out_dir / "ledger.json");
  out << "ledger: " << (out_dir / "ledger.csv").string() << " ("
      << stream.ledger.rows.size() << " rows)\n";
  if (stream.ledger.rows.empty()) {
    out << "no rows; report skipped\n";
    return;
  }
  const TableReport tables = reproduce_tables(stream.ledger);
  write_text_file(out_dir / "report.txt", format_tables(tables));
  write_text_file(out_dir / "report.json", tables_to_json(tables));
  out << "\n" << format_tables(tables);
  out << "\nalarms: " << stream.ledger.counters.alarms() << " of "
      << stream.ledger.rows.size() << " rows\n";
}

void print_stream_issues(const StreamResult& stream, std::ostream& err) {
  for (const auto& issue : stream.issues) {
    err << issue.image << ": " << issue.message << "\n";
  }
  if (!stream.skipped.empty()) {
    err << stream.skipped.size() << " frame(s) dropped while held in safe state\n";
  }
}

std::string format_profile_checks(const EmulatorProfile& profile) {
  std::ostringstream out;
  out << "profile calibration vs reference (exact)\n";
  out << "  name                               value    target  match\n";
  for (const auto& t : profile.target_checks) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "  %-32s %7.4f   %7.4f  %s\n",
                  t.name.c_str(), t.value, t.target, t.matched ? "yes" : "NO");
    out << buf;
  }
  return out.str();
}

}  // namespace

int cmd_run(const RunOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    const DatasetManifest manifest = load_manifest(options.manifest);
    const fs::path root = options.manifest.parent_path();
    const Models models = build_models(options.models, options.seed);

    std::vector<const ManifestEntry*> selected;
    for (const auto& e : manifest.entries) {
      if (!options.split || e.split == *options.split) selected.push_back(&e);
    }

    // Replay coverage precheck: refuse to start with holes in the record.
    if (options.models.detector_replay) {
      const auto* det = dynamic_cast<const ReplayDetector*>(models.det);
      const auto* cls = dynamic_cast<const ReplayClassifier*>(models.cls);
      std::vector<std::string> missing;
      for (const auto* e : selected) {
        const std::string stem = fs::path(e->image).stem().string();
        const auto* records = det->find(stem);
        if (!records) {
          missing.push_back("image " + stem);
          continue;
        }
        for (std::size_t k = 0; k < records->size(); ++k) {
          const std::string key = stem + "_" + std::to_string(k) + ".ppm";
          if (!cls->has(key)) missing.push_back("crop " + key);
        }
      }
      if (!missing.empty()) {
        for (const auto& m : missing) err << "missing replay record: " << m << "\n";
        err << "error: " << missing.size() << " replay record(s) missing\n";
        return kExitUsage;
      }
    }

    TransitionTable table;
    StreamConfig config{options.threshold, options.reset_policy,
                        options.per_detection, options.seed, options.workers,
                        nullptr};
    if (options.table_file) {
      const auto parsed = parse_table_file(read_text_file(*options.table_file));
      if (!parsed.ok()) {
        for (const auto& e : parsed.errors) {
          err << options.table_file->string() << ":" << e.line << ": "
              << e.message << "\n";
        }
        return kExitUsage;
      }
      const auto report = validate(parsed.table);
      if (!report.ok()) {
        for (const auto& v : report.violations) err << v.detail << "\n";
        return kExitUsage;
      }
      table = parsed.table;
      config.table = &table;
    }

    const StreamResult stream = run_stream(manifest, options.split, *models.det,
                                           *models.cls, config, root);
    print_stream_issues(stream, err);
    write_reports(options.out, stream, out);

    if (options.models.detector_replay && !selected.empty()) {
      std::vector<DetectionSample> samples;
      for (const auto* e : selected) {
        DetectionSample s;
        s.image = fs::path(e->image).stem().string();
        const ImageBuffer img = load_ppm(resolve(root, e->image));
        for (const auto& a :
             parse_annotation(read_text_file(resolve(root, e->labels)))) {
          s.truths.emplace_back(a.label,
                                denormalize(a.box, img.width, img.height));
        }
        ImageContext ctx{s.image, img.width, img.height, {}};
        s.detections = models.det->detect(nullptr, ctx);
        samples.push_back(std::move(s));
      }
      const MetricsReport detection = score_detection(samples);
      nlohmann::json j;
      j["map50"] = *detection.map50;
      j["matched_truth_fraction"] = detection.accuracy;
      j["truths"] = detection.samples;
      j["per_class"] = nlohmann::json::array();
      for (const auto& pc : detection.per_class) {
        j["per_class"].push_back({{"class", std::string(class_name(pc.label))},
                                  {"ap", *pc.ap},
                                  {"precision", pc.precision},
                                  {"recall", pc.recall},
                                  {"f1", pc.f1},
                                  {"support", pc.support}});
      }
      write_text_file(options.out / "detection.json", j.dump(2) + "\n");
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.4f", *detection.map50);
      out << "mAP@0.5 over replayed detections: " << buf << "\n";
    }
    return kExitOk;
  });
}

int cmd_simulate(const SimulateOptions& options, std::ostream& out,
                 std::ostream& err) {
  return guarded(err, [&]() -> int {
    if (options.count < 1) throw CliError("--count must be >= 1");
    const bool builtin = !options.profile || options.profile->empty() ||
                         *options.profile == "default";
    EmulatorProfile profile =
        builtin ? default_drift_profile(0) : load_profile(*options.profile);
    if (options.seed) profile.seed = *options.seed;

    std::vector<SensorFrame> frames;
    frames.reserve(static_cast<std::size_t>(options.count));
    for (long i = 0; i < options.count; ++i) {
      SensorFrame f;
      char id[32];
      std::snprintf(id, sizeof(id), "sim_%06ld", i);
      f.ctx.id = id;
      f.ctx.width = 640;
      f.ctx.height = 480;
      f.ctx.annotations = {
          {static_cast<ClassLabel>(i % kClassCount), {0.5, 0.5, 0.5, 0.5}}};
      frames.push_back(std::move(f));
    }

    const EmulatedModelPair pair(profile);
    const StreamConfig config{options.threshold, ResetPolicy{}, true,
                              profile.seed, options.workers, nullptr};
    const StreamResult stream =
        run_frames(frames, pair.detector(), pair.classifier(), config);
    print_stream_issues(stream, err);
    write_reports(options.out, stream, out);
    if (!pair.profile().target_checks.empty()) {
      out << "\n" << format_profile_checks(pair.profile());
    }
    return kExitOk;
  });
}

int cmd_report(const ReportOptions& options, std::ostream& out,
               std::ostream& err) {
  return guarded(err, [&]() -> int {
    const OutcomeLedger ledger = load_ledger(options.ledger);
    if (ledger.rows.empty()) {
      out << "empty ledger; nothing to report\n";
      return kExitOk;
    }
    const TableReport tables = reproduce_tables(ledger);
    out << format_tables(tables);
    if (options.out) {
      fs::create_directories(*options.out);
      write_text_file(*options.out / "report.txt", format_tables(tables));
      write_text_file(*options.out / "report.json", tables_to_json(tables));
    }
    return kExitOk;
  });
}

int cmd_audit(const AuditOptions& options, std::ostream& out,
              std::ostream& err) {
  return guarded(err, [&]() -> int {
    const AuditReport report =
        audit_classifier_dataset(options.index, options.root);
    if (!report.ok()) {
      for (const auto& i : report.issues) err << i.crop_path << ": " << i.message << "\n";
      err << "error: " << report.issues.size() << " of " << report.rows_checked
          << " crops failed verification\n";
      return kExitUsage;
    }
    out << "audit: " << report.rows_checked << " crops verified, all exact\n";
    return kExitOk;
  });
}

}  // namespace driftguard
