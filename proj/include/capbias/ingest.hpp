#pragma once

// Loading annotations, detections and capture metadata, and joining them by
// image identity.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "capbias/error.hpp"
#include "capbias/eval.hpp"
#include "capbias/exif_meta.hpp"
#include "capbias/photometry.hpp"

namespace capbias {

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string read_file_text(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  return {bytes.begin(), bytes.end()};
}

struct ImageEntry {
  ImageId id;
  std::string file_name;
  std::optional<std::filesystem::path> source_path;  // overrides <dir>/<file_name>

  bool operator==(const ImageEntry&) const = default;
};

struct Category {
  CategoryId id = 0;
  std::string name;

  bool operator==(const Category&) const = default;
};

struct CorpusManifest {
  std::vector<ImageEntry> images;
  std::vector<Category> categories;

  bool has_image(const ImageId& id) const {
    return std::any_of(images.begin(), images.end(), [&](const ImageEntry& e) { return e.id == id; });
  }
  bool has_category(CategoryId id) const {
    return std::any_of(categories.begin(), categories.end(), [&](const Category& c) { return c.id == id; });
  }

  bool operator==(const CorpusManifest&) const = default;
};

struct AnnotationSet {
  CorpusManifest manifest;
  GroundTruthSet ground_truth;
  Warnings warnings;
};

namespace detail {

[[noreturn]] inline void malformed(const std::string& what) { throw Error(ErrorCode::MalformedDocument, what); }

inline nlohmann::json parse_json(std::string_view document, std::string_view what) {
  try {
    return nlohmann::json::parse(document);
  } catch (const nlohmann::json::parse_error& e) {
    malformed(std::string(what) + " is not valid JSON: " + e.what());
  }
}

// Image ids appear as integers (COCO) or strings; both normalize to text.
inline ImageId image_id_of(const nlohmann::json& v, std::string_view where) {
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_string()) return v.get<std::string>();
  malformed(std::string(where) + ": image id must be an integer or string");
}

inline CategoryId category_id_of(const nlohmann::json& v, std::string_view where) {
  if (!v.is_number_integer()) malformed(std::string(where) + ": category id must be an integer");
  return v.get<CategoryId>();
}

inline Box box_of(const nlohmann::json& v, std::string_view where) {
  if (!v.is_array() || v.size() != 4 || !std::all_of(v.begin(), v.end(), [](const auto& x) { return x.is_number(); })) {
    malformed(std::string(where) + ": bbox must be [x, y, w, h]");
  }
  return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>(), v[3].get<double>()};
}

inline const nlohmann::json& required(const nlohmann::json& obj, const char* key, std::string_view where) {
  if (!obj.is_object() || !obj.contains(key)) malformed(std::string(where) + ": missing '" + key + "'");
  return obj[key];
}

}  // namespace detail

/// Reads an annotation document {images, annotations, categories}.
/// Degenerate boxes are dropped with a warning; references to unknown
/// images or categories are fatal.
inline AnnotationSet load_annotations(std::string_view document) {
  const auto doc = detail::parse_json(document, "annotation document");
  if (!doc.is_object()) detail::malformed("annotation document must be an object");

  AnnotationSet out;
  std::set<ImageId> image_ids;
  std::set<CategoryId> category_ids;

  const auto& images = detail::required(doc, "images", "annotation document");
  if (!images.is_array()) detail::malformed("'images' must be a list");
  for (const auto& img : images) {
    ImageEntry e;
    e.id = detail::image_id_of(detail::required(img, "id", "image"), "image");
    const auto& name = detail::required(img, "file_name", "image " + e.id);
    if (!name.is_string()) detail::malformed("image " + e.id + ": file_name must be a string");
    e.file_name = name.get<std::string>();
    if (!image_ids.insert(e.id).second) detail::malformed("duplicate image id " + e.id);
    out.ground_truth[e.id];
    out.manifest.images.push_back(std::move(e));
  }

  const auto& categories = detail::required(doc, "categories", "annotation document");
  if (!categories.is_array()) detail::malformed("'categories' must be a list");
  for (const auto& cat : categories) {
    Category c;
    c.id = detail::category_id_of(detail::required(cat, "id", "category"), "category");
    const auto& name = detail::required(cat, "name", "category " + std::to_string(c.id));
    if (!name.is_string()) detail::malformed("category " + std::to_string(c.id) + ": name must be a string");
    c.name = name.get<std::string>();
    if (!category_ids.insert(c.id).second) detail::malformed("duplicate category id " + std::to_string(c.id));
    out.manifest.categories.push_back(std::move(c));
  }

  const auto& annotations = detail::required(doc, "annotations", "annotation document");
  if (!annotations.is_array()) detail::malformed("'annotations' must be a list");
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    const auto& a = annotations[i];
    const std::string where = "annotation " + std::to_string(i);
    const ImageId image = detail::image_id_of(detail::required(a, "image_id", where), where);
    const CategoryId cat = detail::category_id_of(detail::required(a, "category_id", where), where);
    if (!image_ids.count(image)) throw Error(ErrorCode::DanglingReference, where + " refers to unknown image " + image);
    if (!category_ids.count(cat)) {
      throw Error(ErrorCode::DanglingReference, where + " refers to unknown category " + std::to_string(cat));
    }
    const Box box = detail::box_of(detail::required(a, "bbox", where), where);
    if (!box.valid()) {
      out.warnings.push_back({image, "bbox", "DegenerateBox: " + where + " has non-positive size"});
      continue;
    }
    out.ground_truth[image].push_back({cat, box});
  }
  return out;
}

/// Reads a detection results list, grouping by image and keeping the
/// max_dets highest-scoring entries per image. Entries with scores outside
/// [0, 1] or degenerate boxes are rejected with a warning.
inline DetectionSet load_detections(std::string_view document, const CorpusManifest& manifest, Warnings& warnings,
                                    std::size_t max_dets = kDefaultMaxDets) {
  const auto doc = detail::parse_json(document, "detection document");
  if (!doc.is_array()) detail::malformed("detection document must be a list");

  std::set<ImageId> image_ids;
  for (const auto& img : manifest.images) image_ids.insert(img.id);

  DetectionSet out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& d = doc[i];
    const std::string where = "detection " + std::to_string(i);
    const ImageId image = detail::image_id_of(detail::required(d, "image_id", where), where);
    const CategoryId cat = detail::category_id_of(detail::required(d, "category_id", where), where);
    if (!image_ids.count(image)) throw Error(ErrorCode::DanglingReference, where + " refers to unknown image " + image);
    if (!manifest.has_category(cat)) {
      throw Error(ErrorCode::DanglingReference, where + " refers to unknown category " + std::to_string(cat));
    }
    const Box box = detail::box_of(detail::required(d, "bbox", where), where);
    const auto& score_json = detail::required(d, "score", where);
    if (!score_json.is_number()) detail::malformed(where + ": score must be a number");
    const double score = score_json.get<double>();
    if (!(score >= 0.0 && score <= 1.0)) {
      warnings.push_back({image, "score", "InvalidScore: " + where + " score outside [0, 1]"});
      continue;
    }
    if (!box.valid()) {
      warnings.push_back({image, "bbox", "DegenerateBox: " + where + " has non-positive size"});
      continue;
    }
    out[image].push_back({cat, box, score, i});
  }

  for (auto& [image, list] : out) {
    std::stable_sort(list.begin(), list.end(), [](const Detection& a, const Detection& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.order < b.order;
    });
    if (list.size() > max_dets) {
      warnings.push_back({image, "detections", "Truncated: kept " + std::to_string(max_dets) + " of " +
                                                    std::to_string(list.size()) + " detections"});
      list.resize(max_dets);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metadata join

/// Pre-parsed records, e.g. from a sidecar document or a provider dump.
struct RecordSource {
  std::string label;
  std::vector<ExifRecord> records;
};

/// Image files under a directory, located by manifest file_name (or the
/// entry's own source_path when set).
struct ImageDirSource {
  std::filesystem::path dir;
};

using ExifSource = std::variant<RecordSource, ImageDirSource>;

struct JoinOptions {
  EvMode ev_mode = EvMode::Photometric;
  ClassBoundaries bounds;
  unsigned threads = 1;
};

struct JoinedCorpus {
  CorpusManifest manifest;
  GroundTruthSet ground_truth;
  std::optional<DetectionSet> detections;
  // Indexed like manifest.images.
  std::vector<std::optional<ExifRecord>> exif;
  std::vector<std::optional<ExposureProfile>> profiles;
  std::size_t complete_count = 0;  // exposure, f-number and ISO all present
  std::size_t partial_count = 0;   // some but not all present
  double coverage = 0;
  Warnings warnings;

  /// Records with usable metadata, keyed by image id.
  std::map<ImageId, ExifRecord> exif_index() const {
    std::map<ImageId, ExifRecord> out;
    for (const auto& e : exif)
      if (e) out.emplace(e->image_id, *e);
    return out;
  }

  bool operator==(const JoinedCorpus&) const = default;
};

namespace detail {

inline void fill_missing(ExifRecord& into, const ExifRecord& from) {
  if (!into.exposure_time_s) into.exposure_time_s = from.exposure_time_s;
  if (!into.f_number) into.f_number = from.f_number;
  if (!into.iso) into.iso = from.iso;
}

struct FileResult {
  std::optional<ExifRecord> record;
  Warnings warnings;
};

inline FileResult read_image_file(const ImageEntry& image, const std::filesystem::path& dir) {
  FileResult out;
  const auto path = image.source_path ? *image.source_path : dir / image.file_name;
  try {
    const auto bytes = read_file_bytes(path);
    out.record = read_exif_record(bytes, image.id, out.warnings);
  } catch (const Error& e) {
    // Report missing files by name only so reports do not embed host paths.
    if (e.code() == ErrorCode::Io)
      out.warnings.push_back({image.id, "file", std::string(to_string(ErrorCode::Io)) + ": cannot open " +
                                                    path.filename().string()});
    else
      out.warnings.push_back({image.id, "file", e.what()});
  }
  return out;
}

// Parses every manifest image from one directory. Work is split into
// contiguous index ranges; results land in their slot, so output order does
// not depend on the thread count.
inline std::vector<FileResult> read_image_dir(const CorpusManifest& manifest, const std::filesystem::path& dir,
                                              unsigned threads) {
  std::vector<FileResult> results(manifest.images.size());
  const std::size_t n = manifest.images.size();
  const unsigned workers = std::max(1U, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) results[i] = read_image_file(manifest.images[i], dir);
    return results;
  }
  std::vector<std::jthread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w * n / workers; i < (w + 1) * n / workers; ++i) {
        results[i] = read_image_file(manifest.images[i], dir);
      }
    });
  }
  return results;
}

}  // namespace detail

/// Joins capture metadata onto the manifest. Sources are consulted in order
/// and the first source supplying a field wins. Images missing metadata stay
/// in the corpus and count against coverage.
inline JoinedCorpus join_metadata(const CorpusManifest& manifest, const std::vector<ExifSource>& sources,
                                  const JoinOptions& options = {}) {
  JoinedCorpus out;
  out.manifest = manifest;
  const std::size_t n = manifest.images.size();
  std::vector<ExifRecord> merged(n);
  std::map<ImageId, std::size_t> slot;
  for (std::size_t i = 0; i < n; ++i) {
    merged[i].image_id = manifest.images[i].id;
    slot.emplace(manifest.images[i].id, i);
  }

  for (const auto& source : sources) {
    if (const auto* rs = std::get_if<RecordSource>(&source)) {
      for (const auto& rec : rs->records) {
        auto it = slot.find(rec.image_id);
        if (it == slot.end()) {
          out.warnings.push_back({rec.image_id, "id", "UnknownImage: " + rs->label + " entry not in manifest"});
          continue;
        }
        detail::fill_missing(merged[it->second], rec);
      }
    } else {
      const auto& dir = std::get<ImageDirSource>(source).dir;
      auto results = detail::read_image_dir(manifest, dir, options.threads);
      for (std::size_t i = 0; i < n; ++i) {
        if (results[i].record) detail::fill_missing(merged[i], *results[i].record);
        out.warnings.insert(out.warnings.end(), results[i].warnings.begin(), results[i].warnings.end());
      }
    }
  }

  out.exif.resize(n);
  out.profiles.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (merged[i].any()) out.exif[i] = merged[i];
    if (merged[i].complete()) {
      ++out.complete_count;
      out.profiles[i] = profile(merged[i], options.ev_mode, out.warnings, options.bounds);
    } else if (merged[i].any()) {
      ++out.partial_count;
    }
  }
  out.coverage = n == 0 ? 0.0 : static_cast<double>(out.complete_count) / static_cast<double>(n);
  return out;
}

/// Serializes records in the sidecar format read by parse_sidecar. Reals are
/// written in shortest round-trip form.
inline std::string sidecar_document(const std::vector<ExifRecord>& records) {
  const auto text = [](double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
  };
  auto doc = nlohmann::ordered_json::array();
  for (const auto& r : records) {
    nlohmann::ordered_json e;
    e["id"] = r.image_id;
    if (r.exposure_time_s) e["ExposureTime"] = text(*r.exposure_time_s);
    if (r.f_number) e["FNumber"] = text(*r.f_number);
    if (r.iso) e["ISO"] = std::to_string(*r.iso);
    doc.push_back(std::move(e));
  }
  return doc.dump(1) + "\n";
}

// ---------------------------------------------------------------------------
// Repeatability scenario documents

namespace detail {

inline std::vector<Point> points_from_text(std::string_view text, const std::string& where) {
  std::vector<Point> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string line(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::replace(line.begin(), line.end(), '\t', ' ');
    auto trimmed = trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    const auto sp = trimmed.find(' ');
    auto x = sp == std::string_view::npos ? std::nullopt : parse_real_text(trimmed.substr(0, sp));
    auto y = sp == std::string_view::npos ? std::nullopt : parse_real_text(trim(trimmed.substr(sp + 1)));
    if (!x || !y) malformed(where + ":" + std::to_string(line_no) + ": expected 'x y'");
    out.push_back({*x, *y});
  }
  return out;
}

inline std::vector<Point> points_of(const nlohmann::json& v, const std::filesystem::path& base, const std::string& where) {
  if (v.is_string()) return points_from_text(read_file_text(base / v.get<std::string>()), v.get<std::string>());
  if (!v.is_array()) malformed(where + ": points must be a list of [x, y] or a file name");
  std::vector<Point> out;
  for (const auto& p : v) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
      malformed(where + ": each point must be [x, y]");
    }
    out.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  return out;
}

}  // namespace detail

struct ScenarioSet {
  std::vector<Point> target;
  std::vector<Scenario> scenarios;
};

/// Reads {"target": points, "scenarios": [{"label"?, "row", "col",
/// "points"}]} where points are inline [[x, y], ...] lists or the name of a
/// text file (one "x y" or "x,y" per line) relative to base_dir.
inline ScenarioSet load_scenarios(std::string_view document, const std::filesystem::path& base_dir) {
  const auto doc = detail::parse_json(document, "scenario document");
  ScenarioSet out;
  out.target = detail::points_of(detail::required(doc, "target", "scenario document"), base_dir, "target");
  const auto& list = detail::required(doc, "scenarios", "scenario document");
  if (!list.is_array()) detail::malformed("'scenarios' must be a list");
  for (std::size_t i = 0; i < list.size(); ++i) {
    const auto& s = list[i];
    const std::string where = "scenario " + std::to_string(i);
    Scenario sc;
    sc.label = s.contains("label") && s["label"].is_string() ? s["label"].get<std::string>() : where;
    const auto& row = detail::required(s, "row", where);
    const auto& col = detail::required(s, "col", where);
    if (!row.is_number_integer() || !col.is_number_integer()) detail::malformed(where + ": row/col must be integers");
    sc.cell = {row.get<int>(), col.get<int>()};
    sc.points = detail::points_of(detail::required(s, "points", where), base_dir, where);
    out.scenarios.push_back(std::move(sc));
  }
  return out;
}

}  // namespace capbias
