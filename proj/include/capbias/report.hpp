#pragma once

// Audit orchestration and report serialization (JSON, CSV, SVG).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "capbias/binning.hpp"
#include "capbias/digest.hpp"
#include "capbias/error.hpp"
#include "capbias/eval.hpp"
#include "capbias/ingest.hpp"
#include "capbias/photometry.hpp"
#include "capbias/svg_heatmap.hpp"
#include "capbias/version.hpp"

namespace capbias {

inline constexpr int kReportSchemaVersion = 1;

struct AuditConfig {
  std::filesystem::path annotations;
  std::optional<std::filesystem::path> detections;
  /// Consulted in order, before any image directory.
  std::vector<std::filesystem::path> exif_sidecars;
  std::optional<std::filesystem::path> images_dir;
  /// Split label for the illumination table; defaults to the annotation
  /// file's stem.
  std::string split;
  EvMode ev_mode = EvMode::Photometric;
  ClassBoundaries bounds;
  std::size_t max_dets = kDefaultMaxDets;
  double iou_threshold = kDefaultIouThreshold;
  std::optional<Illumination> eval_illumination;
  unsigned threads = 1;
};

struct InputDigest {
  std::string role;
  std::string name;
  std::string sha256;

  bool operator==(const InputDigest&) const = default;
};

struct IlluminationTable {
  std::string split;
  std::uint64_t high = 0;
  std::uint64_t mid = 0;
  std::uint64_t low = 0;
  std::uint64_t below_low_floor = 0;  // EV < -4, included in low

  std::uint64_t profiled() const { return high + mid + low; }
  std::uint64_t count(Illumination level) const {
    return level == Illumination::High ? high : level == Illumination::Mid ? mid : low;
  }
  std::optional<double> percent(Illumination level) const {
    if (profiled() == 0) return std::nullopt;
    return 100.0 * static_cast<double>(count(level)) / static_cast<double>(profiled());
  }

  bool operator==(const IlluminationTable&) const = default;
};

struct AuditReport {
  std::string tool_version = kVersion;
  std::vector<InputDigest> inputs;
  EvMode ev_mode = EvMode::Photometric;
  ClassBoundaries bounds;
  std::size_t max_dets = kDefaultMaxDets;
  double iou_threshold = kDefaultIouThreshold;
  std::optional<Illumination> eval_illumination;

  std::uint64_t image_count = 0;
  std::uint64_t complete_count = 0;
  std::uint64_t partial_count = 0;
  double coverage = 0;

  SensorGrid counts;
  SensorGrid percent;
  Marginals marginals;
  IlluminationTable illumination;
  Warnings warnings;

  std::optional<BinScoreGrid> bin_map;
  std::optional<MapResult> global_map;
  std::vector<Category> categories;
};

inline IlluminationTable illumination_table(std::string split, const std::vector<std::optional<ExposureProfile>>& profiles) {
  IlluminationTable t;
  t.split = std::move(split);
  for (const auto& p : profiles) {
    if (!p) continue;
    switch (p->illumination) {
      case Illumination::High: ++t.high; break;
      case Illumination::Mid: ++t.mid; break;
      case Illumination::Low: ++t.low; break;
    }
    if (p->ev < kLowRangeFloor) ++t.below_low_floor;
  }
  return t;
}

/// ingest -> photometry -> binning -> (eval when detections are given).
/// The result depends only on the input bytes and the config, never on the
/// thread count.
inline AuditReport run_audit(const AuditConfig& config) {
  AuditReport report;
  report.ev_mode = config.ev_mode;
  report.bounds = config.bounds;
  report.max_dets = config.max_dets;
  report.iou_threshold = config.iou_threshold;
  report.eval_illumination = config.eval_illumination;

  const auto digest_file = [&](std::string role, const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    report.inputs.push_back({std::move(role), path.filename().string(), sha256_hex(bytes)});
    return std::string(bytes.begin(), bytes.end());
  };

  AnnotationSet annotations = load_annotations(digest_file("annotations", config.annotations));
  report.warnings = annotations.warnings;
  report.categories = annotations.manifest.categories;

  std::vector<ExifSource> sources;
  for (const auto& path : config.exif_sidecars) {
    sources.push_back(RecordSource{path.filename().string(), parse_sidecar(digest_file("exif-sidecar", path), report.warnings)});
  }
  if (config.images_dir) {
    // Digest over (file name, content digest) pairs in manifest order.
    std::string listing;
    for (const auto& img : annotations.manifest.images) {
      std::error_code ec;
      const auto path = img.source_path ? *img.source_path : *config.images_dir / img.file_name;
      std::string d = "missing";
      if (std::filesystem::is_regular_file(path, ec)) d = sha256_hex(read_file_bytes(path));
      listing += img.file_name + " " + d + "\n";
    }
    report.inputs.push_back({"images", config.images_dir->filename().string(), sha256_hex(listing)});
    sources.push_back(ImageDirSource{*config.images_dir});
  }

  JoinedCorpus corpus = join_metadata(annotations.manifest, sources, {config.ev_mode, config.bounds, config.threads});
  corpus.ground_truth = std::move(annotations.ground_truth);
  report.warnings.insert(report.warnings.end(), corpus.warnings.begin(), corpus.warnings.end());

  report.image_count = corpus.manifest.images.size();
  report.complete_count = corpus.complete_count;
  report.partial_count = corpus.partial_count;
  report.coverage = corpus.coverage;

  std::vector<ExifRecord> records;
  for (std::size_t i = 0; i < corpus.exif.size(); ++i) {
    records.push_back(corpus.exif[i] ? *corpus.exif[i] : ExifRecord{corpus.manifest.images[i].id, {}, {}, {}});
  }
  report.counts = accumulate_grid(records, GridKind::Count);
  report.percent = to_percent(report.counts);
  report.marginals = marginals_of(report.counts);
  const std::string split = config.split.empty() ? config.annotations.stem().string() : config.split;
  report.illumination = illumination_table(split, corpus.profiles);

  if (config.detections) {
    corpus.detections = load_detections(digest_file("detections", *config.detections), corpus.manifest,
                                        report.warnings, config.max_dets);
    const auto index = corpus.exif_index();
    report.bin_map = per_bin_map(corpus.ground_truth, *corpus.detections, index,
                                 {config.iou_threshold, config.eval_illumination, config.ev_mode, config.bounds});
    std::vector<ImageId> all;
    for (const auto& img : corpus.manifest.images) all.push_back(img.id);
    std::sort(all.begin(), all.end());
    report.global_map = evaluate_map(corpus.ground_truth, *corpus.detections, all, config.iou_threshold);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Serialization

namespace detail {

inline nlohmann::ordered_json grid_json(const GridCells& cells) {
  auto out = nlohmann::ordered_json::array();
  for (const auto& row : cells) out.push_back(row);
  return out;
}

inline nlohmann::ordered_json count_cells_json(const CountCells& cells) {
  auto out = nlohmann::ordered_json::array();
  for (const auto& row : cells) out.push_back(row);
  return out;
}

inline nlohmann::ordered_json score_cells_json(const ScoreCells& cells) {
  auto out = nlohmann::ordered_json::array();
  for (const auto& row : cells) {
    auto r = nlohmann::ordered_json::array();
    for (const auto& v : row) r.push_back(v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr));
    out.push_back(std::move(r));
  }
  return out;
}

inline std::string warning_code(const Warning& w) {
  const auto colon = w.reason.find(':');
  return colon == std::string::npos ? w.reason : w.reason.substr(0, colon);
}

/// Integer percentage as printed in count (percent) tables.
inline std::string percent_label(std::optional<double> pct) {
  if (!pct) return "";
  return std::to_string(std::lround(*pct)) + "%";
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const AuditReport& r) {
  using json = nlohmann::ordered_json;
  json j;
  j["schema_version"] = kReportSchemaVersion;
  j["tool"] = {{"name", "capbias"}, {"version", r.tool_version}};
  auto inputs = json::array();
  for (const auto& d : r.inputs) inputs.push_back({{"role", d.role}, {"name", d.name}, {"sha256", d.sha256}});
  j["inputs"] = inputs;
  j["config"] = {{"ev_mode", to_string(r.ev_mode)},
                 {"class_boundaries", {{"low_mid", r.bounds.low_mid}, {"mid_high", r.bounds.mid_high}}},
                 {"max_dets", r.max_dets},
                 {"iou_threshold", r.iou_threshold},
                 {"eval_illumination", r.eval_illumination ? json(to_string(*r.eval_illumination)) : json(nullptr)}};

  j["coverage"] = {{"images", r.image_count},
                   {"complete_exif", r.complete_count},
                   {"partial_exif", r.partial_count},
                   {"no_exif", r.image_count - r.complete_count - r.partial_count},
                   {"fraction", r.coverage}};

  j["bins"] = {{"exposure_lower_edges_s", kExposureLowerEdges}, {"iso_edges", kIsoEdges}};
  j["grids"] = {
      {"count", {{"cells", detail::grid_json(r.counts.cells)}, {"total_assigned", r.counts.total_assigned}}},
      {"percent", {{"cells", detail::grid_json(r.percent.cells)}, {"denominator", r.percent.total_assigned}}},
      {"assigned", r.counts.total_assigned},
      {"skipped", r.counts.skipped_count},
      {"clamped_iso", r.counts.clamped_iso_count},
  };
  j["marginals"] = {{"exposure", r.marginals.exposure}, {"iso", r.marginals.iso}};

  const auto& t = r.illumination;
  const auto level = [&](Illumination l) {
    auto pct = t.percent(l);
    return json{{"count", t.count(l)}, {"percent", pct ? json(*pct) : json(nullptr)}};
  };
  j["illumination"] = {{"split", t.split},
                       {"high", level(Illumination::High)},
                       {"mid", level(Illumination::Mid)},
                       {"low", level(Illumination::Low)},
                       {"profiled", t.profiled()},
                       {"below_ev_floor", t.below_low_floor}};

  std::map<std::string, std::uint64_t> by_reason;
  auto items = json::array();
  for (const auto& w : r.warnings) {
    ++by_reason[detail::warning_code(w)];
    items.push_back({{"image_id", w.image_id}, {"field", w.field}, {"reason", w.reason}});
  }
  j["warnings"] = {{"total", r.warnings.size()}, {"by_reason", by_reason}, {"items", items}};

  if (r.bin_map) {
    j["evaluation"] = {
        {"global_map", r.global_map && r.global_map->map ? json(*r.global_map->map) : json(nullptr)},
        {"per_bin_map", detail::score_cells_json(r.bin_map->map)},
        {"image_counts", detail::count_cells_json(r.bin_map->image_counts)},
        {"annotation_counts", detail::count_cells_json(r.bin_map->annotation_counts)},
        {"excluded_images", r.bin_map->excluded_images},
        {"filtered_images", r.bin_map->filtered_images},
    };
    auto cats = json::array();
    if (r.global_map) {
      for (const auto& c : r.global_map->per_category) {
        cats.push_back({{"category_id", c.category_id}, {"ground_truth", c.ground_truth}, {"detections", c.detections}, {"ap", c.ap}});
      }
    }
    j["evaluation"]["per_category"] = cats;
  } else {
    j["evaluation"] = nullptr;
  }
  return j;
}

inline std::string serialize_report(const AuditReport& report) { return to_json(report).dump(2) + "\n"; }

/// Quotes a CSV field when it contains a comma, quote, or line break;
/// embedded quotes are doubled.
inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string csv_row(std::initializer_list<std::string> fields) {
  std::string out;
  bool first = true;
  for (const auto& f : fields) {
    if (!first) out += ',';
    out += csv_field(f);
    first = false;
  }
  return out + "\r\n";
}

enum class TableFormat { Structured, Csv };

struct OutputDocument {
  std::string name;
  std::string content;

  bool operator==(const OutputDocument&) const = default;
};

namespace detail {

inline std::string num(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <class Cell>
std::string grid_csv(const std::array<std::array<Cell, kGridSize>, kGridSize>& cells) {
  std::string out = "exposure_bin";
  for (int c = 0; c < kGridSize; ++c) out += "," + csv_field("iso " + iso_bin_label(c));
  out += "\r\n";
  for (int r = 0; r < kGridSize; ++r) {
    out += csv_field(exposure_bin_label(r));
    for (int c = 0; c < kGridSize; ++c) {
      out += ',';
      if constexpr (std::is_same_v<Cell, std::optional<double>>) {
        if (cells[r][c]) out += num(*cells[r][c]);
      } else {
        out += num(static_cast<double>(cells[r][c]));
      }
    }
    out += "\r\n";
  }
  return out;
}

}  // namespace detail

/// Illumination table in the "count (percent)" layout, one row per split.
inline std::string illumination_csv(const IlluminationTable& t) {
  std::string out = csv_row({"split", "high", "high_pct", "mid", "mid_pct", "low", "low_pct", "profiled",
                             "below_ev_floor"});
  out += csv_row({t.split, std::to_string(t.high), detail::percent_label(t.percent(Illumination::High)),
                  std::to_string(t.mid), detail::percent_label(t.percent(Illumination::Mid)), std::to_string(t.low),
                  detail::percent_label(t.percent(Illumination::Low)), std::to_string(t.profiled()),
                  std::to_string(t.below_low_floor)});
  return out;
}

inline std::vector<OutputDocument> emit_tables(const AuditReport& report, TableFormat format) {
  if (format == TableFormat::Structured) return {{"report.json", serialize_report(report)}};

  std::vector<OutputDocument> docs;
  docs.push_back({"illumination.csv", illumination_csv(report.illumination)});
  docs.push_back({"count_grid.csv", detail::grid_csv(report.counts.cells)});
  docs.push_back({"percent_grid.csv", detail::grid_csv(report.percent.cells)});

  std::string marg = csv_row({"axis", "bin", "range", "count"});
  for (int i = 0; i < kGridSize; ++i) {
    marg += csv_row({"exposure", std::to_string(i), exposure_bin_label(i), std::to_string(report.marginals.exposure[i])});
  }
  for (int i = 0; i < kGridSize; ++i) {
    marg += csv_row({"iso", std::to_string(i), iso_bin_label(i), std::to_string(report.marginals.iso[i])});
  }
  docs.push_back({"marginals.csv", marg});

  std::string warn = csv_row({"image_id", "field", "reason"});
  for (const auto& w : report.warnings) warn += csv_row({w.image_id, w.field, w.reason});
  docs.push_back({"warnings.csv", warn});

  if (report.bin_map) {
    docs.push_back({"bin_map.csv", detail::grid_csv(report.bin_map->map)});
    std::string cats = csv_row({"category_id", "name", "ground_truth", "detections", "ap"});
    if (report.global_map) {
      for (const auto& c : report.global_map->per_category) {
        std::string name;
        for (const auto& cat : report.categories)
          if (cat.id == c.category_id) name = cat.name;
        cats += csv_row({std::to_string(c.category_id), name, std::to_string(c.ground_truth),
                         std::to_string(c.detections), detail::num(c.ap)});
      }
    }
    docs.push_back({"category_ap.csv", cats});
  }
  return docs;
}

inline std::vector<OutputDocument> emit_heatmaps(const AuditReport& report) {
  std::vector<OutputDocument> docs;
  HeatmapStyle count_style;
  count_style.title = "Images per bin (" + report.illumination.split + ")";
  count_style.value_precision = 0;
  docs.push_back({"count_grid.svg", render_heatmap(report.counts, count_style)});

  HeatmapStyle pct_style;
  pct_style.title = "% of images with exposure time and ISO (" + report.illumination.split + ")";
  pct_style.value_precision = 1;
  docs.push_back({"percent_grid.svg", render_heatmap(report.percent, pct_style)});

  if (report.bin_map) {
    HeatmapStyle map_style;
    map_style.title = "mAP@" + detail::num(report.iou_threshold) + " per bin (" + report.illumination.split + ")";
    docs.push_back({"bin_map.svg", render_heatmap(*report.bin_map, map_style)});
  }
  return docs;
}

}  // namespace capbias
