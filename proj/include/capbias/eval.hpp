#pragma once

// Detection scoring conditioned on sensor bins: IoU matching, 101-point
// interpolated AP at a single IoU threshold, per-bin mAP grids, and
// point-set precision/recall for interest-point repeatability.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "capbias/binning.hpp"
#include "capbias/error.hpp"
#include "capbias/exif_meta.hpp"
#include "capbias/photometry.hpp"

namespace capbias {

using ImageId = std::string;
using CategoryId = std::int64_t;

/// Axis-aligned box in pixels, top-left origin.
struct Box {
  double x = 0;
  double y = 0;
  double w = 0;
  double h = 0;

  bool valid() const { return std::isfinite(x) && std::isfinite(y) && w > 0 && h > 0 && std::isfinite(w) && std::isfinite(h); }
  bool operator==(const Box&) const = default;
};

struct GroundTruth {
  CategoryId category_id = 0;
  Box box;

  bool operator==(const GroundTruth&) const = default;
};

struct Detection {
  CategoryId category_id = 0;
  Box box;
  double score = 0;
  // Position in the source document; breaks score ties.
  std::size_t order = 0;

  bool operator==(const Detection&) const = default;
};

// Every manifest image has an entry, possibly empty.
using GroundTruthSet = std::map<ImageId, std::vector<GroundTruth>>;
using DetectionSet = std::map<ImageId, std::vector<Detection>>;

inline constexpr double kDefaultIouThreshold = 0.5;
inline constexpr std::size_t kDefaultMaxDets = 100;
inline constexpr int kRecallSteps = 101;

inline double iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
  const double ih = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

/// Detection indices in processing order: descending score, then source
/// order, then position.
inline std::vector<std::size_t> score_order(std::span<const Detection> dets) {
  std::vector<std::size_t> idx(dets.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
    return dets[a].order < dets[b].order;
  });
  return idx;
}

struct MatchResult {
  std::vector<bool> true_positive;  // indexed like the input detections
  std::vector<bool> gt_matched;     // indexed like the input ground truth
};

/// Greedy score-ordered matching within one (image, category) group. Each
/// detection takes the unmatched ground truth with the highest IoU at or
/// above the threshold; equal IoUs go to the earlier ground truth.
inline MatchResult match_detections(std::span<const Detection> dets, std::span<const GroundTruth> gts,
                                    double iou_threshold = kDefaultIouThreshold) {
  MatchResult out{std::vector<bool>(dets.size(), false), std::vector<bool>(gts.size(), false)};
  for (std::size_t d : score_order(dets)) {
    std::optional<std::size_t> best;
    double best_iou = iou_threshold;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (out.gt_matched[g]) continue;
      const double v = iou(dets[d].box, gts[g].box);
      if (v < best_iou || (best && v == best_iou)) continue;
      best_iou = v;
      best = g;
    }
    if (best) {
      out.gt_matched[*best] = true;
      out.true_positive[d] = true;
    }
  }
  return out;
}

struct LabeledDetection {
  double score = 0;
  std::size_t order = 0;
  bool true_positive = false;
};

/// 101-point interpolated average precision over detections pooled across
/// images.
inline double average_precision(std::span<const LabeledDetection> labeled, std::size_t n_positive) {
  if (n_positive == 0) throw Error(ErrorCode::NoPositives, "average precision is undefined without ground truth");

  std::vector<LabeledDetection> sorted(labeled.begin(), labeled.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const LabeledDetection& a, const LabeledDetection& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.order < b.order;
  });

  std::vector<double> recall(sorted.size()), precision(sorted.size());
  double tp = 0, fp = 0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    (sorted[i].true_positive ? tp : fp) += 1.0;
    recall[i] = tp / static_cast<double>(n_positive);
    precision[i] = tp / (tp + fp);
  }
  // Precision envelope: max precision at any recall >= this one.
  for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);

  double sum = 0;
  for (int k = 0; k < kRecallSteps; ++k) {
    const double r = static_cast<double>(k) / (kRecallSteps - 1);
    auto it = std::lower_bound(recall.begin(), recall.end(), r);
    if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return sum / kRecallSteps;
}

struct CategoryAp {
  CategoryId category_id = 0;
  std::size_t ground_truth = 0;
  std::size_t detections = 0;
  double ap = 0;

  bool operator==(const CategoryAp&) const = default;
};

struct MapResult {
  std::optional<double> map;  // absent when no category has ground truth
  std::vector<CategoryAp> per_category;

  bool operator==(const MapResult&) const = default;
};

/// mAP over the given images: mean AP over categories with at least one
/// ground-truth box among them. Categories without ground truth are skipped.
inline MapResult evaluate_map(const GroundTruthSet& gts, const DetectionSet& dets, std::span<const ImageId> images,
                              double iou_threshold = kDefaultIouThreshold) {
  static const std::vector<GroundTruth> kNoGt;
  static const std::vector<Detection> kNoDets;
  const auto gt_of = [&](const ImageId& id) -> const std::vector<GroundTruth>& {
    auto it = gts.find(id);
    return it == gts.end() ? kNoGt : it->second;
  };
  const auto dets_of = [&](const ImageId& id) -> const std::vector<Detection>& {
    auto it = dets.find(id);
    return it == dets.end() ? kNoDets : it->second;
  };

  std::set<CategoryId> categories;
  for (const auto& id : images)
    for (const auto& g : gt_of(id)) categories.insert(g.category_id);

  MapResult out;
  double sum = 0;
  for (CategoryId cat : categories) {
    CategoryAp entry{cat, 0, 0, 0};
    std::vector<LabeledDetection> labeled;
    for (const auto& id : images) {
      std::vector<GroundTruth> g;
      std::vector<Detection> d;
      for (const auto& x : gt_of(id))
        if (x.category_id == cat) g.push_back(x);
      for (const auto& x : dets_of(id))
        if (x.category_id == cat) d.push_back(x);
      const MatchResult m = match_detections(d, g, iou_threshold);
      for (std::size_t i = 0; i < d.size(); ++i) labeled.push_back({d[i].score, d[i].order, m.true_positive[i]});
      entry.ground_truth += g.size();
    }
    entry.detections = labeled.size();
    entry.ap = average_precision(labeled, entry.ground_truth);
    sum += entry.ap;
    out.per_category.push_back(entry);
  }
  if (!out.per_category.empty()) out.map = sum / static_cast<double>(out.per_category.size());
  return out;
}

using ScoreCells = std::array<std::array<std::optional<double>, kGridSize>, kGridSize>;
using CountCells = std::array<std::array<std::uint64_t, kGridSize>, kGridSize>;

struct BinScoreGrid {
  ScoreCells map{};
  CountCells image_counts{};
  CountCells annotation_counts{};
  std::uint64_t excluded_images = 0;  // no usable exposure/ISO
  std::uint64_t filtered_images = 0;  // outside the illumination filter

  bool operator==(const BinScoreGrid&) const = default;
};

struct BinMapOptions {
  double iou_threshold = kDefaultIouThreshold;
  /// Restrict to images of one illumination class (needs a full profile).
  std::optional<Illumination> illumination;
  EvMode ev_mode = EvMode::Photometric;
  ClassBoundaries bounds;
};

/// Partitions images by (exposure bin, ISO bin) and computes mAP inside each
/// cell. Cells whose images carry no ground truth stay undefined.
inline BinScoreGrid per_bin_map(const GroundTruthSet& gts, const DetectionSet& dets,
                                const std::map<ImageId, ExifRecord>& exif, const BinMapOptions& options = {}) {
  BinScoreGrid out;
  std::array<std::array<std::vector<ImageId>, kGridSize>, kGridSize> members;
  for (const auto& [id, boxes] : gts) {
    auto it = exif.find(id);
    if (it == exif.end() || !it->second.exposure_time_s || !it->second.iso) {
      ++out.excluded_images;
      continue;
    }
    const ExifRecord& rec = it->second;
    if (options.illumination) {
      Warnings ignored;
      auto p = profile(rec, options.ev_mode, ignored, options.bounds);
      if (!p || p->illumination != *options.illumination) {
        ++out.filtered_images;
        continue;
      }
    }
    const GridIndex cell = grid_index(*rec.exposure_time_s, *rec.iso);
    members[cell.row][cell.col].push_back(id);
    ++out.image_counts[cell.row][cell.col];
    out.annotation_counts[cell.row][cell.col] += boxes.size();
  }
  for (int r = 0; r < kGridSize; ++r) {
    for (int c = 0; c < kGridSize; ++c) {
      if (out.annotation_counts[r][c] == 0) continue;
      out.map[r][c] = evaluate_map(gts, dets, members[r][c], options.iou_threshold).map;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Interest-point repeatability

struct Point {
  double x = 0;
  double y = 0;

  bool operator==(const Point&) const = default;
};

/// Precision or recall is absent when its denominator set is empty.
struct PrPoint {
  std::optional<double> precision;
  std::optional<double> recall;

  bool operator==(const PrPoint&) const = default;
};

inline constexpr double kDefaultTolerancePx = 5.0;

/// One-to-one matching by ascending pair distance among pairs within
/// tolerance. precision = matches / |test|, recall = matches / |target|.
inline PrPoint repeatability_pr(std::span<const Point> target, std::span<const Point> test, double tolerance_px) {
  if (!(tolerance_px > 0)) throw Error(ErrorCode::InvalidArgument, "tolerance must be positive");
  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < target.size(); ++i) {
    for (std::size_t j = 0; j < test.size(); ++j) {
      const double d = std::hypot(target[i].x - test[j].x, target[i].y - test[j].y);
      if (d <= tolerance_px) pairs.emplace_back(d, i, j);
    }
  }
  std::sort(pairs.begin(), pairs.end());
  std::vector<bool> used_target(target.size()), used_test(test.size());
  std::size_t matches = 0;
  for (const auto& [d, i, j] : pairs) {
    if (used_target[i] || used_test[j]) continue;
    used_target[i] = used_test[j] = true;
    ++matches;
  }
  PrPoint out;
  if (!test.empty()) out.precision = static_cast<double>(matches) / static_cast<double>(test.size());
  if (!target.empty()) out.recall = static_cast<double>(matches) / static_cast<double>(target.size());
  return out;
}

/// Display floor for precision/recall grids: each component becomes
/// max(component, floor).
inline PrPoint threshold_pr(const PrPoint& p, double floor) {
  if (!(floor >= 0 && floor <= 1)) throw Error(ErrorCode::InvalidArgument, "floor must lie in [0, 1]");
  PrPoint out = p;
  if (out.precision) out.precision = std::max(*out.precision, floor);
  if (out.recall) out.recall = std::max(*out.recall, floor);
  return out;
}

struct Scenario {
  std::string label;
  GridIndex cell;
  std::vector<Point> points;
};

struct RepeatabilityGrid {
  ScoreCells precision{};
  ScoreCells recall{};
  CountCells scenario_counts{};
};

/// Scores every scenario against the shared target. Scenarios sharing a
/// cell are averaged over their defined components; the optional floor is
/// applied after averaging.
inline RepeatabilityGrid repeatability_grid(std::span<const Point> target, std::span<const Scenario> scenarios,
                                            double tolerance_px, std::optional<double> floor = std::nullopt) {
  struct Acc {
    double p_sum = 0, r_sum = 0;
    int p_n = 0, r_n = 0;
  };
  std::array<std::array<Acc, kGridSize>, kGridSize> acc{};
  RepeatabilityGrid out;
  for (const auto& s : scenarios) {
    if (s.cell.row < 0 || s.cell.row >= kGridSize || s.cell.col < 0 || s.cell.col >= kGridSize) {
      throw Error(ErrorCode::InvalidArgument, "scenario '" + s.label + "' has a cell outside the 8x8 grid");
    }
    const PrPoint pr = repeatability_pr(target, s.points, tolerance_px);
    Acc& a = acc[s.cell.row][s.cell.col];
    if (pr.precision) a.p_sum += *pr.precision, ++a.p_n;
    if (pr.recall) a.r_sum += *pr.recall, ++a.r_n;
    ++out.scenario_counts[s.cell.row][s.cell.col];
  }
  for (int r = 0; r < kGridSize; ++r) {
    for (int c = 0; c < kGridSize; ++c) {
      const Acc& a = acc[r][c];
      PrPoint p;
      if (a.p_n) p.precision = a.p_sum / a.p_n;
      if (a.r_n) p.recall = a.r_sum / a.r_n;
      if (floor) p = threshold_pr(p, *floor);
      out.precision[r][c] = p.precision;
      out.recall[r][c] = p.recall;
    }
  }
  return out;
}

}  // namespace capbias
