#pragma once

// Brute-force reference for matching and 101-point AP. Written without
// reference to the library's implementation: no precision envelope, no
// floating recall thresholds. Recall r_k = k/100 is reached at rank i when
// 100 * tp_i >= k * n_positive, compared in integers.

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace oracle {

struct Box {
  double x, y, w, h;
};

struct Gt {
  std::string image;
  long category;
  Box box;
};

struct Det {
  std::string image;
  long category;
  Box box;
  double score;
  std::size_t order;
};

inline double overlap(const Box& a, const Box& b) {
  const double x0 = std::max(a.x, b.x), y0 = std::max(a.y, b.y);
  const double x1 = std::min(a.x + a.w, b.x + b.w), y1 = std::min(a.y + a.h, b.y + b.h);
  const double inter = std::max(0.0, x1 - x0) * std::max(0.0, y1 - y0);
  if (inter == 0) return 0;
  return inter / (a.w * a.h + b.w * b.h - inter);
}

// Precision-at-rank list (tp count, rank) -> AP.
inline double ap_from_flags(const std::vector<bool>& tp_in_rank_order, std::int64_t n_positive) {
  double total = 0;
  for (std::int64_t k = 0; k <= 100; ++k) {
    double best = 0;
    std::int64_t tp = 0;
    for (std::size_t i = 0; i < tp_in_rank_order.size(); ++i) {
      if (tp_in_rank_order[i]) ++tp;
      if (100 * tp >= k * n_positive) {
        best = std::max(best, static_cast<double>(tp) / static_cast<double>(i + 1));
      }
    }
    total += best;
  }
  return total / 101.0;
}

// AP of one category over all images.
inline double category_ap(const std::vector<Gt>& gts, const std::vector<Det>& dets, long category, double thr) {
  std::vector<Det> d;
  for (const auto& x : dets)
    if (x.category == category) d.push_back(x);
  std::vector<Gt> g;
  for (const auto& x : gts)
    if (x.category == category) g.push_back(x);

  // Rank order across all images: score descending, then input order.
  std::sort(d.begin(), d.end(), [](const Det& a, const Det& b) {
    return a.score > b.score || (a.score == b.score && a.order < b.order);
  });
  std::vector<bool> taken(g.size(), false), flags;
  for (const auto& det : d) {
    long best = -1;
    double best_iou = -1;
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (taken[j] || g[j].image != det.image) continue;
      const double v = overlap(det.box, g[j].box);
      if (v >= thr && v > best_iou) {
        best_iou = v;
        best = static_cast<long>(j);
      }
    }
    if (best >= 0) taken[static_cast<std::size_t>(best)] = true;
    flags.push_back(best >= 0);
  }
  return ap_from_flags(flags, static_cast<std::int64_t>(g.size()));
}

inline double mean_ap(const std::vector<Gt>& gts, const std::vector<Det>& dets, double thr) {
  std::set<long> cats;
  for (const auto& g : gts) cats.insert(g.category);
  if (cats.empty()) return -1;
  double sum = 0;
  for (long c : cats) sum += category_ap(gts, dets, c, thr);
  return sum / static_cast<double>(cats.size());
}

}  // namespace oracle
