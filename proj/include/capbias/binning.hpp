#pragma once

// 8x8 exposure-time x ISO grid. Rows are exposure bins (shortest at row 0),
// columns are ISO bins (lowest at column 0). All intervals are half-open.

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>

#include "capbias/error.hpp"
#include "capbias/exif_meta.hpp"

namespace capbias {

inline constexpr int kGridSize = 8;

/// Lower edges of the exposure bins in seconds; bin 7 is [0.875, inf).
inline constexpr std::array<double, kGridSize> kExposureLowerEdges = {0.0,   0.125, 0.25,  0.375,
                                                                      0.5,   0.625, 0.75,  0.875};

/// ISO bin edges; values at or above the last edge clamp into bin 7.
inline constexpr std::array<std::uint32_t, kGridSize + 1> kIsoEdges = {0,    100,  200,  400, 800,
                                                                       1600, 3200, 6400, 10000};

struct GridIndex {
  int row = 0;  // exposure bin
  int col = 0;  // ISO bin

  bool operator==(const GridIndex&) const = default;
};

inline int exposure_bin(double exposure_time_s) {
  if (!(exposure_time_s > 0)) throw Error(ErrorCode::NonPositiveExposure, "exposure time must be positive");
  // 8 * t is exact in binary floating point, so the edges k/8 land exactly.
  const double scaled = std::floor(exposure_time_s * kGridSize);
  return scaled >= kGridSize - 1 ? kGridSize - 1 : static_cast<int>(scaled);
}

inline int iso_bin(std::uint32_t iso) {
  if (iso < 1) throw Error(ErrorCode::NonPositiveIso, "ISO must be at least 1");
  for (int i = kGridSize - 1; i > 0; --i) {
    if (iso >= kIsoEdges[i]) return i;
  }
  return 0;
}

inline bool iso_clamped(std::uint32_t iso) { return iso >= kIsoEdges[kGridSize]; }

inline GridIndex grid_index(double exposure_time_s, std::uint32_t iso) {
  return {exposure_bin(exposure_time_s), iso_bin(iso)};
}

namespace detail {

inline std::string shortest(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

/// Human-readable half-open range of an exposure bin, e.g. "[0.125, 0.25)".
inline std::string exposure_bin_label(int bin) {
  if (bin == kGridSize - 1) return "[" + detail::shortest(kExposureLowerEdges[bin]) + ", inf)";
  return "[" + detail::shortest(kExposureLowerEdges[bin]) + ", " + detail::shortest(kExposureLowerEdges[bin + 1]) + ")";
}

/// The last ISO bin also holds clamped values at or above 10000.
inline std::string iso_bin_label(int bin) {
  if (bin == kGridSize - 1) return "[" + std::to_string(kIsoEdges[bin]) + ", inf)";
  return "[" + std::to_string(kIsoEdges[bin]) + ", " + std::to_string(kIsoEdges[bin + 1]) + ")";
}

enum class GridKind { Count, Percent, Score };

constexpr std::string_view to_string(GridKind kind) {
  switch (kind) {
    case GridKind::Count: return "count";
    case GridKind::Percent: return "percent";
    case GridKind::Score: return "score";
  }
  return "count";
}

using GridCells = std::array<std::array<double, kGridSize>, kGridSize>;

struct SensorGrid {
  GridCells cells{};
  GridKind kind = GridKind::Count;
  std::uint64_t total_assigned = 0;
  std::uint64_t clamped_iso_count = 0;
  std::uint64_t skipped_count = 0;

  double at(GridIndex idx) const { return cells[idx.row][idx.col]; }

  double sum() const {
    double s = 0;
    for (const auto& row : cells)
      for (double v : row) s += v;
    return s;
  }

  bool operator==(const SensorGrid&) const = default;
};

/// Cell-wise merge of two Count grids (associative and commutative).
inline SensorGrid merge(const SensorGrid& a, const SensorGrid& b) {
  SensorGrid out;
  for (int r = 0; r < kGridSize; ++r)
    for (int c = 0; c < kGridSize; ++c) out.cells[r][c] = a.cells[r][c] + b.cells[r][c];
  out.total_assigned = a.total_assigned + b.total_assigned;
  out.clamped_iso_count = a.clamped_iso_count + b.clamped_iso_count;
  out.skipped_count = a.skipped_count + b.skipped_count;
  return out;
}

/// 100 * count / total_assigned; all zeros when nothing was assigned.
inline SensorGrid to_percent(const SensorGrid& counts) {
  SensorGrid out = counts;
  out.kind = GridKind::Percent;
  if (counts.total_assigned == 0) {
    out.cells = {};
    return out;
  }
  const double total = static_cast<double>(counts.total_assigned);
  for (auto& row : out.cells)
    for (double& v : row) v = 100.0 * v / total;
  return out;
}

inline SensorGrid accumulate_grid(std::span<const ExifRecord> records, GridKind kind = GridKind::Count) {
  SensorGrid grid;
  for (const auto& rec : records) {
    if (!rec.exposure_time_s || !rec.iso || !(*rec.exposure_time_s > 0) || *rec.iso < 1) {
      ++grid.skipped_count;
      continue;
    }
    const GridIndex idx = grid_index(*rec.exposure_time_s, *rec.iso);
    grid.cells[idx.row][idx.col] += 1.0;
    ++grid.total_assigned;
    if (iso_clamped(*rec.iso)) ++grid.clamped_iso_count;
  }
  return kind == GridKind::Percent ? to_percent(grid) : grid;
}

struct Marginals {
  std::array<std::uint64_t, kGridSize> exposure{};
  std::array<std::uint64_t, kGridSize> iso{};

  bool operator==(const Marginals&) const = default;
};

/// Row and column sums of a Count grid.
inline Marginals marginals_of(const SensorGrid& counts) {
  Marginals m;
  for (int r = 0; r < kGridSize; ++r) {
    for (int c = 0; c < kGridSize; ++c) {
      const auto v = static_cast<std::uint64_t>(counts.cells[r][c]);
      m.exposure[r] += v;
      m.iso[c] += v;
    }
  }
  return m;
}

inline Marginals marginal_histograms(std::span<const ExifRecord> records) {
  return marginals_of(accumulate_grid(records, GridKind::Count));
}

}  // namespace capbias
