#pragma once

// Deterministic SVG heatmaps for 8x8 sensor grids. Row 0 (shortest
// exposure) is drawn at the top, column 0 (lowest ISO) at the left.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "capbias/binning.hpp"
#include "capbias/eval.hpp"

namespace capbias {

struct HeatmapStyle {
  std::string title;
  int cell_px = 56;
  int value_precision = 2;
  /// Fixed color range; by default the min/max over defined cells.
  std::optional<std::pair<double, double>> range;
  std::string low_color = "#f7fbff";
  std::string high_color = "#08306b";
  std::string undefined_label = "no ground truth";
};

namespace detail {

inline std::string fixed(double v, int precision) {
  if (v == 0) v = 0;  // no "-0.00"
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, precision);
  return std::string(buf, res.ptr);
}

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::array<int, 3> parse_hex_color(std::string_view hex) {
  std::array<int, 3> rgb{};
  for (int i = 0; i < 3; ++i) {
    std::from_chars(hex.data() + 1 + 2 * i, hex.data() + 3 + 2 * i, rgb[i], 16);
  }
  return rgb;
}

inline std::string lerp_color(const std::string& lo, const std::string& hi, double t) {
  const auto a = parse_hex_color(lo), b = parse_hex_color(hi);
  char buf[8];
  int c[3];
  for (int i = 0; i < 3; ++i) c[i] = static_cast<int>(std::lround(a[i] + t * (b[i] - a[i])));
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c[0], c[1], c[2]);
  return buf;
}

inline std::string render_cells(const ScoreCells& cells, const HeatmapStyle& style) {
  const int cell = style.cell_px;
  const int left = 130, top = 76, legend_h = 96;
  const int width = left + kGridSize * cell + 24;
  const int height = top + kGridSize * cell + legend_h;

  double lo = 0, hi = 0;
  bool any_defined = false, any_undefined = false;
  for (const auto& row : cells) {
    for (const auto& v : row) {
      if (!v) {
        any_undefined = true;
        continue;
      }
      lo = any_defined ? std::min(lo, *v) : *v;
      hi = any_defined ? std::max(hi, *v) : *v;
      any_defined = true;
    }
  }
  if (style.range) std::tie(lo, hi) = *style.range;
  const auto unit = [&](double v) { return hi > lo ? std::clamp((v - lo) / (hi - lo), 0.0, 1.0) : 0.0; };

  std::string out;
  const auto px = [](int v) { return std::to_string(v); };
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + px(width) + "\" height=\"" + px(height) +
         "\" viewBox=\"0 0 " + px(width) + " " + px(height) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out += "<defs>\n";
  out += "<pattern id=\"hatch\" width=\"6\" height=\"6\" patternUnits=\"userSpaceOnUse\" "
         "patternTransform=\"rotate(45)\"><rect width=\"6\" height=\"6\" fill=\"#eeeeee\"/>"
         "<line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"6\" stroke=\"#999999\" stroke-width=\"2\"/></pattern>\n";
  out += "<linearGradient id=\"scale\"><stop offset=\"0\" stop-color=\"" + style.low_color +
         "\"/><stop offset=\"1\" stop-color=\"" + style.high_color + "\"/></linearGradient>\n";
  out += "</defs>\n";
  out += "<rect width=\"" + px(width) + "\" height=\"" + px(height) + "\" fill=\"#ffffff\"/>\n";
  out += "<text x=\"" + px(left) + "\" y=\"20\" font-size=\"14\" font-weight=\"bold\">" +
         xml_escape(style.title) + "</text>\n";
  out += "<text x=\"" + px(left + kGridSize * cell / 2) + "\" y=\"40\" text-anchor=\"middle\">ISO</text>\n";
  out += "<text x=\"14\" y=\"" + px(top + kGridSize * cell / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " +
         px(top + kGridSize * cell / 2) + ")\">exposure time (s)</text>\n";

  out += "<g class=\"col-labels\" text-anchor=\"middle\" font-size=\"9\">\n";
  for (int c = 0; c < kGridSize; ++c) {
    out += "<text x=\"" + px(left + c * cell + cell / 2) + "\" y=\"" + px(top - 8) + "\">" +
           xml_escape(iso_bin_label(c)) + "</text>\n";
  }
  out += "</g>\n<g class=\"row-labels\" text-anchor=\"end\" font-size=\"9\">\n";
  for (int r = 0; r < kGridSize; ++r) {
    out += "<text x=\"" + px(left - 6) + "\" y=\"" + px(top + r * cell + cell / 2 + 3) + "\">" +
           xml_escape(exposure_bin_label(r)) + "</text>\n";
  }
  out += "</g>\n<g class=\"cells\" stroke=\"#ffffff\" stroke-width=\"1\">\n";
  for (int r = 0; r < kGridSize; ++r) {
    for (int c = 0; c < kGridSize; ++c) {
      const auto& v = cells[r][c];
      const std::string pos = "x=\"" + px(left + c * cell) + "\" y=\"" + px(top + r * cell) + "\" width=\"" + px(cell) +
                              "\" height=\"" + px(cell) + "\"";
      const std::string data = " data-row=\"" + px(r) + "\" data-col=\"" + px(c) + "\"";
      if (!v) {
        out += "<rect " + pos + data + " class=\"undefined\" fill=\"url(#hatch)\"/>\n";
        continue;
      }
      const double t = unit(*v);
      out += "<rect " + pos + data + " data-value=\"" + fixed(*v, style.value_precision) + "\" fill=\"" +
             lerp_color(style.low_color, style.high_color, t) + "\"/>\n";
    }
  }
  out += "</g>\n<g class=\"values\" text-anchor=\"middle\" font-size=\"10\">\n";
  for (int r = 0; r < kGridSize; ++r) {
    for (int c = 0; c < kGridSize; ++c) {
      const auto& v = cells[r][c];
      if (!v) continue;
      out += "<text x=\"" + px(left + c * cell + cell / 2) + "\" y=\"" + px(top + r * cell + cell / 2 + 4) +
             "\" fill=\"" + (unit(*v) > 0.5 ? "#ffffff" : "#000000") + "\">" + fixed(*v, style.value_precision) +
             "</text>\n";
    }
  }
  out += "</g>\n";

  const int ly = top + kGridSize * cell + 24;
  out += "<g class=\"legend\">\n";
  out += "<rect x=\"" + px(left) + "\" y=\"" + px(ly) + "\" width=\"" + px(4 * cell) +
         "\" height=\"12\" fill=\"url(#scale)\" stroke=\"#666666\"/>\n";
  out += "<text x=\"" + px(left) + "\" y=\"" + px(ly + 26) + "\" class=\"min\">min " +
         (any_defined || style.range ? fixed(lo, style.value_precision) : std::string("n/a")) + "</text>\n";
  out += "<text x=\"" + px(left + 4 * cell) + "\" y=\"" + px(ly + 26) + "\" text-anchor=\"end\" class=\"max\">max " +
         (any_defined || style.range ? fixed(hi, style.value_precision) : std::string("n/a")) + "</text>\n";
  if (any_undefined) {
    out += "<rect x=\"" + px(left + 4 * cell + 24) + "\" y=\"" + px(ly) +
           "\" width=\"12\" height=\"12\" fill=\"url(#hatch)\" stroke=\"#666666\"/>\n";
    out += "<text x=\"" + px(left + 4 * cell + 42) + "\" y=\"" + px(ly + 10) + "\" class=\"undefined-note\">" +
           xml_escape(style.undefined_label) + "</text>\n";
  }
  out += "</g>\n</svg>\n";
  return out;
}

}  // namespace detail

/// Count and percent grids: every cell is defined.
inline std::string render_heatmap(const SensorGrid& grid, const HeatmapStyle& style) {
  ScoreCells cells{};
  for (int r = 0; r < kGridSize; ++r)
    for (int c = 0; c < kGridSize; ++c) cells[r][c] = grid.cells[r][c];
  return detail::render_cells(cells, style);
}

/// Score grids (per-bin mAP, precision, recall): absent cells are hatched.
inline std::string render_heatmap(const ScoreCells& cells, const HeatmapStyle& style) {
  return detail::render_cells(cells, style);
}

inline std::string render_heatmap(const BinScoreGrid& grid, const HeatmapStyle& style) {
  return detail::render_cells(grid.map, style);
}

}  // namespace capbias
