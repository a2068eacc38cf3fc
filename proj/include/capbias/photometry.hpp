#pragma once

// Exposure value, illuminance estimate, and illumination class.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "capbias/error.hpp"
#include "capbias/exif_meta.hpp"

namespace capbias {

enum class EvMode {
  /// ev = log2((f^2 / t) * (100 / iso)), the standard ISO-adjusted form.
  Photometric,
  /// ev = log2(f^2 / t + iso / 100), the additive form as printed.
  PaperVerbatim,
};

enum class Illumination { Low, Mid, High };

constexpr std::string_view to_string(EvMode mode) {
  return mode == EvMode::Photometric ? "photometric" : "paper";
}

constexpr std::string_view to_string(Illumination level) {
  switch (level) {
    case Illumination::Low: return "low";
    case Illumination::Mid: return "mid";
    case Illumination::High: return "high";
  }
  return "low";
}

inline std::optional<EvMode> parse_ev_mode(std::string_view text) {
  if (text == "photometric") return EvMode::Photometric;
  if (text == "paper") return EvMode::PaperVerbatim;
  return std::nullopt;
}

/// Fractional EV boundaries between the integer class ranges
/// Low [-4, 7], Mid [8, 10], High [11, ...).
struct ClassBoundaries {
  double low_mid = 7.5;
  double mid_high = 10.5;

  bool operator==(const ClassBoundaries&) const = default;
};

/// Lux per 2^EV; fits (7, 320), (8, 640), (10, 2560), (11, 5120) exactly.
inline constexpr double kLuxPerEvUnit = 2.5;

/// EV below this is still Low but counted separately.
inline constexpr double kLowRangeFloor = -4.0;

struct ExposureProfile {
  double ev = 0;
  double lux = 0;
  Illumination illumination = Illumination::Low;

  bool operator==(const ExposureProfile&) const = default;
};

inline double compute_ev(double f_number, double exposure_time_s, double iso, EvMode mode) {
  const auto positive = [](double v) { return std::isfinite(v) && v > 0; };
  if (!positive(f_number) || !positive(exposure_time_s) || !positive(iso)) {
    throw Error(ErrorCode::NonPositiveInput, "f-number, exposure time and ISO must be positive and finite");
  }
  const double aperture_term = f_number * f_number / exposure_time_s;
  if (!std::isfinite(aperture_term)) throw Error(ErrorCode::Overflow, "f^2/t is not representable");

  const double arg = mode == EvMode::Photometric ? aperture_term * (100.0 / iso) : aperture_term + iso / 100.0;
  const double ev = std::log2(arg);
  if (!std::isfinite(ev)) throw Error(ErrorCode::Overflow, "exposure value is not finite");
  return ev;
}

inline double ev_to_lux(double ev) { return kLuxPerEvUnit * std::exp2(ev); }

inline Illumination classify_illumination(double ev, const ClassBoundaries& bounds = {}) {
  if (ev < bounds.low_mid) return Illumination::Low;
  if (ev < bounds.mid_high) return Illumination::Mid;
  return Illumination::High;
}

/// Profile for a record with all three settings present; absent otherwise.
/// Arithmetic failures are reported as warnings.
inline std::optional<ExposureProfile> profile(const ExifRecord& record, EvMode mode, Warnings& warnings,
                                              const ClassBoundaries& bounds = {}) {
  if (!record.complete()) return std::nullopt;
  try {
    ExposureProfile p;
    p.ev = compute_ev(*record.f_number, *record.exposure_time_s, static_cast<double>(*record.iso), mode);
    p.lux = ev_to_lux(p.ev);
    p.illumination = classify_illumination(p.ev, bounds);
    return p;
  } catch (const Error& e) {
    warnings.push_back({record.image_id, "EV", e.what()});
    return std::nullopt;
  }
}

}  // namespace capbias
