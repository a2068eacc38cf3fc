#pragma once

// Capture-metadata extraction: JPEG APP1 / bare TIFF EXIF blocks and sidecar
// documents, normalized into ExifRecord values.

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "capbias/error.hpp"

namespace capbias {

enum class ByteOrder { LittleEndian, BigEndian };

// TIFF field types, numbered as in the TIFF 6.0 directory entry.
enum class ValueKind : std::uint16_t {
  Byte = 1,
  Ascii = 2,
  Short = 3,
  Long = 4,
  Rational = 5,
  SByte = 6,
  Undefined = 7,
  SShort = 8,
  SLong = 9,
  SRational = 10,
  Float = 11,
  Double = 12,
};

enum class IfdKind { Primary, Exif };

namespace tags {
inline constexpr std::uint16_t kMake = 0x010F;
inline constexpr std::uint16_t kExposureTime = 0x829A;
inline constexpr std::uint16_t kFNumber = 0x829D;
inline constexpr std::uint16_t kExifIfdPointer = 0x8769;
inline constexpr std::uint16_t kIsoSpeed = 0x8827;
inline constexpr std::uint16_t kMakerNote = 0x927C;
}  // namespace tags

/// A TIFF RATIONAL / SRATIONAL as stored. The denominator may be zero in a
/// raw tag; real() reports that case as absent.
struct Rational {
  std::int64_t numerator = 0;
  std::int64_t denominator = 1;

  std::optional<double> real() const {
    if (denominator == 0) return std::nullopt;
    double v = static_cast<double>(numerator) / static_cast<double>(denominator);
    if (!std::isfinite(v)) return std::nullopt;
    return v;
  }

  bool operator==(const Rational&) const = default;
};

using TagPayload = std::variant<std::vector<std::uint8_t>,   // Byte, Undefined
                                std::string,                 // Ascii
                                std::vector<std::int64_t>,   // all integer kinds
                                std::vector<Rational>,       // Rational, SRational
                                std::vector<double>>;        // Float, Double

struct TagEntry {
  IfdKind ifd = IfdKind::Primary;
  std::uint16_t tag = 0;
  ValueKind kind = ValueKind::Undefined;
  std::uint32_t count = 0;
  TagPayload payload;

  bool operator==(const TagEntry&) const = default;
};

struct RawTagSet {
  ByteOrder byte_order = ByteOrder::LittleEndian;
  std::vector<TagEntry> entries;
  // Entries whose value lay outside the buffer or had an unknown type.
  std::size_t dropped_entries = 0;

  /// Looks up a tag, preferring the Exif sub-IFD over IFD0.
  const TagEntry* find(std::uint16_t tag) const {
    const TagEntry* fallback = nullptr;
    for (const auto& e : entries) {
      if (e.tag != tag) continue;
      if (e.ifd == IfdKind::Exif) return &e;
      if (!fallback) fallback = &e;
    }
    return fallback;
  }
};

/// Normalized capture settings for one image.
struct ExifRecord {
  std::string image_id;
  std::optional<double> exposure_time_s;
  std::optional<double> f_number;
  std::optional<std::uint32_t> iso;

  bool complete() const { return exposure_time_s && f_number && iso; }
  bool any() const { return exposure_time_s || f_number || iso; }

  bool operator==(const ExifRecord&) const = default;
};

namespace detail {

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> data, ByteOrder order) : data_(data), order_(order) {}

  std::size_t size() const { return data_.size(); }
  bool in_bounds(std::uint64_t offset, std::uint64_t length) const {
    return offset <= data_.size() && length <= data_.size() - offset;
  }

  std::uint16_t u16(std::size_t off) const {
    std::uint16_t a = data_[off], b = data_[off + 1];
    return order_ == ByteOrder::LittleEndian ? static_cast<std::uint16_t>(a | (b << 8))
                                             : static_cast<std::uint16_t>((a << 8) | b);
  }

  std::uint32_t u32(std::size_t off) const {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      std::uint32_t byte = data_[off + (order_ == ByteOrder::LittleEndian ? 3 - i : i)];
      v = (v << 8) | byte;
    }
    return v;
  }

  std::uint64_t u64(std::size_t off) const {
    std::uint64_t first = u32(off), second = u32(off + 4);
    return order_ == ByteOrder::LittleEndian ? (second << 32) | first : (first << 32) | second;
  }

  std::uint8_t u8(std::size_t off) const { return data_[off]; }

 private:
  std::span<const std::uint8_t> data_;
  ByteOrder order_;
};

inline std::size_t value_kind_size(std::uint16_t type) {
  switch (type) {
    case 1: case 2: case 6: case 7: return 1;
    case 3: case 8: return 2;
    case 4: case 9: case 11: return 4;
    case 5: case 10: case 12: return 8;
    default: return 0;
  }
}

inline TagPayload decode_payload(const ByteReader& r, ValueKind kind, std::uint32_t count, std::size_t at) {
  switch (kind) {
    case ValueKind::Byte:
    case ValueKind::Undefined: {
      std::vector<std::uint8_t> out(count);
      for (std::uint32_t i = 0; i < count; ++i) out[i] = r.u8(at + i);
      return out;
    }
    case ValueKind::Ascii: {
      std::string s;
      s.reserve(count);
      for (std::uint32_t i = 0; i < count; ++i) s.push_back(static_cast<char>(r.u8(at + i)));
      while (!s.empty() && s.back() == '\0') s.pop_back();
      return s;
    }
    case ValueKind::Short:
    case ValueKind::SShort:
    case ValueKind::Long:
    case ValueKind::SLong:
    case ValueKind::SByte: {
      std::vector<std::int64_t> out(count);
      for (std::uint32_t i = 0; i < count; ++i) {
        switch (kind) {
          case ValueKind::Short: out[i] = r.u16(at + 2 * i); break;
          case ValueKind::SShort: out[i] = static_cast<std::int16_t>(r.u16(at + 2 * i)); break;
          case ValueKind::Long: out[i] = r.u32(at + 4 * i); break;
          case ValueKind::SLong: out[i] = static_cast<std::int32_t>(r.u32(at + 4 * i)); break;
          default: out[i] = static_cast<std::int8_t>(r.u8(at + i)); break;
        }
      }
      return out;
    }
    case ValueKind::Rational:
    case ValueKind::SRational: {
      std::vector<Rational> out(count);
      for (std::uint32_t i = 0; i < count; ++i) {
        std::uint32_t n = r.u32(at + 8 * i), d = r.u32(at + 8 * i + 4);
        if (kind == ValueKind::Rational) {
          out[i] = {n, d};
        } else {
          out[i] = {static_cast<std::int32_t>(n), static_cast<std::int32_t>(d)};
        }
      }
      return out;
    }
    case ValueKind::Float:
    case ValueKind::Double: {
      std::vector<double> out(count);
      for (std::uint32_t i = 0; i < count; ++i) {
        out[i] = kind == ValueKind::Float ? static_cast<double>(std::bit_cast<float>(r.u32(at + 4 * i)))
                                          : std::bit_cast<double>(r.u64(at + 8 * i));
      }
      return out;
    }
  }
  return std::vector<std::uint8_t>{};
}

inline bool starts_with(std::span<const std::uint8_t> data, std::string_view prefix) {
  return data.size() >= prefix.size() &&
         std::equal(prefix.begin(), prefix.end(), data.begin(),
                    [](char a, std::uint8_t b) { return static_cast<std::uint8_t>(a) == b; });
}

inline bool is_tiff(std::span<const std::uint8_t> data) {
  return starts_with(data, std::string_view("II*\0", 4)) || starts_with(data, std::string_view("MM\0*", 4));
}

}  // namespace detail

/// Locates the TIFF-structured EXIF payload. JPEG input yields the contents of
/// the first APP1 segment carrying the "Exif\0\0" header (header stripped);
/// bare TIFF input is returned unchanged.
inline std::vector<std::uint8_t> extract_exif_segment(std::span<const std::uint8_t> bytes) {
  if (detail::is_tiff(bytes)) return {bytes.begin(), bytes.end()};
  if (bytes.size() < 2 || bytes[0] != 0xFF || bytes[1] != 0xD8) {
    throw Error(ErrorCode::NotAnImage, "no JPEG SOI marker or TIFF header");
  }

  static constexpr std::string_view kExifHeader("Exif\0\0", 6);
  std::size_t pos = 2;
  while (pos + 1 < bytes.size()) {
    if (bytes[pos] != 0xFF) break;  // lost marker sync
    std::uint8_t marker = bytes[pos + 1];
    if (marker == 0xFF) {  // fill byte
      ++pos;
      continue;
    }
    pos += 2;
    if (marker == 0x01 || (marker >= 0xD0 && marker <= 0xD7)) continue;  // no length field
    if (marker == 0xDA || marker == 0xD9) break;                         // entropy-coded data follows
    if (pos + 2 > bytes.size()) break;
    std::size_t length = (static_cast<std::size_t>(bytes[pos]) << 8) | bytes[pos + 1];
    if (length < 2 || pos + length > bytes.size()) break;
    auto body = bytes.subspan(pos + 2, length - 2);
    if (marker == 0xE1 && detail::starts_with(body, kExifHeader)) {
      auto tiff = body.subspan(kExifHeader.size());
      return {tiff.begin(), tiff.end()};
    }
    pos += length;
  }
  throw Error(ErrorCode::NoExifSegment, "JPEG stream has no APP1 Exif segment");
}

/// Walks IFD0 and the Exif sub-IFD (tag 0x8769). MakerNotes and IFD1
/// (thumbnail) are not visited.
inline RawTagSet parse_tag_set(std::span<const std::uint8_t> tiff) {
  if (tiff.size() < 8) throw Error(ErrorCode::MalformedHeader, "TIFF header shorter than 8 bytes");
  RawTagSet out;
  if (tiff[0] == 'I' && tiff[1] == 'I') {
    out.byte_order = ByteOrder::LittleEndian;
  } else if (tiff[0] == 'M' && tiff[1] == 'M') {
    out.byte_order = ByteOrder::BigEndian;
  } else {
    throw Error(ErrorCode::MalformedHeader, "unknown byte-order mark");
  }
  detail::ByteReader r(tiff, out.byte_order);
  if (r.u16(2) != 42) throw Error(ErrorCode::MalformedHeader, "TIFF magic is not 42");

  std::set<std::uint32_t> visited;
  std::vector<std::pair<std::uint32_t, IfdKind>> pending{{r.u32(4), IfdKind::Primary}};
  while (!pending.empty()) {
    auto [offset, ifd] = pending.front();
    pending.erase(pending.begin());
    if (!visited.insert(offset).second) {
      throw Error(ErrorCode::CyclicIfd, "IFD offset " + std::to_string(offset) + " visited twice");
    }
    if (!r.in_bounds(offset, 2)) {
      throw Error(ErrorCode::TruncatedIfd, "IFD offset " + std::to_string(offset) + " beyond buffer");
    }
    const std::uint16_t n = r.u16(offset);
    if (!r.in_bounds(offset + 2ULL, 12ULL * n)) {
      throw Error(ErrorCode::TruncatedIfd, "IFD at " + std::to_string(offset) + " runs past buffer");
    }

    std::set<std::uint16_t> seen;
    for (std::uint16_t i = 0; i < n; ++i) {
      const std::size_t at = offset + 2 + 12 * static_cast<std::size_t>(i);
      const std::uint16_t tag = r.u16(at);
      const std::uint16_t type = r.u16(at + 2);
      const std::uint32_t count = r.u32(at + 4);
      if (tag == tags::kMakerNote) continue;
      // First occurrence wins when a tag repeats within one IFD.
      if (!seen.insert(tag).second) continue;

      const std::size_t elem = detail::value_kind_size(type);
      if (elem == 0) {
        ++out.dropped_entries;
        continue;
      }
      const std::uint64_t total = static_cast<std::uint64_t>(elem) * count;
      std::uint64_t value_at = at + 8;
      if (total > 4) value_at = r.u32(at + 8);
      if (!r.in_bounds(value_at, total)) {
        ++out.dropped_entries;
        continue;
      }

      const auto kind = static_cast<ValueKind>(type);
      TagEntry entry{ifd, tag, kind, count,
                     detail::decode_payload(r, kind, count, static_cast<std::size_t>(value_at))};
      if (tag == tags::kExifIfdPointer && count >= 1) {
        if (const auto* v = std::get_if<std::vector<std::int64_t>>(&entry.payload)) {
          pending.emplace_back(static_cast<std::uint32_t>(v->front()), IfdKind::Exif);
        }
      }
      out.entries.push_back(std::move(entry));
    }
  }
  return out;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

// Parses "[-]digits[.digits]" into mantissa / 10^scale.
inline std::optional<std::pair<std::int64_t, int>> parse_decimal(std::string_view s) {
  s = trim(s);
  bool negative = false;
  if (!s.empty() && (s.front() == '-' || s.front() == '+')) {
    negative = s.front() == '-';
    s.remove_prefix(1);
  }
  if (s.empty()) return std::nullopt;
  std::int64_t mantissa = 0;
  int scale = 0, digits = 0;
  bool dot = false;
  for (char c : s) {
    if (c == '.' && !dot) {
      dot = true;
      continue;
    }
    if (c < '0' || c > '9') return std::nullopt;
    if (++digits > 17) return std::nullopt;
    mantissa = mantissa * 10 + (c - '0');
    if (dot) ++scale;
  }
  if (digits == 0) return std::nullopt;
  return std::pair{negative ? -mantissa : mantissa, scale};
}

inline std::int64_t pow10(int n) {
  std::int64_t v = 1;
  while (n-- > 0) v *= 10;
  return v;
}

}  // namespace detail

/// Exact rational from "a/b" or a decimal string ("0.005" -> 5/1000).
/// Returns nullopt for anything else, including values too long to hold
/// exactly in 64 bits.
inline std::optional<Rational> parse_rational_text(std::string_view text) {
  text = detail::trim(text);
  const auto slash = text.find('/');
  auto num = detail::parse_decimal(text.substr(0, slash));
  if (!num) return std::nullopt;
  std::pair<std::int64_t, int> den{1, 0};
  if (slash != std::string_view::npos) {
    auto d = detail::parse_decimal(text.substr(slash + 1));
    if (!d) return std::nullopt;
    den = *d;
  }
  // (p / 10^m) / (q / 10^n) = (p * 10^n) / (q * 10^m)
  const auto scale_by = [](std::int64_t v, int e) -> std::optional<std::int64_t> {
    std::int64_t out = 0;
    if (__builtin_mul_overflow(v, detail::pow10(e), &out)) return std::nullopt;
    return out;
  };
  if (num->second > 18 || den.second > 18) return std::nullopt;
  auto p = scale_by(num->first, den.second);
  auto q = scale_by(den.first, num->second);
  if (!p || !q) return std::nullopt;
  return Rational{*p, *q};
}

/// Real value of a sidecar string: "a/b", or anything std::from_chars
/// accepts ("0.005", "1e-3"). An "f/" prefix is tolerated.
inline std::optional<double> parse_real_text(std::string_view text) {
  text = detail::trim(text);
  if (text.size() > 2 && (text.substr(0, 2) == "f/" || text.substr(0, 2) == "F/")) text.remove_prefix(2);
  if (text.find('/') != std::string_view::npos) {
    auto r = parse_rational_text(text);
    return r ? r->real() : std::nullopt;
  }
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

namespace detail {

inline void warn_invalid(Warnings& warnings, const std::string& id, std::string_view field,
                         std::string_view why) {
  warnings.push_back({id, std::string(field), "InvalidTagValue: " + std::string(why)});
}

inline std::optional<double> positive_real_tag(const RawTagSet& tag_set, std::uint16_t tag, std::string_view field,
                                               const std::string& id, Warnings& warnings) {
  const TagEntry* e = tag_set.find(tag);
  if (!e) return std::nullopt;
  std::optional<double> value;
  if (const auto* rs = std::get_if<std::vector<Rational>>(&e->payload)) {
    if (rs->empty()) {
      warn_invalid(warnings, id, field, "empty value");
      return std::nullopt;
    }
    value = rs->front().real();
    if (!value) {
      warn_invalid(warnings, id, field, "zero denominator");
      return std::nullopt;
    }
  } else if (const auto* is = std::get_if<std::vector<std::int64_t>>(&e->payload); is && !is->empty()) {
    value = static_cast<double>(is->front());
  } else if (const auto* ds = std::get_if<std::vector<double>>(&e->payload); ds && !ds->empty()) {
    value = ds->front();
  } else {
    warn_invalid(warnings, id, field, "unexpected value type");
    return std::nullopt;
  }
  if (!(std::isfinite(*value) && *value > 0)) {
    warn_invalid(warnings, id, field, "non-positive value");
    return std::nullopt;
  }
  return value;
}

}  // namespace detail

/// Maps ExposureTime, FNumber and the first ISOSpeedRatings value into an
/// ExifRecord. Invalid values become absent fields plus a warning.
inline ExifRecord to_exif_record(const RawTagSet& tag_set, std::string image_id, Warnings& warnings) {
  ExifRecord rec;
  rec.image_id = std::move(image_id);
  rec.exposure_time_s =
      detail::positive_real_tag(tag_set, tags::kExposureTime, "ExposureTime", rec.image_id, warnings);
  rec.f_number = detail::positive_real_tag(tag_set, tags::kFNumber, "FNumber", rec.image_id, warnings);

  if (const TagEntry* e = tag_set.find(tags::kIsoSpeed)) {
    const auto* is = std::get_if<std::vector<std::int64_t>>(&e->payload);
    if (!is || is->empty()) {
      detail::warn_invalid(warnings, rec.image_id, "ISO", "unexpected value type");
    } else if (is->front() < 1 || is->front() > std::numeric_limits<std::uint32_t>::max()) {
      detail::warn_invalid(warnings, rec.image_id, "ISO", "non-positive value");
    } else {
      rec.iso = static_cast<std::uint32_t>(is->front());
    }
  }
  return rec;
}

/// Convenience: whole-file path from image bytes to a record. Parser errors
/// propagate as Error.
inline ExifRecord read_exif_record(std::span<const std::uint8_t> image_bytes, std::string image_id,
                                   Warnings& warnings) {
  auto tiff = extract_exif_segment(image_bytes);
  return to_exif_record(parse_tag_set(tiff), std::move(image_id), warnings);
}

namespace detail {

inline std::optional<std::string> json_text(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_number()) {
    // Numbers are re-parsed through the same text path as strings.
    return v.dump();
  }
  return std::nullopt;
}

}  // namespace detail

/// Parses a sidecar metadata document: a top-level JSON list of entries
/// {"id", "ExposureTime"?, "FNumber"?, "ISO"?}.
inline std::vector<ExifRecord> parse_sidecar(std::string_view document, Warnings& warnings) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(document);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::MalformedDocument, std::string("sidecar is not valid JSON: ") + e.what());
  }
  if (!doc.is_array()) throw Error(ErrorCode::MalformedDocument, "sidecar top level must be a list");

  std::vector<ExifRecord> out;
  out.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& entry = doc[i];
    if (!entry.is_object() || !entry.contains("id")) {
      throw Error(ErrorCode::MalformedDocument, "sidecar entry " + std::to_string(i) + " has no id");
    }
    auto id = detail::json_text(entry["id"]);
    if (!id) throw Error(ErrorCode::MalformedDocument, "sidecar entry " + std::to_string(i) + " has a non-scalar id");

    ExifRecord rec;
    rec.image_id = *id;
    const auto real_field = [&](const char* name) -> std::optional<double> {
      if (!entry.contains(name) || entry[name].is_null()) return std::nullopt;
      auto text = detail::json_text(entry[name]);
      auto v = text ? parse_real_text(*text) : std::nullopt;
      if (!v) {
        detail::warn_invalid(warnings, rec.image_id, name, "unparseable value");
        return std::nullopt;
      }
      if (!(*v > 0)) {
        detail::warn_invalid(warnings, rec.image_id, name, "non-positive value");
        return std::nullopt;
      }
      return v;
    };
    rec.exposure_time_s = real_field("ExposureTime");
    rec.f_number = real_field("FNumber");
    if (entry.contains("ISO") && !entry["ISO"].is_null()) {
      auto text = detail::json_text(entry["ISO"]);
      std::uint64_t iso = 0;
      bool ok = false;
      if (text) {
        auto t = detail::trim(*text);
        auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), iso);
        ok = ec == std::errc{} && ptr == t.data() + t.size();
      }
      if (!ok) {
        detail::warn_invalid(warnings, rec.image_id, "ISO", "unparseable value");
      } else if (iso < 1 || iso > std::numeric_limits<std::uint32_t>::max()) {
        detail::warn_invalid(warnings, rec.image_id, "ISO", "non-positive value");
      } else {
        rec.iso = static_cast<std::uint32_t>(iso);
      }
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace capbias
