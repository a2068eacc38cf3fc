#pragma once

// Remote metadata provider client: rate-limited HTTP fetches with a
// verbatim on-disk response cache.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "capbias/error.hpp"
#include "capbias/exif_meta.hpp"

namespace capbias {

/// endpoint_template must start with "http://" and may use {key} and
/// {credential} placeholders. Without a {credential} placeholder the
/// credential is sent in an X-Api-Key header.
struct ProviderConfig {
  std::string endpoint_template;
  std::string credential_env = "CAPBIAS_PROVIDER_KEY";
  double max_requests_per_second = 1.0;
  int max_retries = 2;
  std::chrono::seconds max_retry_after{60};
  std::chrono::seconds timeout{10};
};

enum class FetchStatus { Ok, NotFound, RateLimited, ProviderUnavailable };

constexpr std::string_view to_string(FetchStatus s) {
  switch (s) {
    case FetchStatus::Ok: return "Ok";
    case FetchStatus::NotFound: return "NotFound";
    case FetchStatus::RateLimited: return "RateLimited";
    case FetchStatus::ProviderUnavailable: return "ProviderUnavailable";
  }
  return "ProviderUnavailable";
}

struct FetchResult {
  FetchStatus status = FetchStatus::ProviderUnavailable;
  std::optional<RawTagSet> tags;
  bool from_cache = false;
  std::string message;
};

namespace detail {

inline std::string percent_encode(std::string_view s) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out.push_back(static_cast<char>(c));
    } else {
      out += '%';
      out += kHex[c >> 4];
      out += kHex[c & 15];
    }
  }
  return out;
}

inline void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size()) {
    s.replace(pos, from.size(), to);
  }
}

inline std::optional<std::uint16_t> tag_for_name(std::string_view name) {
  if (name == "ExposureTime") return tags::kExposureTime;
  if (name == "FNumber") return tags::kFNumber;
  if (name == "ISO" || name == "ISOSpeedRatings" || name == "PhotographicSensitivity") return tags::kIsoSpeed;
  return std::nullopt;
}

inline void add_text_tag(RawTagSet& set, std::uint16_t tag, std::string_view value) {
  if (set.find(tag)) return;
  if (tag == tags::kIsoSpeed) {
    std::int64_t iso = 0;
    auto t = trim(value);
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), iso);
    if (ec != std::errc{} || ptr != t.data() + t.size()) return;
    set.entries.push_back({IfdKind::Exif, tag, ValueKind::Long, 1, std::vector<std::int64_t>{iso}});
    return;
  }
  if (auto r = parse_rational_text(value)) {
    set.entries.push_back({IfdKind::Exif, tag, ValueKind::SRational, 1, std::vector<Rational>{*r}});
  } else if (auto v = parse_real_text(value)) {
    set.entries.push_back({IfdKind::Exif, tag, ValueKind::Double, 1, std::vector<double>{*v}});
  }
}

inline std::optional<std::string> scalar_text(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number()) return v.dump();
  if (v.is_object() && v.contains("_content")) return scalar_text(v["_content"]);
  return std::nullopt;
}

}  // namespace detail

/// Interprets a provider response body. Accepted shapes: raw TIFF/JPEG
/// bytes; {"exif": {"ExposureTime": "1/60", ...}}; or a Flickr-style
/// {"photo": {"exif": [{"tag": "ExposureTime", "raw": {"_content": "1/60"}}]}}.
/// A JSON body without camera-setting tags yields NotFound.
inline FetchResult interpret_provider_response(std::string_view body) {
  FetchResult out;
  const std::span<const std::uint8_t> bytes(reinterpret_cast<const std::uint8_t*>(body.data()), body.size());
  const bool binary = detail::is_tiff(bytes) || (bytes.size() >= 2 && bytes[0] == 0xFF && bytes[1] == 0xD8) ||
                      detail::starts_with(bytes, std::string_view("Exif\0\0", 6));
  if (binary) {
    try {
      auto payload = detail::starts_with(bytes, std::string_view("Exif\0\0", 6)) ? bytes.subspan(6) : bytes;
      auto tiff = extract_exif_segment(payload);
      out.tags = parse_tag_set(tiff);
      out.status = FetchStatus::Ok;
    } catch (const Error& e) {
      out.status = e.code() == ErrorCode::NoExifSegment ? FetchStatus::NotFound : FetchStatus::ProviderUnavailable;
      out.message = e.what();
    }
    return out;
  }

  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error&) {
    out.status = FetchStatus::ProviderUnavailable;
    out.message = "unrecognized provider response";
    return out;
  }

  RawTagSet set;
  if (doc.is_object() && doc.contains("exif") && doc["exif"].is_object()) {
    for (const auto& [name, value] : doc["exif"].items()) {
      auto tag = detail::tag_for_name(name);
      auto text = detail::scalar_text(value);
      if (tag && text) detail::add_text_tag(set, *tag, *text);
    }
  } else if (doc.is_object() && doc.contains("photo") && doc["photo"].is_object() && doc["photo"].contains("exif") &&
             doc["photo"]["exif"].is_array()) {
    for (const auto& item : doc["photo"]["exif"]) {
      if (!item.is_object() || !item.contains("tag") || !item["tag"].is_string()) continue;
      auto tag = detail::tag_for_name(item["tag"].get<std::string>());
      auto text = item.contains("raw") ? detail::scalar_text(item["raw"]) : std::nullopt;
      if (tag && text) detail::add_text_tag(set, *tag, *text);
    }
  }
  if (set.entries.empty()) {
    out.status = FetchStatus::NotFound;
    out.message = "provider has no EXIF for this image";
    return out;
  }
  out.status = FetchStatus::Ok;
  out.tags = std::move(set);
  return out;
}

/// Fetches per-image metadata through one rate limiter. Successful (HTTP
/// 200) responses are cached verbatim, one file per key, so later runs are
/// served offline.
class RemoteFetcher {
 public:
  RemoteFetcher(ProviderConfig config, std::filesystem::path cache_dir)
      : config_(std::move(config)), cache_dir_(std::move(cache_dir)) {
    if (config_.endpoint_template.rfind("http://", 0) != 0) {
      throw Error(ErrorCode::InvalidArgument, "endpoint template must start with http://");
    }
    if (!(config_.max_requests_per_second > 0)) {
      throw Error(ErrorCode::InvalidArgument, "rate ceiling must be positive");
    }
    std::filesystem::create_directories(cache_dir_);
    if (const char* cred = std::getenv(config_.credential_env.c_str())) credential_ = cred;
  }

  FetchResult fetch(std::string_view key) {
    const auto path = cache_path(key);
    if (std::filesystem::exists(path)) {
      FetchResult cached = interpret_provider_response(read_cache(path));
      cached.from_cache = true;
      return cached;
    }

    std::lock_guard lock(network_mutex_);
    // Another caller may have filled the entry while we waited.
    if (std::filesystem::exists(path)) {
      FetchResult cached = interpret_provider_response(read_cache(path));
      cached.from_cache = true;
      return cached;
    }

    const auto [base, target] = split_url(expand(key));
    for (int attempt = 0;; ++attempt) {
      wait_for_slot();
      ++requests_;
      httplib::Client client(base);
      client.set_connection_timeout(config_.timeout);
      client.set_read_timeout(config_.timeout);
      httplib::Headers headers;
      if (!credential_.empty() && config_.endpoint_template.find("{credential}") == std::string::npos) {
        headers.emplace("X-Api-Key", credential_);
      }
      auto res = client.Get(target, headers);
      if (!res) {
        return {FetchStatus::ProviderUnavailable, std::nullopt, false, "request failed: " + httplib::to_string(res.error())};
      }
      if (res->status == 200) {
        write_cache(path, res->body);
        return interpret_provider_response(res->body);
      }
      if (res->status == 404) return {FetchStatus::NotFound, std::nullopt, false, "provider returned 404"};
      if (res->status == 429) {
        if (attempt >= config_.max_retries) {
          return {FetchStatus::RateLimited, std::nullopt, false, "provider kept returning 429"};
        }
        retry_after_ = retry_delay(*res);
        continue;
      }
      return {FetchStatus::ProviderUnavailable, std::nullopt, false,
              "provider returned HTTP " + std::to_string(res->status)};
    }
  }

  /// Number of HTTP requests issued so far (cache hits excluded).
  std::size_t network_requests() const { return requests_.load(); }

  std::filesystem::path cache_path(std::string_view key) const {
    return cache_dir_ / (detail::percent_encode(key) + ".response");
  }

 private:
  using Clock = std::chrono::steady_clock;

  std::string expand(std::string_view key) const {
    std::string url = config_.endpoint_template;
    detail::replace_all(url, "{key}", detail::percent_encode(key));
    detail::replace_all(url, "{credential}", detail::percent_encode(credential_));
    return url;
  }

  static std::pair<std::string, std::string> split_url(const std::string& url) {
    const auto path_at = url.find('/', std::string_view("http://").size());
    if (path_at == std::string::npos) return {url, "/"};
    return {url.substr(0, path_at), url.substr(path_at)};
  }

  void wait_for_slot() {
    const auto interval = std::chrono::duration_cast<Clock::duration>(
        std::chrono::duration<double>(1.0 / config_.max_requests_per_second));
    auto now = Clock::now();
    auto slot = std::max(now, next_slot_);
    if (retry_after_) {
      slot = std::max(slot, now + *retry_after_);
      retry_after_.reset();
    }
    if (slot > now) std::this_thread::sleep_until(slot);
    next_slot_ = slot + interval;
  }

  Clock::duration retry_delay(const httplib::Response& res) const {
    long seconds = 1;
    if (res.has_header("Retry-After")) {
      const auto v = res.get_header_value("Retry-After");
      auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), seconds);
      if (ec != std::errc{} || seconds < 0) seconds = 1;
    }
    return std::min<Clock::duration>(std::chrono::seconds(seconds), config_.max_retry_after);
  }

  static std::string read_cache(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }

  // Write-then-rename keeps readers from ever seeing a partial entry.
  static void write_cache(const std::filesystem::path& path, const std::string& body) {
    auto tmp = path;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out.write(body.data(), static_cast<std::streamsize>(body.size()));
      if (!out) throw Error(ErrorCode::Io, "cannot write cache entry " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
  }

  ProviderConfig config_;
  std::filesystem::path cache_dir_;
  std::string credential_;
  std::mutex network_mutex_;
  std::atomic<std::size_t> requests_{0};
  Clock::time_point next_slot_{};
  std::optional<Clock::duration> retry_after_;
};

/// Fetches each key in order and normalizes the result. Keys double as
/// image ids. Anything short of Ok becomes a warning; the batch never stops
/// early.
inline std::vector<ExifRecord> fetch_remote_records(RemoteFetcher& fetcher, const std::vector<std::string>& keys,
                                                    Warnings& warnings) {
  std::vector<ExifRecord> out;
  for (const auto& key : keys) {
    FetchResult res = fetcher.fetch(key);
    if (res.status != FetchStatus::Ok || !res.tags) {
      warnings.push_back({key, "remote", std::string(to_string(res.status)) + ": " + res.message});
      continue;
    }
    out.push_back(to_exif_record(*res.tags, key, warnings));
  }
  return out;
}

}  // namespace capbias
