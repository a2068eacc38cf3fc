#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace capbias {

enum class ErrorCode {
  NotAnImage,
  NoExifSegment,
  MalformedHeader,
  TruncatedIfd,
  CyclicIfd,
  InvalidTagValue,
  MalformedDocument,
  DanglingReference,
  NonPositiveInput,
  Overflow,
  NonPositiveExposure,
  NonPositiveIso,
  NoPositives,
  ProviderUnavailable,
  RateLimited,
  NotFound,
  InvalidArgument,
  Io,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotAnImage: return "NotAnImage";
    case ErrorCode::NoExifSegment: return "NoExifSegment";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::TruncatedIfd: return "TruncatedIfd";
    case ErrorCode::CyclicIfd: return "CyclicIfd";
    case ErrorCode::InvalidTagValue: return "InvalidTagValue";
    case ErrorCode::MalformedDocument: return "MalformedDocument";
    case ErrorCode::DanglingReference: return "DanglingReference";
    case ErrorCode::NonPositiveInput: return "NonPositiveInput";
    case ErrorCode::Overflow: return "Overflow";
    case ErrorCode::NonPositiveExposure: return "NonPositiveExposure";
    case ErrorCode::NonPositiveIso: return "NonPositiveIso";
    case ErrorCode::NoPositives: return "NoPositives";
    case ErrorCode::ProviderUnavailable: return "ProviderUnavailable";
    case ErrorCode::RateLimited: return "RateLimited";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

/// Exception type for every fatal condition raised by the library.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Non-fatal diagnostic. Corpus-level operations collect these instead of
/// aborting; the report summarizes them by reason.
struct Warning {
  std::string image_id;
  std::string field;
  std::string reason;

  bool operator==(const Warning&) const = default;
};

using Warnings = std::vector<Warning>;

}  // namespace capbias
