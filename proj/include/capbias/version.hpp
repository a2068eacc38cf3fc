#pragma once

namespace capbias {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace capbias
