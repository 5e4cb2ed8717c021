#pragma once

namespace nlslab {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace nlslab
