#pragma once

namespace sgen {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace sgen
