#pragma once

namespace gyroid {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace gyroid
