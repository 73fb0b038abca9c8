#pragma once

namespace advnas {

inline constexpr const char* kToolVersion = "0.1.0";

} // namespace advnas
