#pragma once

namespace hypgen {
inline constexpr const char* kToolVersion = "hypgen 0.1.0";
}
