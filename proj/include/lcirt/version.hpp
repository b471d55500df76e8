#pragma once

namespace lcirt {
inline constexpr const char* kVersion = "0.1.0";
}
