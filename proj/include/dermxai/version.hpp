#pragma once

namespace dermxai {
inline constexpr const char* kVersion = "0.1.0";
}
