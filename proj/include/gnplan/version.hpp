#pragma once

namespace gnplan {

inline constexpr const char* kVersion = "0.1.0";

} // namespace gnplan
